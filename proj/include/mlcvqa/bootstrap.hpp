#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mlcvqa/rank_metrics.hpp"
#include "mlcvqa/subjective.hpp"

namespace mlcvqa {

/// How model-level subsets are drawn.
enum class ModelSampling {
  pooled,      // N votes from all votes of the codec
  stratified,  // N votes from each clip of the codec, then mean of clip means
};

struct BootstrapOptions {
  std::size_t reps = 200;
  std::uint64_t seed = 0;
  ModelSampling model_sampling = ModelSampling::pooled;
  /// Replace sampling by the full vote lists (sanity check: every
  /// repetition then reproduces the full-data scores exactly).
  bool degenerate = false;
  unsigned workers = 1;
};

/// One MetricReport per repetition: DMOS from N resampled votes per item
/// compared against DMOS (and CIs) from all votes.
std::vector<MetricReport> bootstrap_votes(std::span<const RatingRecord> ratings, std::size_t n_votes,
                                          MetricLevel level, const BootstrapOptions& options);

enum class MetricName { pcc, srcc, tau_b, tau_b_95, rmse };
inline constexpr std::array<MetricName, 5> kAllMetrics = {MetricName::pcc, MetricName::srcc, MetricName::tau_b,
                                                          MetricName::tau_b_95, MetricName::rmse};
const char* to_string(MetricName name);

/// Mean and 2.5/97.5 percentiles across repetitions, ignoring repetitions
/// where the metric is undefined. All NaN when no repetition defines it.
struct MetricSummary {
  double mean = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
  std::size_t defined = 0;
};

using MetricSummaries = std::array<MetricSummary, kAllMetrics.size()>;

MetricSummaries summarize_reports(std::span<const MetricReport> reports);

struct BootstrapCurve {
  MetricLevel level = MetricLevel::clip;
  std::vector<std::size_t> n_votes;
  std::vector<MetricSummaries> metrics;  // parallel to n_votes
};

BootstrapCurve bootstrap_curve(std::span<const RatingRecord> ratings, std::span<const std::size_t> n_votes,
                               MetricLevel level, const BootstrapOptions& options);

/// CSV `level,n_votes,metric,mean,ci95_lo,ci95_hi`.
void write_bootstrap_csv(std::span<const BootstrapCurve> curves, const std::filesystem::path& path);

/// Expected accuracy of a hypothetical objective model whose error equals the
/// sampling error of DMOS at the given vote counts.
struct UpperLimit {
  MetricSummaries clip;
  MetricSummaries model;
};

UpperLimit upper_limit(std::span<const RatingRecord> ratings, std::size_t n_clip_votes, std::size_t n_model_votes,
                       const BootstrapOptions& options);

}  // namespace mlcvqa
