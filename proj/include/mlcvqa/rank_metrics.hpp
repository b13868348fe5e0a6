#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlcvqa/subjective.hpp"

namespace mlcvqa {

/// A correlation that may be undefined (constant or all-tied input). An
/// undefined value is never reported as 0.
using Correlation = std::optional<double>;

using VectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Sample Pearson correlation.
Correlation pcc(const VectorRef& a, const VectorRef& b);

/// 1-based ranks with ties sharing the average rank. With `descending` the
/// largest value gets rank 1.
Eigen::VectorXd average_ranks(const VectorRef& values, bool descending = false);

/// Spearman correlation: Pearson correlation of tie-averaged ranks.
Correlation srcc(const VectorRef& a, const VectorRef& b);

/// Pair counts behind Kendall's tau-b. `tied_a` and `tied_b` include pairs
/// tied on both sides.
struct KendallCounts {
  std::int64_t pairs = 0;
  std::int64_t concordant_minus_discordant = 0;
  std::int64_t tied_a = 0;
  std::int64_t tied_b = 0;
};

/// O(n log n) pair counting (Knight's merge-sort method).
KendallCounts kendall_counts(const VectorRef& a, const VectorRef& b);

/// tau-b from pair counts; undefined when either side is entirely tied.
Correlation tau_b_from_counts(const KendallCounts& counts);

Correlation tau_b(const VectorRef& a, const VectorRef& b);

double rmse(const VectorRef& a, const VectorRef& b);

/// An item with a subjective score and its 95% CI half width.
struct ScoredItem {
  std::string id;
  double dmos = 0.0;
  double ci95_half_width = 0.0;
};

struct RankedItem {
  std::string id;
  double rank = 0.0;
};

/// Items in descending DMOS order; tied items share the average rank.
using RankedList = std::vector<RankedItem>;

std::string item_key(const std::string& clip_id, const std::string& codec_id);
std::vector<ScoredItem> scored_items(std::span<const ClipScore> scores);
std::vector<ScoredItem> scored_items(std::span<const ModelScore> scores);

/// Ranks items by DMOS (highest first) and merges neighbours into tie groups:
/// walking the sorted list, an item joins the current group when its DMOS
/// lies inside the CI of the group's first item or that item's DMOS lies
/// inside its own CI. Equal DMOS values are ordered by id.
RankedList ci_tie_ranking(std::span<const ScoredItem> items);

struct PredictedItem {
  std::string id;
  double score = 0.0;
};

/// Kendall tau-b between the CI-tied subjective ranking and the plain
/// tie-averaged ranking of the predictions. Item sets must match.
Correlation tau_b_95(std::span<const ScoredItem> subjective, std::span<const PredictedItem> predictions);

enum class MetricLevel { clip, model };
enum class RescaleMode { none, minmax, fit };

const char* to_string(MetricLevel level);
const char* to_string(RescaleMode mode);
RescaleMode parse_rescale_mode(const std::string& text);

struct MetricReport {
  MetricLevel level = MetricLevel::clip;
  Correlation pcc;
  Correlation srcc;
  Correlation tau_b;
  Correlation tau_b_95;
  double rmse = 0.0;
  std::size_t n_items = 0;
};

/// Metrics of predicted scores against subjective scores (which carry the
/// CIs used by tau_b_95). `rmse_predictions` is the prediction vector on the
/// DMOS scale; it defaults to `predicted`.
MetricReport compare(MetricLevel level, std::span<const ScoredItem> subjective,
                     const VectorRef& predicted, const std::optional<Eigen::VectorXd>& rmse_predictions = {});

struct PredictionRecord {
  std::string clip_id;
  std::string codec_id;
  double score = 0.0;
};

std::vector<PredictionRecord> read_predictions(const std::string& path);
void write_predictions(std::span<const PredictionRecord> predictions, const std::string& path);

struct EvalOptions {
  /// How predictions are put on the DMOS scale before RMSE.
  RescaleMode rescale = RescaleMode::none;
  double lo = 1.0;
  double hi = 9.0;
};

struct EvaluationResult {
  MetricReport clip;
  MetricReport model;
  std::vector<MetricReport> clip_folds;
  std::vector<MetricReport> model_folds;
  RescaleMode rmse_scale = RescaleMode::none;
};

/// Test-set clip ids of each fold. An empty list means one fold holding
/// every clip of the subjective data.
using FoldAssignment = std::vector<std::vector<std::string>>;

/// Clip- and model-level evaluation per fold, then averaged across folds.
/// Every (clip, codec) pair of a fold needs a prediction; predictions for
/// pairs without subjective data are an error.
EvaluationResult evaluate(std::span<const PredictionRecord> predictions, std::span<const ClipScore> subjective,
                          const FoldAssignment& folds = {}, const EvalOptions& options = {});

/// Mean across reports; a metric undefined in any report stays undefined.
MetricReport average_reports(std::span<const MetricReport> reports);

struct SignificanceResult {
  double mean_difference = 0.0;  // mean(errors_a - errors_b)
  double p_value = 1.0;          // two-sided
  bool significant_95 = false;
  bool significant_90 = false;
  std::size_t reps = 0;
};

/// Paired bootstrap over items of the mean error difference. Each
/// repetition draws from its own seed-derived stream, so the result does not
/// depend on `workers`.
SignificanceResult paired_significance(const VectorRef& errors_a, const VectorRef& errors_b,
                                       std::size_t reps, std::uint64_t seed, unsigned workers = 1);

}  // namespace mlcvqa
