#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace mlcvqa {

/// One vote on the 9-point degradation category scale.
struct RatingRecord {
  std::string clip_id;
  std::string codec_id;
  std::string rater_id;
  int score = 0;
};

struct ClipScore {
  std::string clip_id;
  std::string codec_id;
  double dmos = 0.0;
  double ci95_half_width = 0.0;
  std::size_t n_votes = 0;
};

struct ModelScore {
  std::string codec_id;
  double dmos = 0.0;
  double ci95_half_width = 0.0;
  std::size_t n_votes = 0;
};

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 9;

/// Two-sided 95% Student-t quantile t_{0.975, dof}.
double t_quantile_975(std::size_t dof);

/// Sample mean and t-interval half width, 0 for a single value.
struct MeanInterval {
  double mean = 0.0;
  double half_width = 0.0;
};
MeanInterval mean_ci95(std::span<const double> values);

std::vector<RatingRecord> read_ratings(const std::filesystem::path& path);

/// DMOS and 95% CI of the votes of one (clip, codec) pair.
ClipScore aggregate_clip(std::span<const RatingRecord> votes);

/// Groups votes by (clip, codec), sorted by (clip_id, codec_id).
std::vector<ClipScore> aggregate_clips(std::span<const RatingRecord> votes);

/// Model-level score of one codec: mean of its clip DMOS values with a
/// t-interval across clips. `expected_clips` lists the clips every codec must
/// cover; n_votes is the number of raw votes pooled for the codec.
ModelScore aggregate_model(std::span<const ClipScore> clip_scores, std::span<const RatingRecord> raw_votes,
                           std::span<const std::string> expected_clips);

/// All codecs at once; the expected clip set is the union over codecs.
/// Sorted by codec_id.
std::vector<ModelScore> aggregate_models(std::span<const ClipScore> clip_scores,
                                         std::span<const RatingRecord> raw_votes);

/// Affine map of the observed [min, max] onto [lo, hi].
Eigen::VectorXd rescale_linear(const Eigen::Ref<const Eigen::VectorXd>& values, double lo, double hi);

/// Least-squares affine fit a*values + b against targets.
Eigen::VectorXd rescale_fit(const Eigen::Ref<const Eigen::VectorXd>& values,
                            const Eigen::Ref<const Eigen::VectorXd>& targets);

void write_clip_scores(std::span<const ClipScore> scores, const std::filesystem::path& path);
std::vector<ClipScore> read_clip_scores(const std::filesystem::path& path);
void write_model_scores(std::span<const ModelScore> scores, const std::filesystem::path& path);

}  // namespace mlcvqa
