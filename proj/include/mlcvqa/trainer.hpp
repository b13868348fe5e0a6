#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlcvqa/features.hpp"
#include "mlcvqa/model.hpp"
#include "mlcvqa/rank_metrics.hpp"
#include "mlcvqa/subjective.hpp"

namespace mlcvqa {

struct TrainConfig {
  std::size_t batch_size = 32;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_lr = 4e-4;
  std::size_t warmup_epochs = 10;
  std::size_t epochs_after_warmup = 200;
  std::uint64_t seed = 0;
  /// Draw the full sequence or one of its even/odd halves each epoch.
  bool temporal_subsample = false;
  /// Draw one of a sample's feature variants each epoch instead of the
  /// unaugmented one.
  bool use_augmented_variants = false;
  /// Weight decay applied as lr * wd * theta (AdamW). When false, wd * theta
  /// is added to the gradient instead.
  bool decoupled_weight_decay = true;
  bool shuffle = true;
  unsigned workers = 1;

  std::size_t total_epochs() const { return warmup_epochs + epochs_after_warmup; }
  void validate() const;
};

/// Linear warmup to max_lr over the warmup epochs, then cosine decay to 0 at
/// the final step.
double lr_schedule(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg);

/// One (clip, codec) pair. variants[0] is the unaugmented input; further
/// entries are augmented versions of the same pair.
struct TrainingSample {
  std::string clip_id;
  std::string codec_id;
  std::vector<FeatureMatrix> variants;
  double dmos = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_rmse;
  double lr = 0.0;
};

struct TrainResult {
  QualityModel<double> model;
  std::vector<EpochRecord> history;
};

/// Raised when the loss becomes non-finite; the message carries the epoch,
/// batch and parameter norm.
class TrainingError : public Error {
 public:
  using Error::Error;
};

/// Adam state: first and second moments shaped like the model.
struct AdamState {
  QualityModel<double> m;
  QualityModel<double> v;
  std::uint64_t step = 0;

  static AdamState for_model(const QualityModel<double>& model);
};

/// One Adam update with the given learning rate.
void adam_step(QualityModel<double>& model, const QualityModel<double>& grad, AdamState& state, double lr,
               const TrainConfig& cfg);

TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  std::uint64_t model_init_seed, std::span<const TrainingSample> validation = {});

/// Scores of the unaugmented variant of each sample.
std::vector<double> predict_scores(const QualityModel<double>& model, std::span<const TrainingSample> samples,
                                   unsigned workers = 1);

struct FoldSplit {
  std::size_t fold_index = 0;
  std::vector<std::string> train_video_ids;
  std::vector<std::string> test_video_ids;
};

/// Seeded shuffle of the (sorted, unique) video ids, then near-equal
/// contiguous partition into k test sets.
std::vector<FoldSplit> make_folds(std::span<const std::string> video_ids, std::size_t k, std::uint64_t seed);

/// Produces scores for `test` after fitting on `train`. The default trains
/// the quality head.
using FoldPredictor = std::function<std::vector<double>(std::span<const TrainingSample> train,
                                                        std::span<const TrainingSample> test, std::size_t fold)>;

struct CrossvalConfig {
  std::size_t folds = 5;
  TrainConfig train;
  ModelConfig model;
  EvalOptions eval;
};

struct CrossvalResult {
  std::vector<FoldSplit> folds;
  EvaluationResult evaluation;
  std::vector<PredictionRecord> predictions;
  std::vector<std::vector<EpochRecord>> histories;
};

/// k-fold cross-validation split by source video. Targets come from
/// `subjective` (the dmos field of the samples is ignored).
CrossvalResult crossval(std::span<const TrainingSample> pairs, std::span<const ClipScore> subjective,
                        const CrossvalConfig& cfg, FoldPredictor predictor = {});

}  // namespace mlcvqa
