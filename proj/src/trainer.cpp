#include "mlcvqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace mlcvqa {
namespace {

std::vector<std::span<double>> tensor_spans(QualityModel<double>& model) {
  std::vector<std::span<double>> out;
  model.for_each_tensor([&](auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

std::vector<std::span<const double>> tensor_spans(const QualityModel<double>& model) {
  std::vector<std::span<const double>> out;
  model.for_each_tensor([&](const auto& t) { out.emplace_back(t.data(), static_cast<std::size_t>(t.size())); });
  return out;
}

FeatureMatrix rows_with_parity(const FeatureMatrix& x, Eigen::Index parity) {
  const Eigen::Index t = x.rows();
  FeatureMatrix out((t - parity + 1) / 2, x.cols());
  for (Eigen::Index r = parity, i = 0; r < t; r += 2, ++i) out.row(i) = x.row(r);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch size must be positive");
  if (max_lr < 0.0 || weight_decay < 0.0 || eps <= 0.0) throw InvalidArgument("invalid optimizer constants");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw InvalidArgument("Adam betas must lie in [0, 1)");
  if (total_epochs() < 1) throw InvalidArgument("training needs at least one epoch");
}

double lr_schedule(std::size_t step, std::size_t steps_per_epoch, const TrainConfig& cfg) {
  const std::size_t warmup_steps = cfg.warmup_epochs * steps_per_epoch;
  if (step < warmup_steps) {
    return cfg.max_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::size_t decay_steps = cfg.epochs_after_warmup * steps_per_epoch;
  if (decay_steps <= 1) return decay_steps == 1 && step == warmup_steps ? cfg.max_lr : 0.0;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps - 1));
  return cfg.max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamState AdamState::for_model(const QualityModel<double>& model) {
  return {QualityModel<double>::zeros(model.config), QualityModel<double>::zeros(model.config), 0};
}

void adam_step(QualityModel<double>& model, const QualityModel<double>& grad, AdamState& state, double lr,
               const TrainConfig& cfg) {
  ++state.step;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto params = tensor_spans(model);
  const auto grads = tensor_spans(grad);
  auto ms = tensor_spans(state.m);
  auto vs = tensor_spans(state.v);
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto p = params[t];
    const auto g = grads[t];
    auto m = ms[t];
    auto v = vs[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double gi = g[i];
      if (!cfg.decoupled_weight_decay) gi += cfg.weight_decay * p[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double update = (m[i] / bias1) / (std::sqrt(v[i] / bias2) + cfg.eps);
      const double decay = cfg.decoupled_weight_decay ? cfg.weight_decay * p[i] : 0.0;
      p[i] -= lr * (update + decay);
    }
  }
}

std::vector<double> predict_scores(const QualityModel<double>& model, std::span<const TrainingSample> samples,
                                   unsigned workers) {
  std::vector<double> out(samples.size());
  parallel_for(samples.size(), workers, [&](std::size_t i) {
    if (samples[i].variants.empty()) throw InvalidArgument("sample " + samples[i].clip_id + " has no features");
    out[i] = forward(model, samples[i].variants.front()).score;
  });
  return out;
}

TrainResult train(std::span<const TrainingSample> dataset, const TrainConfig& cfg, const ModelConfig& model_cfg,
                  std::uint64_t model_init_seed, std::span<const TrainingSample> validation) {
  cfg.validate();
  model_cfg.validate();
  if (dataset.empty()) throw InvalidArgument("training set is empty");
  for (const auto& s : dataset) {
    if (s.variants.empty()) throw InvalidArgument("sample " + s.clip_id + "/" + s.codec_id + " has no features");
    for (const auto& v : s.variants) {
      if (v.cols() != model_cfg.input_dim) {
        throw InvalidArgument("sample " + s.clip_id + "/" + s.codec_id + " has " + std::to_string(v.cols()) +
                              " features, model expects " + std::to_string(model_cfg.input_dim));
      }
    }
    if (!std::isfinite(s.dmos)) throw InvalidArgument("non-finite target for " + s.clip_id + "/" + s.codec_id);
  }

  TrainResult result{init_model<double>(model_cfg, model_init_seed), {}};
  AdamState adam = AdamState::for_model(result.model);
  const std::size_t n = dataset.size();
  const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<std::size_t> order(n);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.total_epochs(); ++epoch) {
    Rng rng = make_rng(cfg.seed, epoch + 1);
    std::iota(order.begin(), order.end(), 0);
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);

    // One draw per pair and epoch: a variant, then optionally a temporal half.
    std::vector<FeatureMatrix> drawn_storage;
    drawn_storage.reserve(n);
    std::vector<const FeatureMatrix*> drawn(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& sample = dataset[order[i]];
      std::size_t variant = 0;
      if (cfg.use_augmented_variants && sample.variants.size() > 1) {
        variant = std::uniform_int_distribution<std::size_t>(0, sample.variants.size() - 1)(rng);
      }
      const FeatureMatrix& x = sample.variants[variant];
      drawn[i] = &x;
      if (cfg.temporal_subsample && x.rows() >= 2) {
        const auto pick = std::uniform_int_distribution<int>(0, 2)(rng);
        if (pick > 0) {
          drawn_storage.push_back(rows_with_parity(x, pick - 1));
          drawn[i] = &drawn_storage.back();
        }
      }
    }

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(n, begin + cfg.batch_size);
      std::vector<const FeatureMatrix*> xs(drawn.begin() + static_cast<std::ptrdiff_t>(begin),
                                           drawn.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<double> ys;
      ys.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) ys.push_back(dataset[order[i]].dmos);

      const auto lg = batch_gradient(result.model, xs, ys, cfg.workers);
      if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << b << " (parameter norm "
            << std::sqrt(result.model.squared_norm()) << ")";
        throw TrainingError(msg.str());
      }
      lr = lr_schedule(step, steps_per_epoch, cfg);
      adam_step(result.model, lg.grad, adam, lr, cfg);
      loss_sum += lg.loss * static_cast<double>(end - begin);
      ++step;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(n);
    record.lr = lr;
    if (!validation.empty()) {
      const auto scores = predict_scores(result.model, validation, cfg.workers);
      double ss = 0.0;
      for (std::size_t i = 0; i < scores.size(); ++i) {
        ss += (scores[i] - validation[i].dmos) * (scores[i] - validation[i].dmos);
      }
      record.val_rmse = std::sqrt(ss / static_cast<double>(scores.size()));
    }
    result.history.push_back(record);
  }
  return result;
}

std::vector<FoldSplit> make_folds(std::span<const std::string> video_ids, std::size_t k, std::uint64_t seed) {
  std::vector<std::string> ids(video_ids.begin(), video_ids.end());
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw InvalidArgument("duplicate video id");
  if (k < 2) throw InvalidArgument("cross-validation needs at least 2 folds");
  if (k > ids.size()) {
    throw InvalidArgument(std::to_string(k) + " folds requested for " + std::to_string(ids.size()) + " videos");
  }
  Rng rng = make_rng(seed, 0);
  std::shuffle(ids.begin(), ids.end(), rng);

  std::vector<FoldSplit> folds(k);
  const std::size_t base = ids.size() / k;
  const std::size_t extra = ids.size() % k;
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].fold_index = f;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      (i >= start && i < start + size ? folds[f].test_video_ids : folds[f].train_video_ids).push_back(ids[i]);
    }
    std::sort(folds[f].test_video_ids.begin(), folds[f].test_video_ids.end());
    std::sort(folds[f].train_video_ids.begin(), folds[f].train_video_ids.end());
    start += size;
  }
  return folds;
}

CrossvalResult crossval(std::span<const TrainingSample> pairs, std::span<const ClipScore> subjective,
                        const CrossvalConfig& cfg, FoldPredictor predictor) {
  std::map<std::string, double> targets;
  for (const auto& s : subjective) targets[item_key(s.clip_id, s.codec_id)] = s.dmos;
  std::set<std::string> videos;
  std::set<std::string> covered;
  std::vector<TrainingSample> samples(pairs.begin(), pairs.end());
  for (auto& s : samples) {
    const auto key = item_key(s.clip_id, s.codec_id);
    const auto it = targets.find(key);
    if (it == targets.end()) throw InvalidArgument("features for " + key + " have no subjective score");
    if (!covered.insert(key).second) throw InvalidArgument("duplicate features for " + key);
    s.dmos = it->second;
    videos.insert(s.clip_id);
  }
  for (const auto& [key, dmos] : targets) {
    if (!covered.contains(key)) throw InvalidArgument("subjective score for " + key + " has no features");
  }

  CrossvalResult result;
  if (!predictor) {
    predictor = [&cfg, &result](std::span<const TrainingSample> train_set, std::span<const TrainingSample> test_set,
                       std::size_t fold) {
      TrainConfig tc = cfg.train;
      tc.seed = mix_seed(cfg.train.seed, fold + 1);
      const auto trained = train(train_set, tc, cfg.model, mix_seed(cfg.train.seed, 1000 + fold));
      result.histories.push_back(trained.history);
      return predict_scores(trained.model, test_set, tc.workers);
    };
  }

  const std::vector<std::string> video_list(videos.begin(), videos.end());
  result.folds = make_folds(video_list, cfg.folds, cfg.train.seed);
  FoldAssignment assignment;
  for (const auto& fold : result.folds) {
    const std::set<std::string> test_ids(fold.test_video_ids.begin(), fold.test_video_ids.end());
    std::vector<TrainingSample> train_set, test_set;
    for (const auto& s : samples) (test_ids.contains(s.clip_id) ? test_set : train_set).push_back(s);
    const auto scores = predictor(train_set, test_set, fold.fold_index);
    if (scores.size() != test_set.size()) throw InvalidArgument("predictor returned the wrong number of scores");
    for (std::size_t i = 0; i < test_set.size(); ++i) {
      result.predictions.push_back({test_set[i].clip_id, test_set[i].codec_id, scores[i]});
    }
    assignment.push_back(fold.test_video_ids);
  }
  result.evaluation = evaluate(result.predictions, subjective, assignment, cfg.eval);
  return result;
}

}  // namespace mlcvqa
