#include "mlcvqa/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mlcvqa/bootstrap.hpp"
#include "mlcvqa/features.hpp"
#include "mlcvqa/frame_metrics.hpp"
#include "mlcvqa/model.hpp"
#include "mlcvqa/rank_metrics.hpp"
#include "mlcvqa/subjective.hpp"
#include "mlcvqa/trainer.hpp"
#include "mlcvqa/y4m.hpp"

namespace mlcvqa::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

LogLevel log_level() {
  const char* env = std::getenv("VQA_LOG");
  if (!env) return LogLevel::warn;
  const std::string v = env;
  if (v == "error") return LogLevel::error;
  if (v == "info") return LogLevel::info;
  if (v == "debug") return LogLevel::debug;
  return LogLevel::warn;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  LogLevel level = log_level();
  std::uint64_t seed = 0;
  unsigned workers = 1;
  fs::path out_dir;

  void log(LogLevel at, const std::string& message) const {
    if (at <= level) {
      static constexpr const char* names[] = {"error", "warn", "info", "debug"};
      err << "[" << names[static_cast<int>(at)] << "] " << message << '\n';
    }
  }
};

json correlation_json(const Correlation& c) { return c ? json(*c) : json(nullptr); }

json report_json(const MetricReport& r) {
  return {{"level", to_string(r.level)},    {"pcc", correlation_json(r.pcc)},
          {"srcc", correlation_json(r.srcc)}, {"tau_b", correlation_json(r.tau_b)},
          {"tau_b_95", correlation_json(r.tau_b_95)}, {"rmse", r.rmse},
          {"n_items", r.n_items}};
}

json evaluation_json(const EvaluationResult& e) {
  json folds = json::array();
  for (std::size_t f = 0; f < e.clip_folds.size(); ++f) {
    folds.push_back({{"fold", f}, {"clip", report_json(e.clip_folds[f])}, {"model", report_json(e.model_folds[f])}});
  }
  return {{"rmse_scale", to_string(e.rmse_scale)},
          {"clip", report_json(e.clip)},
          {"model", report_json(e.model)},
          {"folds", folds}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
  if (!f) throw Error("write failed for " + path.string());
}

std::string fmt(const Correlation& c) {
  if (!c) return "undefined";
  std::ostringstream ss;
  ss.precision(4);
  ss << std::fixed << *c;
  return ss.str();
}

void require_file(const std::string& path, const std::string& flag) {
  if (!fs::is_regular_file(path)) throw InvalidArgument(flag + ": no such file: " + path);
}

std::vector<std::size_t> parse_counts(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    long long value = 0;
    try {
      value = std::stoll(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || value < 1) throw InvalidArgument("invalid vote count '" + item + "'");
    out.push_back(static_cast<std::size_t>(value));
  }
  if (out.empty()) throw InvalidArgument("no vote counts given");
  return out;
}

// Training manifest: entries of (clip_id, codec_id, variant, feature_path, dmos).
struct ManifestEntry {
  std::string clip_id;
  std::string codec_id;
  std::string variant;
  fs::path feature_path;
  std::optional<double> dmos;
};

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const json& list = doc.is_object() && doc.contains("entries") ? doc["entries"] : doc;
  if (!list.is_array()) throw ParseError(path.string() + ": expected an array of entries");
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& e = list[i];
    try {
      ManifestEntry m;
      m.clip_id = e.at("clip_id").get<std::string>();
      m.codec_id = e.at("codec_id").get<std::string>();
      m.variant = e.value("variant", std::string("none"));
      m.feature_path = e.at("feature_path").get<std::string>();
      if (m.feature_path.is_relative()) m.feature_path = path.parent_path() / m.feature_path;
      if (e.contains("dmos") && !e["dmos"].is_null()) m.dmos = e["dmos"].get<double>();
      out.push_back(std::move(m));
    } catch (const json::exception& ex) {
      throw ParseError(path.string() + ": entry " + std::to_string(i) + ": " + ex.what());
    }
  }
  for (const auto& m : out) require_file(m.feature_path.string(), "manifest " + path.string());
  return out;
}

// Groups manifest entries by pair; the "none" variant (or the first in name
// order) becomes variants[0].
std::vector<TrainingSample> load_samples(const std::vector<ManifestEntry>& entries, bool need_dmos) {
  std::map<std::pair<std::string, std::string>, std::map<std::string, const ManifestEntry*>> grouped;
  for (const auto& e : entries) {
    if (!grouped[{e.clip_id, e.codec_id}].emplace(e.variant, &e).second) {
      throw InvalidArgument("manifest lists " + item_key(e.clip_id, e.codec_id) + " variant " + e.variant + " twice");
    }
  }
  std::vector<TrainingSample> samples;
  for (const auto& [key, variants] : grouped) {
    TrainingSample s;
    s.clip_id = key.first;
    s.codec_id = key.second;
    std::vector<const ManifestEntry*> ordered;
    if (auto it = variants.find("none"); it != variants.end()) ordered.push_back(it->second);
    for (const auto& [name, e] : variants) {
      if (name != "none") ordered.push_back(e);
    }
    std::optional<double> dmos;
    for (const auto* e : ordered) {
      const FeatureSequence seq = read_features(e->feature_path);
      if (seq.variant != e->variant) {
        throw InvalidArgument(e->feature_path.string() + " holds variant '" + seq.variant + "', manifest says '" +
                              e->variant + "'");
      }
      s.variants.push_back(seq.data);
      if (e->dmos) dmos = e->dmos;
    }
    if (need_dmos && !dmos) throw InvalidArgument("manifest entry " + item_key(s.clip_id, s.codec_id) + " lacks dmos");
    s.dmos = dmos.value_or(0.0);
    samples.push_back(std::move(s));
  }
  return samples;
}

struct TrainFlags {
  std::size_t batch_size = 32;
  double weight_decay = 1e-4;
  double max_lr = 4e-4;
  std::size_t warmup_epochs = 10;
  std::size_t epochs_after_warmup = 200;
  long long proj_dim = 128;
  long long mlp_hidden = 64;
  bool temporal_subsample = false;
  bool augmented_variants = false;
  bool coupled_weight_decay = false;

  void add(CLI::App* app) {
    app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "Weight decay")->capture_default_str();
    app->add_option("--max-lr", max_lr, "Peak learning rate")->capture_default_str();
    app->add_option("--warmup-epochs", warmup_epochs, "Linear warmup epochs")->capture_default_str();
    app->add_option("--epochs", epochs_after_warmup, "Cosine-decay epochs after warmup")->capture_default_str();
    app->add_option("--proj-dim", proj_dim, "Projection / conv channel width")->capture_default_str();
    app->add_option("--mlp-hidden", mlp_hidden, "Hidden width of the per-step MLP")->capture_default_str();
    app->add_flag("--temporal-subsample", temporal_subsample, "Train on random even/odd temporal halves");
    app->add_flag("--augmented-variants", augmented_variants, "Draw a random feature variant per pair and epoch");
    app->add_flag("--coupled-weight-decay", coupled_weight_decay, "Add weight decay to the gradient (L2)");
  }

  TrainConfig config(const Context& ctx) const {
    TrainConfig c;
    c.batch_size = batch_size;
    c.weight_decay = weight_decay;
    c.max_lr = max_lr;
    c.warmup_epochs = warmup_epochs;
    c.epochs_after_warmup = epochs_after_warmup;
    c.temporal_subsample = temporal_subsample;
    c.use_augmented_variants = augmented_variants;
    c.decoupled_weight_decay = !coupled_weight_decay;
    c.seed = mix_seed(ctx.seed, 1);
    c.workers = ctx.workers;
    return c;
  }

  ModelConfig model(Eigen::Index input_dim) const {
    ModelConfig m;
    m.input_dim = input_dim;
    m.proj_dim = proj_dim;
    m.mlp_hidden = mlp_hidden;
    return m;
  }
};

void write_history(const std::vector<EpochRecord>& history, const fs::path& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << "epoch,train_loss,val_rmse,lr\n";
  for (const auto& r : history) {
    f << r.epoch << ',' << csv::format_double(r.train_loss) << ','
      << (r.val_rmse ? csv::format_double(*r.val_rmse) : std::string()) << ',' << csv::format_double(r.lr) << '\n';
  }
  if (!f) throw Error("write failed for " + path.string());
}

std::vector<ClipScore> subjective_scores(const std::string& ratings, const std::string& scores) {
  if (!ratings.empty()) {
    require_file(ratings, "--ratings");
    return aggregate_clips(read_ratings(ratings));
  }
  require_file(scores, "--scores");
  return read_clip_scores(scores);
}

FoldAssignment read_fold_assignment(const std::string& path) {
  require_file(path, "--folds");
  std::ifstream in(path);
  json doc;
  try {
    doc = json::parse(in);
    FoldAssignment out;
    const json& folds = doc.is_object() ? doc.at("folds") : doc;
    for (const auto& fold : folds) {
      const json& ids = fold.is_object() ? fold.at("test_video_ids") : fold;
      out.push_back(ids.get<std::vector<std::string>>());
    }
    return out;
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

json folds_json(const std::vector<FoldSplit>& folds) {
  json list = json::array();
  for (const auto& f : folds) {
    list.push_back({{"fold_index", f.fold_index}, {"train_video_ids", f.train_video_ids},
                    {"test_video_ids", f.test_video_ids}});
  }
  return {{"folds", list}};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err, log_level(), 0, 1, {}};
  CLI::App app{"Full-reference video quality assessment toolkit for ML video codecs", "mlcvqa"};
  app.require_subcommand(1, 1);
  std::string out_dir;
  app.add_option("--seed", ctx.seed, "Root seed; every random stream is derived from it")->capture_default_str();
  app.add_option("--workers", ctx.workers, "Worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::Range(1u, 1024u));

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", ctx.seed, "Root seed")->capture_default_str();
    sub->add_option("--workers", ctx.workers, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 1024u));
  };

  std::function<std::string()> action;

  // metrics
  std::string ref_path, dist_path, external_path, clip_id, variant = "none";
  auto* metrics = app.add_subcommand("metrics", "Per-frame PSNR/SSIM/MS-SSIM/SI/TI matrix of a clip pair");
  add_common(metrics);
  metrics->add_option("--ref", ref_path, "Reference Y4M")->required();
  metrics->add_option("--dist", dist_path, "Distorted Y4M")->required();
  metrics->add_option("--external", external_path, "External per-frame metric CSV (VIF/ADM/motion)");
  metrics->add_option("--clip-id", clip_id, "Clip identifier recorded in the output");
  metrics->add_option("--variant", variant, "Augmentation variant of the frames")->capture_default_str();
  metrics->callback([&] {
    action = [&] {
      require_file(ref_path, "--ref");
      require_file(dist_path, "--dist");
      std::optional<ExternalMetricTable> external;
      if (!external_path.empty()) {
        require_file(external_path, "--external");
        external = read_external_metrics(external_path);
      }
      const VideoClip ref = load_y4m(ref_path);
      const VideoClip dist = load_y4m(dist_path);
      FrameMetricMatrix fm = frame_metric_matrix(ref, dist, external, ctx.workers);
      fm.clip_id = clip_id.empty() ? fs::path(dist_path).stem().string() : clip_id;
      fm.variant = variant;
      if (fm.external_missing) ctx.log(LogLevel::warn, "no external metric table; VIF/ADM/motion channels are zero");
      write_frame_metrics(fm, ctx.out_dir / "frame_metrics.csv");
      double raw_psnr_sum = 0.0;
      bool psnr_infinite = false;
      for (std::size_t i = 0; i < ref.frames.size(); ++i) {
        const double p = psnr(ref.frames[i], dist.frames[i], ref.pixel_format);
        if (std::isinf(p)) psnr_infinite = true;
        raw_psnr_sum += p;
      }
      json summary = {{"clip_id", fm.clip_id},
                      {"frames", fm.frames()},
                      {"channels", fm.channel_names},
                      {"external_missing", fm.external_missing},
                      {"mean_psnr_db", psnr_infinite ? json("inf") : json(raw_psnr_sum / fm.frames())},
                      {"mean_ssim", fm.values.col(1).mean()},
                      {"mean_ms_ssim", fm.values.col(2).mean()}};
      write_json(ctx.out_dir / "metrics_summary.json", summary);
      return "metrics: " + std::to_string(fm.frames()) + " frames x " + std::to_string(fm.channels()) +
             " channels -> " + (ctx.out_dir / "frame_metrics.csv").string();
    };
  });

  // siti
  std::string input_path;
  auto* siti = app.add_subcommand("siti", "Spatial and temporal information of a clip");
  add_common(siti);
  siti->add_option("--input", input_path, "Input Y4M")->required();
  siti->callback([&] {
    action = [&] {
      require_file(input_path, "--input");
      const VideoClip clip = load_y4m(input_path);
      const SiTiReport r = si_ti(clip, ctx.workers);
      const auto& s = r.summary;
      auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
      json j = {{"frames", clip.frames.size()},
                {"summary",
                 {{"si_mean", s.si_mean}, {"si_std", s.si_std}, {"si_p2_5", s.si_p2_5}, {"si_p97_5", s.si_p97_5},
                  {"ti_mean", num(s.ti_mean)}, {"ti_std", num(s.ti_std)}, {"ti_min", num(s.ti_min)},
                  {"ti_p2_5", num(s.ti_p2_5)}, {"ti_p97_5", num(s.ti_p97_5)}}},
                {"ti_error", r.ti_error ? json(*r.ti_error) : json(nullptr)},
                {"si", r.si},
                {"ti", r.ti}};
      write_json(ctx.out_dir / "siti.json", j);
      std::ofstream f(ctx.out_dir / "siti.csv", std::ios::binary | std::ios::trunc);
      f << "frame,si,ti\n";
      for (std::size_t i = 0; i < r.si.size(); ++i) {
        f << i << ',' << csv::format_double(r.si[i]) << ','
          << (i == 0 ? std::string() : csv::format_double(r.ti[i - 1])) << '\n';
      }
      if (r.ti_error) ctx.log(LogLevel::warn, *r.ti_error);
      std::ostringstream line;
      line << "siti: SI mean " << s.si_mean << ", TI mean " << s.ti_mean << " over " << clip.frames.size()
           << " frames";
      return line.str();
    };
  });

  // aggregate
  std::string ratings_path;
  auto* aggregate = app.add_subcommand("aggregate", "DMOS and 95% CI per clip and per codec");
  add_common(aggregate);
  aggregate->add_option("--ratings", ratings_path, "Ratings CSV clip_id,codec_id,rater_id,score")->required();
  aggregate->callback([&] {
    action = [&] {
      require_file(ratings_path, "--ratings");
      const auto votes = read_ratings(ratings_path);
      const auto clips = aggregate_clips(votes);
      const auto models = aggregate_models(clips, votes);
      write_clip_scores(clips, ctx.out_dir / "clip_scores.csv");
      write_model_scores(models, ctx.out_dir / "model_scores.csv");
      return "aggregate: " + std::to_string(votes.size()) + " votes -> " + std::to_string(clips.size()) +
             " clip scores, " + std::to_string(models.size()) + " model scores";
    };
  });

  // assemble
  std::string enc_path, ref_feat_path, fm_path;
  long long n_frames = 0;
  bool no_frame_metrics = false;
  auto* assemble = app.add_subcommand("assemble", "Build model input features from encoded/reference features");
  add_common(assemble);
  assemble->add_option("--enc", enc_path, "Encoded-clip feature file (T x 2304)")->required();
  assemble->add_option("--ref", ref_feat_path, "Reference-clip feature file (T x 2304)")->required();
  assemble->add_option("--frame-metrics", fm_path, "Frame metric CSV from the metrics subcommand");
  assemble->add_option("--n-frames", n_frames, "Frame count of the clip (default: sidecar or metric rows)");
  assemble->add_flag("--no-frame-metrics", no_frame_metrics, "Emit T x 4608 features without frame metrics");
  assemble->callback([&] {
    action = [&] {
      require_file(enc_path, "--enc");
      require_file(ref_feat_path, "--ref");
      const FeatureSequence enc = read_features(enc_path);
      const FeatureSequence ref = read_features(ref_feat_path);
      FeatureSequence assembled;
      if (no_frame_metrics) {
        assembled = concat_difference(enc, ref);
      } else {
        if (fm_path.empty()) throw InvalidArgument("--frame-metrics is required unless --no-frame-metrics is given");
        require_file(fm_path, "--frame-metrics");
        const FrameMetricMatrix fm = read_frame_metrics(fm_path);
        Eigen::Index frames = n_frames;
        if (frames == 0) {
          const auto sidecar = read_sidecar(enc_path);
          frames = sidecar && sidecar->n_frames > 0 ? sidecar->n_frames : fm.frames();
        }
        if (fm.variant != enc.variant) {
          ctx.log(LogLevel::info, "frame metrics computed on variant '" + fm.variant + "', features are '" +
                                      enc.variant + "'");
        }
        assembled = assemble_pair(enc, ref, fm, window_plan(frames));
      }
      std::string name = assembled.clip_id.empty() ? fs::path(enc_path).stem().string() : assembled.clip_id;
      if (assembled.variant != "none") name += "." + assembled.variant;
      const fs::path target = ctx.out_dir / (name + ".mlcv");
      write_features(assembled, target);
      return "assemble: " + std::to_string(assembled.steps()) + " x " + std::to_string(assembled.dim()) + " (" +
             to_string(assembled.kind()) + ") -> " + target.string();
    };
  });

  // train
  std::string manifest_path, val_manifest_path;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train the quality head on assembled features");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", manifest_path, "Training manifest JSON")->required();
  train_cmd->add_option("--val-manifest", val_manifest_path, "Validation manifest JSON");
  train_flags.add(train_cmd);
  train_cmd->callback([&] {
    action = [&] {
      require_file(manifest_path, "--manifest");
      const auto samples = load_samples(read_manifest(manifest_path), true);
      std::vector<TrainingSample> validation;
      if (!val_manifest_path.empty()) {
        require_file(val_manifest_path, "--val-manifest");
        validation = load_samples(read_manifest(val_manifest_path), true);
      }
      const auto dim = samples.front().variants.front().cols();
      const auto result = train(samples, train_flags.config(ctx), train_flags.model(dim), mix_seed(ctx.seed, 2),
                                validation);
      save_model(result.model, ctx.out_dir / "model.mlqm");
      write_history(result.history, ctx.out_dir / "history.csv");
      std::ostringstream line;
      line << "train: " << samples.size() << " pairs, " << result.history.size() << " epochs, final loss "
           << result.history.back().train_loss;
      return line.str();
    };
  });

  // predict
  std::string model_path;
  auto* predict = app.add_subcommand("predict", "Score assembled features with a trained model");
  add_common(predict);
  predict->add_option("--model", model_path, "Model checkpoint")->required();
  predict->add_option("--manifest", manifest_path, "Manifest of features to score")->required();
  predict->callback([&] {
    action = [&] {
      require_file(model_path, "--model");
      require_file(manifest_path, "--manifest");
      const auto model = load_model(model_path);
      const auto samples = load_samples(read_manifest(manifest_path), false);
      const auto scores = predict_scores(model, samples, ctx.workers);
      std::vector<PredictionRecord> preds;
      for (std::size_t i = 0; i < samples.size(); ++i) preds.push_back({samples[i].clip_id, samples[i].codec_id, scores[i]});
      write_predictions(preds, (ctx.out_dir / "predictions.csv").string());
      return "predict: " + std::to_string(preds.size()) + " predictions -> " +
             (ctx.out_dir / "predictions.csv").string();
    };
  });

  // crossval
  std::size_t n_folds = 5;
  std::string rescale = "none";
  std::string scores_path;
  auto* cv = app.add_subcommand("crossval", "k-fold cross-validation split by source video");
  add_common(cv);
  cv->add_option("--manifest", manifest_path, "Manifest covering every (clip, codec) pair")->required();
  auto* cv_ratings = cv->add_option("--ratings", ratings_path, "Ratings CSV");
  cv->add_option("--scores", scores_path, "Clip scores CSV (instead of --ratings)")->excludes(cv_ratings);
  cv->add_option("--folds", n_folds, "Number of folds")->capture_default_str();
  cv->add_option("--rescale", rescale, "RMSE scale: none, minmax or fit")->capture_default_str();
  train_flags.add(cv);
  cv->callback([&] {
    action = [&] {
      if (ratings_path.empty() && scores_path.empty()) throw InvalidArgument("--ratings or --scores is required");
      require_file(manifest_path, "--manifest");
      const auto subjective = subjective_scores(ratings_path, scores_path);
      const auto samples = load_samples(read_manifest(manifest_path), false);
      CrossvalConfig cfg;
      cfg.folds = n_folds;
      cfg.train = train_flags.config(ctx);
      cfg.model = train_flags.model(samples.front().variants.front().cols());
      cfg.eval.rescale = parse_rescale_mode(rescale);
      const auto result = crossval(samples, subjective, cfg);
      write_predictions(result.predictions, (ctx.out_dir / "predictions.csv").string());
      write_json(ctx.out_dir / "folds.json", folds_json(result.folds));
      write_json(ctx.out_dir / "crossval.json", evaluation_json(result.evaluation));
      for (std::size_t f = 0; f < result.histories.size(); ++f) {
        write_history(result.histories[f], ctx.out_dir / ("history_fold" + std::to_string(f) + ".csv"));
      }
      const auto& m = result.evaluation.model;
      return "crossval: model-level PCC " + fmt(m.pcc) + ", SRCC " + fmt(m.srcc) + ", Tau-b 95 " + fmt(m.tau_b_95);
    };
  });

  // eval
  std::string predictions_path, folds_path, plot_csv;
  auto* eval = app.add_subcommand("eval", "Clip- and model-level metrics of predictions against DMOS");
  add_common(eval);
  eval->add_option("--predictions", predictions_path, "Predictions CSV clip_id,codec_id,score")->required();
  auto* eval_ratings = eval->add_option("--ratings", ratings_path, "Ratings CSV");
  eval->add_option("--scores", scores_path, "Clip scores CSV (instead of --ratings)")->excludes(eval_ratings);
  eval->add_option("--folds", folds_path, "Fold assignment JSON; metrics are averaged over folds");
  eval->add_option("--rescale", rescale, "RMSE scale: none, minmax or fit")->capture_default_str();
  eval->add_option("--plot-csv", plot_csv, "Also write per-item points to this file name inside --out");
  eval->callback([&] {
    action = [&] {
      if (ratings_path.empty() && scores_path.empty()) throw InvalidArgument("--ratings or --scores is required");
      require_file(predictions_path, "--predictions");
      const auto subjective = subjective_scores(ratings_path, scores_path);
      const auto predictions = read_predictions(predictions_path);
      FoldAssignment folds;
      if (!folds_path.empty()) folds = read_fold_assignment(folds_path);
      EvalOptions options;
      options.rescale = parse_rescale_mode(rescale);
      const auto result = evaluate(predictions, subjective, folds, options);
      write_json(ctx.out_dir / "report.json", evaluation_json(result));
      if (!plot_csv.empty()) {
        std::map<std::string, double> by_key;
        for (const auto& p : predictions) by_key[item_key(p.clip_id, p.codec_id)] = p.score;
        std::ofstream f(ctx.out_dir / fs::path(plot_csv).filename(), std::ios::binary | std::ios::trunc);
        f << "clip_id,codec_id,dmos,ci95,prediction\n";
        for (const auto& s : subjective) {
          const auto it = by_key.find(item_key(s.clip_id, s.codec_id));
          if (it == by_key.end()) continue;
          f << s.clip_id << ',' << s.codec_id << ',' << csv::format_double(s.dmos) << ','
            << csv::format_double(s.ci95_half_width) << ',' << csv::format_double(it->second) << '\n';
        }
      }
      return "eval: clip PCC " + fmt(result.clip.pcc) + " SRCC " + fmt(result.clip.srcc) + "; model PCC " +
             fmt(result.model.pcc) + " Tau-b 95 " + fmt(result.model.tau_b_95);
    };
  });

  // bootstrap
  std::string counts = "10,26,100";
  std::size_t reps = 200;
  std::string level = "both";
  std::string model_sampling = "pooled";
  std::string upper = "";
  bool degenerate = false;
  auto* boot = app.add_subcommand("bootstrap", "Vote-count bootstrapping simulation");
  add_common(boot);
  boot->add_option("--ratings", ratings_path, "Ratings CSV")->required();
  boot->add_option("--n", counts, "Comma-separated vote counts")->capture_default_str();
  boot->add_option("--reps", reps, "Repetitions per vote count")->capture_default_str()->check(CLI::PositiveNumber);
  boot->add_option("--level", level, "clip, model or both")->capture_default_str()->check(
      CLI::IsMember({"clip", "model", "both"}));
  boot->add_option("--model-sampling", model_sampling, "pooled or stratified")->capture_default_str()->check(
      CLI::IsMember({"pooled", "stratified"}));
  boot->add_option("--upper-limit", upper, "CLIP_VOTES,MODEL_VOTES: also write upper_limit.json");
  boot->add_flag("--degenerate", degenerate, "Use the full vote lists instead of sampling");
  boot->callback([&] {
    action = [&] {
      require_file(ratings_path, "--ratings");
      const auto votes = read_ratings(ratings_path);
      const auto ns = parse_counts(counts);
      BootstrapOptions opts;
      opts.reps = reps;
      opts.seed = ctx.seed;
      opts.workers = ctx.workers;
      opts.degenerate = degenerate;
      opts.model_sampling = model_sampling == "stratified" ? ModelSampling::stratified : ModelSampling::pooled;
      std::vector<BootstrapCurve> curves;
      if (level != "model") curves.push_back(bootstrap_curve(votes, ns, MetricLevel::clip, opts));
      if (level != "clip") curves.push_back(bootstrap_curve(votes, ns, MetricLevel::model, opts));
      write_bootstrap_csv(curves, ctx.out_dir / "bootstrap.csv");
      if (!upper.empty()) {
        const auto limits = parse_counts(upper);
        if (limits.size() != 2) throw InvalidArgument("--upper-limit expects CLIP_VOTES,MODEL_VOTES");
        const auto ul = upper_limit(votes, limits[0], limits[1], opts);
        auto summaries = [](const MetricSummaries& s) {
          json j;
          for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
            const auto& m = s[k];
            auto num = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
            j[to_string(kAllMetrics[k])] = {{"mean", num(m.mean)}, {"ci95_lo", num(m.ci95_lo)}, {"ci95_hi", num(m.ci95_hi)}};
          }
          return j;
        };
        write_json(ctx.out_dir / "upper_limit.json",
                   {{"clip_votes", limits[0]}, {"model_votes", limits[1]}, {"reps", reps},
                    {"clip", summaries(ul.clip)}, {"model", summaries(ul.model)}});
      }
      return "bootstrap: " + std::to_string(ns.size()) + " vote counts x " + std::to_string(reps) + " reps -> " +
             (ctx.out_dir / "bootstrap.csv").string();
    };
  });

  // significance
  std::string pred_a, pred_b;
  std::size_t sig_reps = 1000;
  auto* sig = app.add_subcommand("significance", "Paired bootstrap test on per-clip absolute errors");
  add_common(sig);
  sig->add_option("--predictions-a", pred_a, "Predictions CSV of model A")->required();
  sig->add_option("--predictions-b", pred_b, "Predictions CSV of model B")->required();
  auto* sig_ratings = sig->add_option("--ratings", ratings_path, "Ratings CSV");
  sig->add_option("--scores", scores_path, "Clip scores CSV (instead of --ratings)")->excludes(sig_ratings);
  sig->add_option("--reps", sig_reps, "Bootstrap repetitions (>= 1000)")->capture_default_str();
  sig->add_option("--rescale", rescale, "Scale of the errors: none, minmax or fit")->capture_default_str();
  sig->callback([&] {
    action = [&] {
      if (ratings_path.empty() && scores_path.empty()) throw InvalidArgument("--ratings or --scores is required");
      require_file(pred_a, "--predictions-a");
      require_file(pred_b, "--predictions-b");
      const auto subjective = subjective_scores(ratings_path, scores_path);
      const auto mode = parse_rescale_mode(rescale);
      auto abs_errors = [&](const std::string& path) {
        std::map<std::string, double> by_key;
        for (const auto& p : read_predictions(path)) by_key[item_key(p.clip_id, p.codec_id)] = p.score;
        const auto n = static_cast<Eigen::Index>(subjective.size());
        Eigen::VectorXd pred(n), dmos(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto& s = subjective[static_cast<std::size_t>(i)];
          const auto it = by_key.find(item_key(s.clip_id, s.codec_id));
          if (it == by_key.end()) throw InvalidArgument(path + ": no prediction for " + item_key(s.clip_id, s.codec_id));
          pred[i] = it->second;
          dmos[i] = s.dmos;
        }
        if (mode == RescaleMode::minmax) pred = rescale_linear(pred, 1.0, 9.0);
        if (mode == RescaleMode::fit) pred = rescale_fit(pred, dmos);
        return Eigen::VectorXd((pred - dmos).cwiseAbs());
      };
      const Eigen::VectorXd ea = abs_errors(pred_a);
      const Eigen::VectorXd eb = abs_errors(pred_b);
      const auto r = paired_significance(ea, eb, sig_reps, ctx.seed, ctx.workers);
      write_json(ctx.out_dir / "significance.json",
                 {{"n_items", ea.size()}, {"reps", r.reps}, {"mean_abs_error_a", ea.mean()},
                  {"mean_abs_error_b", eb.mean()}, {"mean_difference", r.mean_difference}, {"p_value", r.p_value},
                  {"significant_95", r.significant_95}, {"significant_90", r.significant_90}});
      std::ostringstream line;
      line << "significance: p = " << r.p_value << (r.significant_95 ? " (significant at 95%)" : "");
      return line.str();
    };
  });

  std::vector<std::string> argv_storage;
  argv_storage.reserve(args.size() + 1);
  argv_storage.emplace_back("mlcvqa");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  std::string subcommand = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
  ctx.out_dir = out_dir;
  try {
    if (!action) throw InvalidArgument("no subcommand given");
    fs::create_directories(ctx.out_dir);
    const std::string summary = action();
    out << summary << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::string type = "error";
    if (dynamic_cast<const InvalidArgument*>(&e)) type = "invalid_argument";
    else if (dynamic_cast<const ParseError*>(&e)) type = "parse_error";
    else if (dynamic_cast<const TrainingError*>(&e)) type = "training_error";
    const json j = {{"error", {{"subcommand", subcommand}, {"type", type}, {"message", e.what()}}}};
    err << j.dump() << '\n';
    std::error_code ec;
    if (!ctx.out_dir.empty() && fs::is_directory(ctx.out_dir, ec)) {
      std::ofstream f(ctx.out_dir / "error.json", std::ios::trunc);
      f << j.dump(2) << '\n';
    }
    return 1;
  }
}

}  // namespace mlcvqa::cli
