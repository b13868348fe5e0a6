#include "mlcvqa/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "mlcvqa/binary_io.hpp"

namespace mlcvqa {
namespace {

constexpr char kMagic[4] = {'M', 'L', 'C', 'V'};
constexpr std::uint16_t kVersion = 1;

std::filesystem::path sidecar_path(const std::filesystem::path& feature_path) {
  auto p = feature_path;
  p += ".json";
  return p;
}

}  // namespace

FeatureKind feature_kind(Eigen::Index dim) {
  switch (dim) {
    case kDeepFeatureDim: return FeatureKind::deep;
    case kConcatFeatureDim: return FeatureKind::concatenated;
    case kAssembledFeatureDim: return FeatureKind::assembled;
    default: return FeatureKind::custom;
  }
}

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::deep: return "deep";
    case FeatureKind::concatenated: return "concatenated";
    case FeatureKind::assembled: return "assembled";
    case FeatureKind::custom: return "custom";
  }
  return "custom";
}

WindowPlan window_plan(Eigen::Index n_frames) {
  if (n_frames < kChunkFrames) {
    throw InvalidArgument("clip has " + std::to_string(n_frames) + " frames; at least " +
                          std::to_string(kChunkFrames) + " are needed for one window");
  }
  WindowPlan plan;
  plan.n_frames = n_frames;
  const Eigen::Index count = (n_frames - kChunkFrames) / kWindowStride + 1;
  plan.windows.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index w = 0; w < count; ++w) {
    Window window;
    window.chunk_start = w * kWindowStride;
    window.sampled.reserve(kWindowFrames);
    for (Eigen::Index k = 0; k < kChunkFrames; k += kSampleStep) window.sampled.push_back(window.chunk_start + k);
    plan.windows.push_back(std::move(window));
  }
  return plan;
}

void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  if (seq.steps() < 1 || seq.dim() < 1) throw InvalidArgument("feature sequence is empty");
  if (!seq.data.allFinite()) throw InvalidArgument("feature sequence " + seq.clip_id + " contains NaN/Inf");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  binary::put<std::uint16_t>(out, kVersion);
  binary::put<std::uint16_t>(out, seq.flags);
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.steps()));
  binary::put<std::uint32_t>(out, static_cast<std::uint32_t>(seq.dim()));
  binary::put_string(out, seq.clip_id);
  binary::put_string(out, seq.variant);
  for (Eigen::Index i = 0; i < seq.data.size(); ++i) binary::put<float>(out, seq.data.data()[i]);
  out.flush();
  if (!out) throw Error("write failed for " + path.string());
}

FeatureSequence read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  const std::string where = path.string() + ": ";
  char magic[4] = {};
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw ParseError(where + "not a feature file (magic mismatch)");
  }
  const auto version = binary::get<std::uint16_t>(in, where + "version");
  if (version != kVersion) throw ParseError(where + "unsupported version " + std::to_string(version));
  FeatureSequence seq;
  seq.flags = binary::get<std::uint16_t>(in, where + "flags");
  const auto steps = binary::get<std::uint32_t>(in, where + "T");
  const auto dim = binary::get<std::uint32_t>(in, where + "D");
  if (steps == 0 || dim == 0) throw ParseError(where + "T and D must be positive");
  seq.clip_id = binary::get_string(in, where + "clip_id");
  seq.variant = binary::get_string(in, where + "variant");

  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload_bytes = static_cast<std::uint64_t>(in.tellg() - payload_start);
  in.seekg(payload_start);
  const std::uint64_t expected = static_cast<std::uint64_t>(steps) * dim * sizeof(float);
  if (payload_bytes != expected) {
    throw ParseError(where + "payload is " + std::to_string(payload_bytes) + " bytes, header implies " +
                     std::to_string(expected) + " (T=" + std::to_string(steps) + ", D=" + std::to_string(dim) + ")");
  }
  seq.data.resize(steps, dim);
  for (Eigen::Index i = 0; i < seq.data.size(); ++i) seq.data.data()[i] = binary::get<float>(in, where + "payload");
  if (!seq.data.allFinite()) throw ParseError(where + "payload contains NaN/Inf");
  return seq;
}

void write_sidecar(const FeatureSidecar& sidecar, const std::filesystem::path& feature_path) {
  const nlohmann::ordered_json j = {{"clip_id", sidecar.clip_id},
                                    {"variant", sidecar.variant},
                                    {"n_frames", sidecar.n_frames},
                                    {"fps", sidecar.fps},
                                    {"augmentation", sidecar.augmentation}};
  std::ofstream out(sidecar_path(feature_path), std::ios::trunc);
  if (!out) throw Error("cannot write sidecar for " + feature_path.string());
  out << j.dump(2) << '\n';
}

std::optional<FeatureSidecar> read_sidecar(const std::filesystem::path& feature_path) {
  const auto p = sidecar_path(feature_path);
  if (!std::filesystem::exists(p)) return std::nullopt;
  std::ifstream in(p);
  try {
    const auto j = nlohmann::json::parse(in);
    FeatureSidecar s;
    s.clip_id = j.value("clip_id", "");
    s.variant = j.value("variant", "none");
    s.n_frames = j.value("n_frames", std::int64_t{0});
    s.fps = j.value("fps", 0.0);
    s.augmentation = j.value("augmentation", "");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(p.string() + ": " + e.what());
  }
}

FeatureSequence concat_difference(const FeatureSequence& enc, const FeatureSequence& ref) {
  if (enc.variant != ref.variant) {
    throw InvalidArgument("augmentation variant mismatch: encoded '" + enc.variant + "' vs reference '" +
                          ref.variant + "'");
  }
  if (enc.steps() != ref.steps() || enc.dim() != ref.dim()) {
    throw InvalidArgument("encoded features are " + std::to_string(enc.steps()) + "x" + std::to_string(enc.dim()) +
                          ", reference features are " + std::to_string(ref.steps()) + "x" +
                          std::to_string(ref.dim()));
  }
  FeatureSequence out;
  out.clip_id = enc.clip_id;
  out.variant = enc.variant;
  out.flags = enc.flags;
  const Eigen::Index d = enc.dim();
  out.data.resize(enc.steps(), 2 * d);
  out.data.leftCols(d) = enc.data;
  out.data.rightCols(d) = (enc.data.cast<double>() - ref.data.cast<double>()).cast<float>();
  return out;
}

Eigen::MatrixXd pool_frame_metrics(const FrameMetricMatrix& fm, const WindowPlan& plan) {
  const Eigen::Index channels = fm.channels();
  Eigen::MatrixXd pooled(plan.steps(), kWindowFrames * channels);
  for (Eigen::Index w = 0; w < plan.steps(); ++w) {
    const auto& sampled = plan.windows[static_cast<std::size_t>(w)].sampled;
    if (static_cast<Eigen::Index>(sampled.size()) != kWindowFrames) {
      throw InvalidArgument("window " + std::to_string(w) + " does not sample 32 frames");
    }
    for (Eigen::Index k = 0; k < kWindowFrames; ++k) {
      const Eigen::Index frame = sampled[static_cast<std::size_t>(k)];
      if (frame >= fm.frames()) {
        throw InvalidArgument("frame metrics cover " + std::to_string(fm.frames()) + " frames, window " +
                              std::to_string(w) + " needs frame " + std::to_string(frame));
      }
      pooled.block(w, k * channels, 1, channels) = fm.values.row(frame);
    }
  }
  return pooled;
}

FeatureSequence assemble_pair(const FeatureSequence& enc, const FeatureSequence& ref, const FrameMetricMatrix& fm,
                              const WindowPlan& plan) {
  if (enc.steps() != plan.steps()) {
    throw InvalidArgument("feature sequence has " + std::to_string(enc.steps()) + " steps, window plan has " +
                          std::to_string(plan.steps()));
  }
  const FeatureSequence sf = concat_difference(enc, ref);
  const Eigen::MatrixXd pooled = pool_frame_metrics(fm, plan);
  FeatureSequence out;
  out.clip_id = sf.clip_id;
  out.variant = sf.variant;
  out.flags = sf.flags;
  if (fm.variant != "none" && fm.variant == sf.variant) out.flags |= feature_flags::metrics_on_augmented;
  out.data.resize(sf.steps(), sf.dim() + pooled.cols());
  out.data.leftCols(sf.dim()) = sf.data;
  out.data.rightCols(pooled.cols()) = pooled.cast<float>();
  return out;
}

std::pair<FeatureSequence, FeatureSequence> temporal_subsample(const FeatureSequence& seq) {
  if (seq.steps() < 2) throw InvalidArgument("temporal subsampling needs at least 2 steps");
  FeatureSequence even, odd;
  for (FeatureSequence* s : {&even, &odd}) {
    s->clip_id = seq.clip_id;
    s->variant = seq.variant;
    s->flags = seq.flags | feature_flags::temporally_subsampled;
  }
  const Eigen::Index t = seq.steps();
  even.data.resize((t + 1) / 2, seq.dim());
  odd.data.resize(t / 2, seq.dim());
  for (Eigen::Index r = 0; r < t; ++r) {
    if (r % 2 == 0) {
      even.data.row(r / 2) = seq.data.row(r);
    } else {
      odd.data.row(r / 2) = seq.data.row(r);
    }
  }
  return {std::move(even), std::move(odd)};
}

std::pair<WindowPlan, WindowPlan> temporal_subsample(const WindowPlan& plan) {
  if (plan.steps() < 2) throw InvalidArgument("temporal subsampling needs at least 2 windows");
  WindowPlan even{plan.n_frames, {}}, odd{plan.n_frames, {}};
  for (std::size_t w = 0; w < plan.windows.size(); ++w) {
    (w % 2 == 0 ? even : odd).windows.push_back(plan.windows[w]);
  }
  return {std::move(even), std::move(odd)};
}

}  // namespace mlcvqa
