#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mlcvqa/frame_metrics.hpp"

namespace mlcvqa {

inline constexpr Eigen::Index kDeepFeatureDim = 2304;
inline constexpr Eigen::Index kConcatFeatureDim = 2 * kDeepFeatureDim;  // encoded || difference
inline constexpr Eigen::Index kWindowFrames = 32;
inline constexpr Eigen::Index kPooledMetricDim = kWindowFrames * 11;
inline constexpr Eigen::Index kAssembledFeatureDim = kConcatFeatureDim + kPooledMetricDim;

/// Row-major T x D feature matrix as stored on disk.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class FeatureKind { deep, concatenated, assembled, custom };
FeatureKind feature_kind(Eigen::Index dim);
const char* to_string(FeatureKind kind);

namespace feature_flags {
/// Frame-metric channels were computed on augmented frames.
inline constexpr std::uint16_t metrics_on_augmented = 1u << 0;
/// Rows were produced by temporal subsampling.
inline constexpr std::uint16_t temporally_subsampled = 1u << 1;
}  // namespace feature_flags

struct FeatureSequence {
  std::string clip_id;
  std::string variant = "none";
  std::uint16_t flags = 0;
  FeatureMatrix data;

  Eigen::Index steps() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
  FeatureKind kind() const { return feature_kind(dim()); }
};

/// Sidecar metadata written next to a feature file as `<file>.json`.
struct FeatureSidecar {
  std::string clip_id;
  std::string variant;
  std::int64_t n_frames = 0;
  double fps = 0.0;
  std::string augmentation;
};

struct Window {
  Eigen::Index chunk_start = 0;
  std::vector<Eigen::Index> sampled;  // 32 frame indices
};

struct WindowPlan {
  Eigen::Index n_frames = 0;
  std::vector<Window> windows;

  Eigen::Index steps() const { return static_cast<Eigen::Index>(windows.size()); }
};

inline constexpr Eigen::Index kChunkFrames = 64;
inline constexpr Eigen::Index kSampleStep = 2;
inline constexpr Eigen::Index kWindowStride = 16;

/// 64-frame chunks every 16 frames, each sampled at every other frame.
/// Clips shorter than one chunk are rejected.
WindowPlan window_plan(Eigen::Index n_frames);

void write_features(const FeatureSequence& seq, const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);

void write_sidecar(const FeatureSidecar& sidecar, const std::filesystem::path& feature_path);
std::optional<FeatureSidecar> read_sidecar(const std::filesystem::path& feature_path);

/// Encoded features concatenated with (encoded - reference): T x 2D.
FeatureSequence concat_difference(const FeatureSequence& enc, const FeatureSequence& ref);

/// Frame-metric rows at the sampled indices of each window, flattened
/// row-major: T x (32 * channels).
Eigen::MatrixXd pool_frame_metrics(const FrameMetricMatrix& fm, const WindowPlan& plan);

/// Full model input: [enc | enc - ref | pooled frame metrics]. The
/// difference block is formed in double precision.
FeatureSequence assemble_pair(const FeatureSequence& enc, const FeatureSequence& ref, const FrameMetricMatrix& fm,
                              const WindowPlan& plan);

/// Even rows and odd rows as two sequences.
std::pair<FeatureSequence, FeatureSequence> temporal_subsample(const FeatureSequence& seq);
std::pair<WindowPlan, WindowPlan> temporal_subsample(const WindowPlan& plan);

}  // namespace mlcvqa
