#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mlcvqa/csv.hpp"
#include "mlcvqa/y4m.hpp"

namespace mlcvqa {

/// Luma as floating point, rows x cols = height x width.
using LumaImage = Eigen::ArrayXXd;

LumaImage luma_of(const Frame& frame);

/// PSNR on luma, in dB. Identical frames give +infinity.
double psnr(const Frame& ref, const Frame& dist, PixelFormat format = PixelFormat::yuv420p8);

/// PSNR value fed to numeric pipelines: +infinity is replaced by this cap.
inline constexpr double kPsnrCapDb = 100.0;

struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Local SSIM statistics over every fully contained Gaussian window.
struct SsimMaps {
  LumaImage ssim;  // l * cs
  LumaImage cs;    // contrast-structure term
};

SsimMaps ssim_maps(const LumaImage& ref, const LumaImage& dist, double max_value,
                   const SsimConfig& cfg = {});

/// Mean SSIM on luma. Throws InvalidArgument if the frame is smaller than
/// the window.
double ssim(const Frame& ref, const Frame& dist, PixelFormat format = PixelFormat::yuv420p8,
            const SsimConfig& cfg = {});

struct MsSsimConfig {
  std::vector<double> exponents{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  SsimConfig ssim;
};

/// Multi-scale SSIM: mean contrast-structure at each of the first M-1 scales
/// and mean SSIM at the coarsest, combined with the configured exponents.
/// Scales are produced by 2x2 averaging. Negative per-scale terms are
/// clamped to zero before exponentiation.
double ms_ssim(const LumaImage& ref, const LumaImage& dist, double max_value,
               const MsSsimConfig& cfg = {});
double ms_ssim(const Frame& ref, const Frame& dist, PixelFormat format = PixelFormat::yuv420p8,
               const MsSsimConfig& cfg = {});

/// Sobel gradient magnitude with replicated borders.
LumaImage sobel_magnitude(const LumaImage& luma);

/// Population standard deviation over all samples.
double spatial_stddev(const LumaImage& image);

struct SiTiSummary {
  double si_mean = 0, si_std = 0, si_p2_5 = 0, si_p97_5 = 0;
  double ti_mean = 0, ti_std = 0, ti_min = 0, ti_p2_5 = 0, ti_p97_5 = 0;
};

struct SiTiReport {
  std::vector<double> si;  // one per frame
  std::vector<double> ti;  // one per frame from the second on
  SiTiSummary summary;
  /// Set when TI is undefined (single-frame clip); the ti_* summary fields
  /// are NaN in that case.
  std::optional<std::string> ti_error;
};

SiTiReport si_ti(const VideoClip& clip, unsigned workers = 1);

/// Linear-interpolated percentile, p in [0, 100].
double percentile(std::vector<double> values, double p);

/// Channel layout of a frame metric matrix.
inline const std::array<const char*, 11> kDefaultChannels = {
    "psnr",       "ssim",       "ms_ssim",    "si_ref", "ti_ref", "vif_scale0",
    "vif_scale1", "vif_scale2", "vif_scale3", "adm2",   "motion2"};
inline constexpr std::size_t kInternalChannelCount = 5;

/// Per-frame metric values, frames x channels.
struct FrameMetricMatrix {
  std::string clip_id;
  /// Augmentation variant of the frames the metrics were computed on.
  std::string variant = "none";
  Eigen::MatrixXd values;
  std::vector<std::string> channel_names;
  /// External channels were not supplied and are zero-filled.
  bool external_missing = false;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index channels() const { return values.cols(); }
};

/// External per-frame table keyed by frame index.
struct ExternalMetricTable {
  std::vector<std::string> channels;
  Eigen::MatrixXd values;  // rows indexed by frame
};

/// Reads `frame_index,<channel>,...`. VMAF per-frame CSV columns are also
/// accepted: `Frame` maps to frame_index and an `integer_` prefix is
/// stripped from channel names. Rows must cover 0..N-1 exactly once.
ExternalMetricTable read_external_metrics(const std::filesystem::path& path);
ExternalMetricTable parse_external_metrics(const csv::Table& table);

FrameMetricMatrix frame_metric_matrix(const VideoClip& ref, const VideoClip& dist,
                                      const std::optional<ExternalMetricTable>& external,
                                      unsigned workers = 1);

void write_frame_metrics(const FrameMetricMatrix& fm, const std::filesystem::path& path);
FrameMetricMatrix read_frame_metrics(const std::filesystem::path& path);

}  // namespace mlcvqa
