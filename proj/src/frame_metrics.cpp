#include "mlcvqa/frame_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "mlcvqa/parallel.hpp"

namespace mlcvqa {
namespace {

double max_sample(PixelFormat format) { return static_cast<double>((1 << bit_depth(format)) - 1); }

void require_same_shape(const LumaImage& a, const LumaImage& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("frame dimension mismatch: " + std::to_string(a.cols()) + "x" +
                          std::to_string(a.rows()) + " vs " + std::to_string(b.cols()) + "x" +
                          std::to_string(b.rows()));
  }
}

Eigen::VectorXd gaussian_kernel(int size, double sigma) {
  Eigen::VectorXd g(size);
  const double center = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  return g / g.sum();
}

// Separable "valid" filtering: output is (rows-w+1) x (cols-w+1).
LumaImage filter_valid(const LumaImage& img, const Eigen::VectorXd& g) {
  const Eigen::Index w = g.size();
  const Eigen::Index out_rows = img.rows() - w + 1;
  const Eigen::Index out_cols = img.cols() - w + 1;
  LumaImage horizontal = LumaImage::Zero(img.rows(), out_cols);
  for (Eigen::Index k = 0; k < w; ++k) horizontal += g[k] * img.middleCols(k, out_cols);
  LumaImage out = LumaImage::Zero(out_rows, out_cols);
  for (Eigen::Index k = 0; k < w; ++k) out += g[k] * horizontal.middleRows(k, out_rows);
  return out;
}

LumaImage downsample2(const LumaImage& img) {
  const Eigen::Index r = img.rows() / 2;
  const Eigen::Index c = img.cols() / 2;
  LumaImage out(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) {
      out(i, j) = 0.25 * (img(2 * i, 2 * j) + img(2 * i + 1, 2 * j) + img(2 * i, 2 * j + 1) +
                          img(2 * i + 1, 2 * j + 1));
    }
  }
  return out;
}

}  // namespace

LumaImage luma_of(const Frame& frame) { return frame.y.cast<double>(); }

double psnr(const Frame& ref, const Frame& dist, PixelFormat format) {
  const LumaImage a = luma_of(ref);
  const LumaImage b = luma_of(dist);
  require_same_shape(a, b);
  const double mse = (a - b).square().mean();
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  const double peak = max_sample(format);
  return 10.0 * std::log10(peak * peak / mse);
}

SsimMaps ssim_maps(const LumaImage& ref, const LumaImage& dist, double max_value,
                   const SsimConfig& cfg) {
  require_same_shape(ref, dist);
  if (ref.rows() < cfg.window || ref.cols() < cfg.window) {
    throw InvalidArgument("frame " + std::to_string(ref.cols()) + "x" + std::to_string(ref.rows()) +
                          " is smaller than the " + std::to_string(cfg.window) + "x" +
                          std::to_string(cfg.window) + " SSIM window");
  }
  const Eigen::VectorXd g = gaussian_kernel(cfg.window, cfg.sigma);
  const double c1 = (cfg.k1 * max_value) * (cfg.k1 * max_value);
  const double c2 = (cfg.k2 * max_value) * (cfg.k2 * max_value);

  const LumaImage mu1 = filter_valid(ref, g);
  const LumaImage mu2 = filter_valid(dist, g);
  const LumaImage s11 = filter_valid(ref * ref, g) - mu1 * mu1;
  const LumaImage s22 = filter_valid(dist * dist, g) - mu2 * mu2;
  const LumaImage s12 = filter_valid(ref * dist, g) - mu1 * mu2;

  SsimMaps maps;
  maps.cs = (2.0 * s12 + c2) / (s11 + s22 + c2);
  maps.ssim = ((2.0 * mu1 * mu2 + c1) / (mu1 * mu1 + mu2 * mu2 + c1)) * maps.cs;
  return maps;
}

double ssim(const Frame& ref, const Frame& dist, PixelFormat format, const SsimConfig& cfg) {
  return ssim_maps(luma_of(ref), luma_of(dist), max_sample(format), cfg).ssim.mean();
}

double ms_ssim(const LumaImage& ref, const LumaImage& dist, double max_value,
               const MsSsimConfig& cfg) {
  require_same_shape(ref, dist);
  const auto scales = static_cast<int>(cfg.exponents.size());
  if (scales < 1) throw InvalidArgument("MS-SSIM needs at least one scale");
  const Eigen::Index min_side = static_cast<Eigen::Index>(cfg.ssim.window) << (scales - 1);
  if (ref.rows() < min_side || ref.cols() < min_side) {
    throw InvalidArgument("frame " + std::to_string(ref.cols()) + "x" + std::to_string(ref.rows()) +
                          " too small for " + std::to_string(scales) + " MS-SSIM scales (need " +
                          std::to_string(min_side) + "x" + std::to_string(min_side) + ")");
  }
  LumaImage a = ref;
  LumaImage b = dist;
  double score = 1.0;
  for (int s = 0; s < scales; ++s) {
    const SsimMaps maps = ssim_maps(a, b, max_value, cfg.ssim);
    const double term = (s == scales - 1) ? maps.ssim.mean() : maps.cs.mean();
    score *= std::pow(std::max(term, 0.0), cfg.exponents[static_cast<std::size_t>(s)]);
    if (s + 1 < scales) {
      a = downsample2(a);
      b = downsample2(b);
    }
  }
  return score;
}

double ms_ssim(const Frame& ref, const Frame& dist, PixelFormat format, const MsSsimConfig& cfg) {
  return ms_ssim(luma_of(ref), luma_of(dist), max_sample(format), cfg);
}

LumaImage sobel_magnitude(const LumaImage& luma) {
  const Eigen::Index rows = luma.rows();
  const Eigen::Index cols = luma.cols();
  LumaImage padded(rows + 2, cols + 2);
  padded.block(1, 1, rows, cols) = luma;
  padded.block(0, 1, 1, cols) = luma.row(0);
  padded.block(rows + 1, 1, 1, cols) = luma.row(rows - 1);
  padded.col(0) = padded.col(1);
  padded.col(cols + 1) = padded.col(cols);

  auto at = [&](Eigen::Index dr, Eigen::Index dc) { return padded.block(dr, dc, rows, cols); };
  const LumaImage gx = (at(0, 2) + 2.0 * at(1, 2) + at(2, 2)) - (at(0, 0) + 2.0 * at(1, 0) + at(2, 0));
  const LumaImage gy = (at(2, 0) + 2.0 * at(2, 1) + at(2, 2)) - (at(0, 0) + 2.0 * at(0, 1) + at(0, 2));
  return (gx.square() + gy.square()).sqrt();
}

double spatial_stddev(const LumaImage& image) {
  const double mean = image.mean();
  return std::sqrt((image - mean).square().mean());
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InvalidArgument("percentile of empty sequence");
  std::sort(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

void summarize(const std::vector<double>& v, double& mean, double& sd, double& p2, double& p97) {
  mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
  p2 = percentile(v, 2.5);
  p97 = percentile(v, 97.5);
}

}  // namespace

SiTiReport si_ti(const VideoClip& clip, unsigned workers) {
  clip.validate();
  const std::size_t n = clip.frames.size();
  SiTiReport report;
  report.si.resize(n);
  parallel_for(n, workers, [&](std::size_t i) {
    report.si[i] = spatial_stddev(sobel_magnitude(luma_of(clip.frames[i])));
  });
  auto& s = report.summary;
  summarize(report.si, s.si_mean, s.si_std, s.si_p2_5, s.si_p97_5);

  if (n < 2) {
    report.ti_error = "TI needs at least 2 frames, clip has " + std::to_string(n);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    s.ti_mean = s.ti_std = s.ti_min = s.ti_p2_5 = s.ti_p97_5 = nan;
    return report;
  }
  report.ti.resize(n - 1);
  parallel_for(n - 1, workers, [&](std::size_t i) {
    report.ti[i] = spatial_stddev(luma_of(clip.frames[i + 1]) - luma_of(clip.frames[i]));
  });
  summarize(report.ti, s.ti_mean, s.ti_std, s.ti_p2_5, s.ti_p97_5);
  s.ti_min = *std::min_element(report.ti.begin(), report.ti.end());
  return report;
}

ExternalMetricTable parse_external_metrics(const csv::Table& table) {
  std::optional<std::size_t> index_col;
  ExternalMetricTable out;
  std::vector<std::size_t> value_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    if (name == "frame_index" || name == "Frame" || name == "frameNum") {
      index_col = c;
      continue;
    }
    std::string mapped = name;
    if (mapped.starts_with("integer_")) mapped = mapped.substr(8);
    out.channels.push_back(mapped);
    value_cols.push_back(c);
  }
  if (!index_col) throw ParseError(table.source + ": missing frame_index column");
  const auto n = table.rows.size();
  out.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(value_cols.size()));
  std::vector<bool> seen(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    const auto idx = csv::to_int(table.rows[r][*index_col], table, r);
    if (idx < 0 || static_cast<std::size_t>(idx) >= n || seen[static_cast<std::size_t>(idx)]) {
      throw ParseError(table.source + ": frame indices must cover 0.." + std::to_string(n - 1) +
                       " exactly once (bad index " + std::to_string(idx) + ")");
    }
    seen[static_cast<std::size_t>(idx)] = true;
    for (std::size_t k = 0; k < value_cols.size(); ++k) {
      out.values(idx, static_cast<Eigen::Index>(k)) = csv::to_double(table.rows[r][value_cols[k]], table, r);
    }
  }
  return out;
}

ExternalMetricTable read_external_metrics(const std::filesystem::path& path) {
  return parse_external_metrics(csv::read(path));
}

FrameMetricMatrix frame_metric_matrix(const VideoClip& ref, const VideoClip& dist,
                                      const std::optional<ExternalMetricTable>& external,
                                      unsigned workers) {
  ref.validate();
  dist.validate();
  if (ref.frames.size() != dist.frames.size()) {
    throw InvalidArgument("frame count mismatch: reference has " + std::to_string(ref.frames.size()) +
                          ", distorted has " + std::to_string(dist.frames.size()));
  }
  if (ref.width != dist.width || ref.height != dist.height || ref.pixel_format != dist.pixel_format) {
    throw InvalidArgument("reference and distorted clips differ in geometry or pixel format");
  }
  const auto n = static_cast<Eigen::Index>(ref.frames.size());
  FrameMetricMatrix fm;
  fm.channel_names.assign(kDefaultChannels.begin(), kDefaultChannels.end());
  fm.values = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(kDefaultChannels.size()));

  if (external) {
    if (external->values.rows() != n) {
      throw InvalidArgument("external metric table has " + std::to_string(external->values.rows()) +
                            " rows for a " + std::to_string(n) + "-frame pair");
    }
    for (std::size_t c = kInternalChannelCount; c < kDefaultChannels.size(); ++c) {
      const auto it = std::find(external->channels.begin(), external->channels.end(), kDefaultChannels[c]);
      if (it == external->channels.end()) {
        throw InvalidArgument(std::string("external metric table lacks channel '") + kDefaultChannels[c] + "'");
      }
      fm.values.col(static_cast<Eigen::Index>(c)) =
          external->values.col(static_cast<Eigen::Index>(it - external->channels.begin()));
    }
  } else {
    fm.external_missing = true;
  }

  const PixelFormat format = ref.pixel_format;
  parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t i) {
    const auto& r = ref.frames[i];
    const auto& d = dist.frames[i];
    const auto row = static_cast<Eigen::Index>(i);
    fm.values(row, 0) = std::min(psnr(r, d, format), kPsnrCapDb);
    fm.values(row, 1) = ssim(r, d, format);
    fm.values(row, 2) = ms_ssim(r, d, format);
    const LumaImage luma = luma_of(r);
    fm.values(row, 3) = spatial_stddev(sobel_magnitude(luma));
    fm.values(row, 4) = i == 0 ? 0.0 : spatial_stddev(luma - luma_of(ref.frames[i - 1]));
  });
  return fm;
}

void write_frame_metrics(const FrameMetricMatrix& fm, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "#clip_id=" << fm.clip_id << ";variant=" << fm.variant
      << ";external_missing=" << (fm.external_missing ? 1 : 0) << '\n';
  out << "frame_index";
  for (const auto& name : fm.channel_names) out << ',' << name;
  out << '\n';
  for (Eigen::Index r = 0; r < fm.values.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < fm.values.cols(); ++c) out << ',' << csv::format_double(fm.values(r, c));
    out << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

FrameMetricMatrix read_frame_metrics(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const ExternalMetricTable parsed = parse_external_metrics(table);
  FrameMetricMatrix fm;
  fm.channel_names = parsed.channels;
  fm.values = parsed.values;
  for (const auto& comment : table.comments) {
    std::size_t start = 0;
    while (start <= comment.size()) {
      auto end = comment.find(';', start);
      if (end == std::string::npos) end = comment.size();
      const std::string item = comment.substr(start, end - start);
      const auto eq = item.find('=');
      if (eq != std::string::npos) {
        const auto key = item.substr(0, eq);
        const auto value = item.substr(eq + 1);
        if (key == "clip_id") fm.clip_id = value;
        if (key == "variant") fm.variant = value;
        if (key == "external_missing") fm.external_missing = value == "1";
      }
      start = end + 1;
    }
  }
  if (!fm.values.allFinite()) throw ParseError(path.string() + ": non-finite frame metric value");
  return fm;
}

}  // namespace mlcvqa
