#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "mlcvqa/frame_metrics.hpp"
#include "test_util.hpp"

namespace mlcvqa {
namespace {

using testing::TempDir;

Frame luma_frame(const LumaImage& luma) {
  Frame f = Frame::filled(static_cast<int>(luma.cols()), static_cast<int>(luma.rows()), 0, 128);
  for (Eigen::Index r = 0; r < luma.rows(); ++r)
    for (Eigen::Index c = 0; c < luma.cols(); ++c) f.y(r, c) = static_cast<std::uint16_t>(luma(r, c));
  return f;
}

LumaImage random_luma(int h, int w, std::mt19937& rng) {
  std::uniform_int_distribution<int> d(0, 255);
  LumaImage img(h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = d(rng);
  return img;
}

// Oracle: mean of SSIM over explicit Gaussian windows at every valid position.
double ssim_oracle(const LumaImage& x, const LumaImage& y, double L) {
  const int win = 11;
  const double sigma = 1.5;
  std::vector<double> g(win);
  double gsum = 0;
  for (int i = 0; i < win; ++i) {
    g[i] = std::exp(-((i - 5) * (i - 5)) / (2 * sigma * sigma));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  double total = 0;
  int count = 0;
  for (Eigen::Index r = 0; r + win <= x.rows(); ++r) {
    for (Eigen::Index c = 0; c + win <= x.cols(); ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          const double w = g[i] * g[j];
          const double a = x(r + i, c + j), b = y(r + i, c + j);
          mx += w * a;
          my += w * b;
          sxx += w * a * a;
          syy += w * b * b;
          sxy += w * a * b;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      total += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  }
  return total / count;
}

TEST(Psnr, KnownValueForUnitMse) {
  LumaImage a = LumaImage::Constant(8, 8, 100);
  LumaImage b = a + 1;
  // 10 * log10(255^2 / 1)
  EXPECT_NEAR(psnr(luma_frame(a), luma_frame(b)), 48.1308036086791, 1e-12);
}

TEST(Psnr, IdenticalFramesAreInfinite) {
  std::mt19937 rng(1);
  const Frame f = luma_frame(random_luma(6, 9, rng));
  EXPECT_TRUE(std::isinf(psnr(f, f)));
}

TEST(Psnr, MatchesBruteForceMse) {
  std::mt19937 rng(2);
  for (int t = 0; t < 20; ++t) {
    const LumaImage a = random_luma(7, 13, rng), b = random_luma(7, 13, rng);
    double mse = 0;
    for (Eigen::Index i = 0; i < a.size(); ++i) mse += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    mse /= static_cast<double>(a.size());
    EXPECT_NEAR(psnr(luma_frame(a), luma_frame(b)), 10 * std::log10(255.0 * 255.0 / mse), 1e-9);
  }
}

TEST(Psnr, TenBitUsesPeak1023) {
  Frame a = Frame::filled(4, 4, 500, 512), b = Frame::filled(4, 4, 502, 512);
  EXPECT_NEAR(psnr(a, b, PixelFormat::yuv420p10), 10 * std::log10(1023.0 * 1023.0 / 4.0), 1e-9);
}

TEST(Ssim, MatchesPerWindowOracle) {
  std::mt19937 rng(3);
  for (int t = 0; t < 5; ++t) {
    const LumaImage a = random_luma(16, 19, rng);
    LumaImage b = a;
    std::normal_distribution<double> noise(0, 10.0 * (t + 1));
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = std::clamp(std::round(b.data()[i] + noise(rng)), 0.0, 255.0);
    EXPECT_NEAR(ssim(luma_frame(a), luma_frame(b)), ssim_oracle(a, b, 255), 1e-10);
  }
}

TEST(Ssim, IdentityIsOneAndSmallFrameRejected) {
  std::mt19937 rng(4);
  const Frame f = luma_frame(random_luma(12, 12, rng));
  EXPECT_NEAR(ssim(f, f), 1.0, 1e-12);
  const Frame small = luma_frame(random_luma(10, 12, rng));
  EXPECT_THROW(ssim(small, small), InvalidArgument);
}

TEST(MsSsim, IdentityIsOne) {
  std::mt19937 rng(5);
  const LumaImage a = random_luma(176, 176, rng);
  EXPECT_NEAR(ms_ssim(a, a, 255), 1.0, 1e-12);
}

TEST(MsSsim, SingleScaleEqualsSsim) {
  std::mt19937 rng(6);
  const LumaImage a = random_luma(20, 24, rng);
  LumaImage b = a;
  for (Eigen::Index i = 0; i < b.size(); i += 3) b.data()[i] = 255 - b.data()[i];
  MsSsimConfig cfg;
  cfg.exponents = {1.0};
  EXPECT_NEAR(ms_ssim(a, b, 255, cfg), ssim_oracle(a, b, 255), 1e-10);
}

TEST(MsSsim, DecreasesWithDistortionAndRejectsSmallFrames) {
  std::mt19937 rng(7);
  const LumaImage a = random_luma(176, 180, rng);
  std::normal_distribution<double> noise(0, 1);
  LumaImage mild = a, strong = a;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double n = noise(rng);
    mild.data()[i] = std::clamp(a.data()[i] + 5 * n, 0.0, 255.0);
    strong.data()[i] = std::clamp(a.data()[i] + 40 * n, 0.0, 255.0);
  }
  const double m = ms_ssim(a, mild, 255), s = ms_ssim(a, strong, 255);
  EXPECT_LT(s, m);
  EXPECT_LT(m, 1.0);
  EXPECT_GE(s, 0.0);
  const LumaImage small = random_luma(175, 200, rng);
  EXPECT_THROW(ms_ssim(small, small, 255), InvalidArgument);
}

TEST(Sobel, MatchesDirectConvolution) {
  std::mt19937 rng(8);
  const LumaImage img = random_luma(9, 11, rng);
  const LumaImage mag = sobel_magnitude(img);
  auto at = [&](Eigen::Index r, Eigen::Index c) {
    r = std::clamp<Eigen::Index>(r, 0, img.rows() - 1);
    c = std::clamp<Eigen::Index>(c, 0, img.cols() - 1);
    return img(r, c);
  };
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double gx = (at(r - 1, c + 1) + 2 * at(r, c + 1) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r, c - 1) + at(r + 1, c - 1));
      const double gy = (at(r + 1, c - 1) + 2 * at(r + 1, c) + at(r + 1, c + 1)) -
                        (at(r - 1, c - 1) + 2 * at(r - 1, c) + at(r - 1, c + 1));
      EXPECT_NEAR(mag(r, c), std::hypot(gx, gy), 1e-9);
    }
}

TEST(SiTi, FlatClipIsZero) {
  VideoClip clip;
  clip.width = 8;
  clip.height = 8;
  for (int i = 0; i < 3; ++i) clip.frames.push_back(Frame::filled(8, 8, 77, 128));
  const SiTiReport r = si_ti(clip);
  ASSERT_EQ(r.si.size(), 3u);
  ASSERT_EQ(r.ti.size(), 2u);
  EXPECT_EQ(r.summary.si_mean, 0.0);
  EXPECT_EQ(r.summary.ti_mean, 0.0);
  EXPECT_FALSE(r.ti_error);
}

TEST(SiTi, MatchesOracleAndShiftInvariance) {
  std::mt19937 rng(9);
  VideoClip clip = testing::random_clip(12, 10, 4, 21);
  for (auto& f : clip.frames)
    for (Eigen::Index i = 0; i < f.y.size(); ++i) f.y.data()[i] = static_cast<std::uint16_t>(f.y.data()[i] / 2);
  const SiTiReport r = si_ti(clip, 3);
  for (std::size_t k = 0; k < clip.frames.size(); ++k) {
    const LumaImage s = sobel_magnitude(luma_of(clip.frames[k]));
    const double mean = s.mean();
    EXPECT_NEAR(r.si[k], std::sqrt((s - mean).square().mean()), 1e-9);
  }
  for (std::size_t k = 1; k < clip.frames.size(); ++k) {
    const LumaImage d = luma_of(clip.frames[k]) - luma_of(clip.frames[k - 1]);
    EXPECT_NEAR(r.ti[k - 1], spatial_stddev(d), 1e-12);
  }
  // Adding a constant to luma leaves SI and TI unchanged.
  VideoClip shifted = clip;
  for (auto& f : shifted.frames) f.y += 50;
  const SiTiReport rs = si_ti(shifted);
  for (std::size_t k = 0; k < r.si.size(); ++k) EXPECT_NEAR(rs.si[k], r.si[k], 1e-9);
  for (std::size_t k = 0; k < r.ti.size(); ++k) EXPECT_NEAR(rs.ti[k], r.ti[k], 1e-9);
  EXPECT_EQ(r.summary.si_mean, si_ti(clip, 1).summary.si_mean);
}

TEST(SiTi, SingleFrameHasUndefinedTi) {
  const SiTiReport r = si_ti(testing::random_clip(8, 8, 1, 4));
  EXPECT_EQ(r.si.size(), 1u);
  EXPECT_TRUE(r.ti.empty());
  ASSERT_TRUE(r.ti_error);
  EXPECT_TRUE(std::isnan(r.summary.ti_mean));
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 50), 3.0);
  EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
  EXPECT_DOUBLE_EQ(percentile({10, 0}, 2.5), 0.25);
  EXPECT_DOUBLE_EQ(percentile({10, 0}, 100), 10.0);
}

VideoClip distort(VideoClip clip, int delta) {
  for (auto& f : clip.frames)
    for (Eigen::Index i = 0; i < f.y.size(); i += 2)
      f.y.data()[i] = static_cast<std::uint16_t>(std::min(255, f.y.data()[i] + delta));
  return clip;
}

TEST(FrameMetricMatrix, LayoutWithoutExternalTable) {
  const VideoClip ref = testing::random_clip(176, 176, 3, 31);
  const VideoClip dist = distort(ref, 9);
  const FrameMetricMatrix fm = frame_metric_matrix(ref, dist, std::nullopt);
  ASSERT_EQ(fm.frames(), 3);
  ASSERT_EQ(fm.channels(), static_cast<Eigen::Index>(kDefaultChannels.size()));
  EXPECT_TRUE(fm.external_missing);
  for (Eigen::Index f = 0; f < 3; ++f) {
    EXPECT_NEAR(fm.values(f, 0), psnr(ref.frames[f], dist.frames[f]), 1e-12);
    EXPECT_NEAR(fm.values(f, 1), ssim(ref.frames[f], dist.frames[f]), 1e-12);
    EXPECT_NEAR(fm.values(f, 2), ms_ssim(ref.frames[f], dist.frames[f]), 1e-12);
    EXPECT_NEAR(fm.values(f, 3), si_ti(ref).si[f], 1e-12);
    for (Eigen::Index c = kInternalChannelCount; c < fm.channels(); ++c) EXPECT_EQ(fm.values(f, c), 0.0);
  }
  EXPECT_EQ(fm.values(0, 4), 0.0);
  EXPECT_GT(fm.values(1, 4), 0.0);
}

TEST(FrameMetricMatrix, IdenticalClipsCapPsnr) {
  const VideoClip ref = testing::random_clip(176, 176, 2, 32);
  const FrameMetricMatrix fm = frame_metric_matrix(ref, ref, std::nullopt);
  EXPECT_EQ(fm.values(0, 0), kPsnrCapDb);
}

TEST(FrameMetricMatrix, FrameTooSmallForMsSsimIsAnError) {
  const VideoClip ref = testing::random_clip(16, 16, 2, 36);
  EXPECT_THROW(frame_metric_matrix(ref, ref, std::nullopt), InvalidArgument);
}

TEST(Psnr, Symmetric) {
  std::mt19937 rng(10);
  const Frame a = luma_frame(random_luma(8, 8, rng)), b = luma_frame(random_luma(8, 8, rng));
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(FrameMetricMatrix, MismatchedClipsRejected) {
  const VideoClip a = testing::random_clip(12, 12, 2, 33);
  EXPECT_THROW(frame_metric_matrix(a, testing::random_clip(12, 12, 3, 33), std::nullopt), InvalidArgument);
  EXPECT_THROW(frame_metric_matrix(a, testing::random_clip(14, 12, 2, 33), std::nullopt), InvalidArgument);
}

TEST(ExternalMetrics, VmafStyleColumnsAndRoundTrip) {
  TempDir dir("fm");
  testing::write_bytes(dir / "vmaf.csv",
                       "Frame,integer_vif_scale0,integer_vif_scale1,integer_vif_scale2,integer_vif_scale3,"
                       "integer_adm2,integer_motion2,vmaf\n"
                       "1,0.5,0.6,0.7,0.8,0.9,3.5,80\n"
                       "0,0.1,0.2,0.3,0.4,0.95,0,90\n");
  const ExternalMetricTable ext = read_external_metrics(dir / "vmaf.csv");
  EXPECT_EQ(ext.values(0, 0), 0.1);
  const VideoClip ref = testing::random_clip(176, 176, 2, 34);
  FrameMetricMatrix fm = frame_metric_matrix(ref, distort(ref, 5), ext);
  EXPECT_FALSE(fm.external_missing);
  EXPECT_EQ(fm.values(1, 5), 0.5);
  EXPECT_EQ(fm.values(1, 10), 3.5);
  fm.clip_id = "c1";
  fm.variant = "flip";
  write_frame_metrics(fm, dir / "fm.csv");
  const FrameMetricMatrix back = read_frame_metrics(dir / "fm.csv");
  EXPECT_EQ(back.clip_id, "c1");
  EXPECT_EQ(back.variant, "flip");
  EXPECT_FALSE(back.external_missing);
  EXPECT_EQ(back.values, fm.values);
  EXPECT_EQ(back.channel_names, fm.channel_names);
}

TEST(ExternalMetrics, RejectsGapsAndMissingChannels) {
  TempDir dir("fm");
  testing::write_bytes(dir / "gap.csv", "frame_index,vif_scale0\n0,1\n2,1\n");
  EXPECT_THROW(read_external_metrics(dir / "gap.csv"), ParseError);
  testing::write_bytes(dir / "part.csv", "frame_index,vif_scale0\n0,1\n1,1\n");
  const ExternalMetricTable ext = read_external_metrics(dir / "part.csv");
  const VideoClip ref = testing::random_clip(176, 176, 2, 35);
  EXPECT_THROW(frame_metric_matrix(ref, ref, ext), Error);
}

}  // namespace
}  // namespace mlcvqa
