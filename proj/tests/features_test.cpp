#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "mlcvqa/common.hpp"
#include "mlcvqa/features.hpp"
#include "test_util.hpp"

namespace mlcvqa {
namespace {

using testing::TempDir;

FeatureSequence random_sequence(Eigen::Index t, Eigen::Index d, std::uint32_t seed, std::string variant = "none") {
  std::mt19937 rng(seed);
  std::normal_distribution<float> n;
  FeatureSequence s;
  s.clip_id = "clip";
  s.variant = std::move(variant);
  s.data.resize(t, d);
  for (Eigen::Index i = 0; i < s.data.size(); ++i) s.data.data()[i] = n(rng);
  return s;
}

FrameMetricMatrix ramp_metrics(Eigen::Index frames) {
  FrameMetricMatrix fm;
  fm.values.resize(frames, 11);
  for (Eigen::Index r = 0; r < frames; ++r)
    for (Eigen::Index c = 0; c < 11; ++c) fm.values(r, c) = 100.0 * r + c;
  for (const char* name : kDefaultChannels) fm.channel_names.emplace_back(name);
  return fm;
}

TEST(WindowPlan, Counts) {
  EXPECT_EQ(window_plan(64).steps(), 1);
  EXPECT_EQ(window_plan(300).steps(), 15);
  EXPECT_EQ(window_plan(79).steps(), 1);
  EXPECT_EQ(window_plan(80).steps(), 2);
  EXPECT_THROW(window_plan(63), InvalidArgument);
  EXPECT_THROW(window_plan(0), InvalidArgument);
}

TEST(WindowPlan, SampledIndices) {
  const WindowPlan plan = window_plan(300);
  for (Eigen::Index w = 0; w < plan.steps(); ++w) {
    const Window& win = plan.windows[w];
    EXPECT_EQ(win.chunk_start, 16 * w);
    ASSERT_EQ(win.sampled.size(), 32u);
    for (std::size_t k = 0; k < 32; ++k) EXPECT_EQ(win.sampled[k], win.chunk_start + 2 * static_cast<Eigen::Index>(k));
  }
}

TEST(WindowPlan, IndicesStayInRangeForRandomLengths) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<Eigen::Index> len(64, 20000);
  for (int t = 0; t < 10000; ++t) {
    const Eigen::Index n = len(rng);
    const WindowPlan plan = window_plan(n);
    ASSERT_EQ(plan.steps(), (n - 64) / 16 + 1);
    ASSERT_LT(plan.windows.back().sampled.back(), n);
  }
}

TEST(FeatureFile, RoundTripIsBitExact) {
  TempDir dir("feat");
  FeatureSequence s = random_sequence(15, 2304, 2, "hflip");
  s.flags = feature_flags::metrics_on_augmented;
  write_features(s, dir / "a.mlcv");
  const FeatureSequence back = read_features(dir / "a.mlcv");
  EXPECT_EQ(back.clip_id, "clip");
  EXPECT_EQ(back.variant, "hflip");
  EXPECT_EQ(back.flags, feature_flags::metrics_on_augmented);
  EXPECT_EQ(back.kind(), FeatureKind::deep);
  EXPECT_EQ(std::memcmp(back.data.data(), s.data.data(), sizeof(float) * s.data.size()), 0);
}

// Layout written field by field, as another producer would.
std::string hand_built_file(std::uint32_t t, std::uint32_t d, const std::vector<float>& payload) {
  std::string bytes = "MLCV";
  auto put = [&](auto v) {
    for (std::size_t i = 0; i < sizeof(v); ++i) bytes.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  };
  put(std::uint16_t{1});
  put(std::uint16_t{0});
  put(t);
  put(d);
  put(std::uint32_t{2});
  bytes += "c7";
  put(std::uint32_t{4});
  bytes += "none";
  for (float f : payload) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put(u);
  }
  return bytes;
}

TEST(FeatureFile, ParsesExternallyProducedLayout) {
  TempDir dir("feat");
  testing::write_bytes(dir / "a.mlcv", hand_built_file(2, 3, {1, 2, 3, 4, 5, 6.5f}));
  const FeatureSequence s = read_features(dir / "a.mlcv");
  EXPECT_EQ(s.clip_id, "c7");
  EXPECT_EQ(s.steps(), 2);
  EXPECT_EQ(s.dim(), 3);
  EXPECT_EQ(s.kind(), FeatureKind::custom);
  EXPECT_EQ(s.data(1, 2), 6.5f);
  EXPECT_EQ(s.data(0, 1), 2.0f);
  // The writer emits the same bytes.
  write_features(s, dir / "b.mlcv");
  EXPECT_EQ(testing::read_bytes(dir / "b.mlcv"), testing::read_bytes(dir / "a.mlcv"));
}

TEST(FeatureFile, Rejections) {
  TempDir dir("feat");
  std::string ok = hand_built_file(2, 3, {1, 2, 3, 4, 5, 6});
  std::string bad_magic = ok;
  bad_magic[0] = 'X';
  testing::write_bytes(dir / "m.mlcv", bad_magic);
  EXPECT_THROW(read_features(dir / "m.mlcv"), ParseError);
  testing::write_bytes(dir / "t.mlcv", ok.substr(0, ok.size() - 4));
  EXPECT_THROW(read_features(dir / "t.mlcv"), ParseError);
  testing::write_bytes(dir / "x.mlcv", ok + "abcd");
  EXPECT_THROW(read_features(dir / "x.mlcv"), ParseError);
  testing::write_bytes(dir / "n.mlcv", hand_built_file(2, 3, {1, 2, std::numeric_limits<float>::quiet_NaN(), 4, 5, 6}));
  EXPECT_THROW(read_features(dir / "n.mlcv"), ParseError);
  testing::write_bytes(dir / "z.mlcv", hand_built_file(0, 3, {}));
  EXPECT_THROW(read_features(dir / "z.mlcv"), ParseError);
}

TEST(FeatureFile, AssembledDimensionIsTagged) {
  TempDir dir("feat");
  write_features(random_sequence(2, kAssembledFeatureDim, 3), dir / "a.mlcv");
  EXPECT_EQ(read_features(dir / "a.mlcv").kind(), FeatureKind::assembled);
  EXPECT_EQ(feature_kind(4608), FeatureKind::concatenated);
}

TEST(Sidecar, RoundTrip) {
  TempDir dir("feat");
  const FeatureSidecar sc{"c", "hflip", 300, 29.97, "horizontal flip"};
  write_sidecar(sc, dir / "a.mlcv");
  EXPECT_TRUE(std::filesystem::exists(dir / "a.mlcv.json"));
  const auto back = read_sidecar(dir / "a.mlcv");
  ASSERT_TRUE(back);
  EXPECT_EQ(back->n_frames, 300);
  EXPECT_EQ(back->fps, 29.97);
  EXPECT_EQ(back->augmentation, "horizontal flip");
  EXPECT_FALSE(read_sidecar(dir / "none.mlcv"));
}

TEST(Assembly, DimensionChain) {
  const FeatureSequence enc = random_sequence(15, kDeepFeatureDim, 4), ref = random_sequence(15, kDeepFeatureDim, 5);
  EXPECT_EQ(kDeepFeatureDim, 2304);
  const FeatureSequence sf = concat_difference(enc, ref);
  EXPECT_EQ(sf.dim(), 4608);
  EXPECT_EQ(sf.steps(), 15);
  const FeatureSequence x = assemble_pair(enc, ref, ramp_metrics(300), window_plan(300));
  EXPECT_EQ(x.steps(), 15);
  EXPECT_EQ(x.dim(), 4960);
  EXPECT_EQ(x.kind(), FeatureKind::assembled);
  for (Eigen::Index t = 0; t < 15; ++t)
    for (Eigen::Index c = 0; c < kDeepFeatureDim; ++c) {
      ASSERT_EQ(x.data(t, c), enc.data(t, c));
      ASSERT_EQ(x.data(t, kDeepFeatureDim + c), static_cast<float>(double(enc.data(t, c)) - double(ref.data(t, c))));
    }
}

TEST(Assembly, IdenticalInputsHaveExactZeroDifference) {
  const FeatureSequence enc = random_sequence(3, kDeepFeatureDim, 6);
  const FeatureSequence x = assemble_pair(enc, enc, ramp_metrics(100), window_plan(100));
  EXPECT_TRUE((x.data.middleCols(kDeepFeatureDim, kDeepFeatureDim).array() == 0.0f).all());
}

TEST(Assembly, PoolingMatchesDirectIndexing) {
  const FrameMetricMatrix fm = ramp_metrics(64);
  const Eigen::MatrixXd pooled = pool_frame_metrics(fm, window_plan(64));
  ASSERT_EQ(pooled.rows(), 1);
  ASSERT_EQ(pooled.cols(), 352);
  std::vector<double> expected;
  for (int frame = 0; frame <= 62; frame += 2)
    for (int c = 0; c < 11; ++c) expected.push_back(100.0 * frame + c);
  for (int i = 0; i < 352; ++i) EXPECT_EQ(pooled(0, i), expected[i]);
}

TEST(Assembly, PoolingSecondWindow) {
  const Eigen::MatrixXd pooled = pool_frame_metrics(ramp_metrics(100), window_plan(100));
  ASSERT_EQ(pooled.rows(), 3);
  EXPECT_EQ(pooled(1, 0), 1600.0);
  EXPECT_EQ(pooled(2, 351), 100.0 * (32 + 62) + 10);
}

TEST(Assembly, RowPermutationEquivariance) {
  const FeatureSequence enc = random_sequence(4, kDeepFeatureDim, 7), ref = random_sequence(4, kDeepFeatureDim, 8);
  const std::vector<int> perm = {2, 0, 3, 1};
  FeatureSequence penc = enc, pref = ref;
  for (int i = 0; i < 4; ++i) {
    penc.data.row(i) = enc.data.row(perm[i]);
    pref.data.row(i) = ref.data.row(perm[i]);
  }
  const FeatureSequence a = concat_difference(enc, ref), b = concat_difference(penc, pref);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(b.data.row(i), a.data.row(perm[i]));
}

TEST(Assembly, Errors) {
  const FeatureSequence enc = random_sequence(15, kDeepFeatureDim, 9);
  EXPECT_THROW(assemble_pair(enc, random_sequence(14, kDeepFeatureDim, 9), ramp_metrics(300), window_plan(300)),
               InvalidArgument);
  EXPECT_THROW(assemble_pair(enc, enc, ramp_metrics(300), window_plan(320)), InvalidArgument);
  EXPECT_THROW(assemble_pair(enc, enc, ramp_metrics(286), window_plan(300)), InvalidArgument);
  EXPECT_THROW(concat_difference(enc, random_sequence(15, kDeepFeatureDim, 9, "hflip")), InvalidArgument);
  EXPECT_THROW(concat_difference(enc, random_sequence(15, 100, 9)), InvalidArgument);
}

TEST(TemporalSubsample, Parity) {
  for (Eigen::Index t : {2, 3, 10, 15}) {
    const FeatureSequence s = random_sequence(t, 5, 10);
    const auto [even, odd] = temporal_subsample(s);
    EXPECT_EQ(even.steps(), (t + 1) / 2);
    EXPECT_EQ(odd.steps(), t / 2);
    for (Eigen::Index r = 0; r < even.steps(); ++r) EXPECT_EQ(even.data.row(r), s.data.row(2 * r));
    for (Eigen::Index r = 0; r < odd.steps(); ++r) EXPECT_EQ(odd.data.row(r), s.data.row(2 * r + 1));
    EXPECT_TRUE(even.flags & feature_flags::temporally_subsampled);
  }
  EXPECT_THROW(temporal_subsample(random_sequence(1, 5, 11)), InvalidArgument);
}

TEST(TemporalSubsample, PlanSplitMatchesSequenceSplit) {
  const WindowPlan plan = window_plan(300);
  const auto [even, odd] = temporal_subsample(plan);
  EXPECT_EQ(even.steps(), 8);
  EXPECT_EQ(odd.steps(), 7);
  EXPECT_EQ(odd.windows[0].chunk_start, 16);
}

}  // namespace
}  // namespace mlcvqa
