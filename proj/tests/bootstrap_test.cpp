#include <gtest/gtest.h>

#include <cmath>

#include "mlcvqa/bootstrap.hpp"
#include "mlcvqa/common.hpp"
#include "test_util.hpp"

namespace mlcvqa {
namespace {

constexpr std::size_t kRmse = 4;
constexpr std::size_t kSrcc = 1;

TEST(Bootstrap, DegenerateModeReproducesFullData) {
  const auto votes = testing::gaussian_votes(6, 4, 12, 1.0, 1);
  BootstrapOptions opts;
  opts.reps = 1;
  opts.degenerate = true;
  const auto clip_scores = aggregate_clips(votes);
  const auto model_scores = aggregate_models(clip_scores, votes);
  for (MetricLevel level : {MetricLevel::clip, MetricLevel::model}) {
    const auto reports = bootstrap_votes(votes, 12, level, opts);
    ASSERT_EQ(reports.size(), 1u);
    EXPECT_NEAR(*reports[0].pcc, 1.0, 1e-12);
    EXPECT_NEAR(*reports[0].srcc, 1.0, 1e-12);
    EXPECT_EQ(*reports[0].tau_b, 1.0);
    EXPECT_EQ(reports[0].rmse, 0.0);
    // tau_b_95 of a perfect predictor is capped by the CI ties of the
    // reference side.
    const auto items = level == MetricLevel::clip ? scored_items(clip_scores) : scored_items(model_scores);
    std::vector<PredictedItem> perfect;
    for (const auto& item : items) perfect.push_back({item.id, item.dmos});
    EXPECT_EQ(reports[0].tau_b_95, tau_b_95(items, perfect));
  }
}

TEST(Bootstrap, ZeroVarianceVotesGiveZeroRmse) {
  std::vector<RatingRecord> votes;
  for (int c = 0; c < 5; ++c)
    for (int v = 0; v < 6; ++v) votes.push_back({"c" + std::to_string(c), "k", "r" + std::to_string(v), 1 + c});
  BootstrapOptions opts;
  opts.reps = 20;
  for (const auto& r : bootstrap_votes(votes, 3, MetricLevel::clip, opts)) EXPECT_EQ(r.rmse, 0.0);
}

TEST(Bootstrap, MoreVotesReduceRmse) {
  const auto votes = testing::gaussian_votes(10, 5, 100, 1.0, 2);
  BootstrapOptions opts;
  opts.reps = 200;
  const auto few = summarize_reports(bootstrap_votes(votes, 10, MetricLevel::clip, opts));
  const auto many = summarize_reports(bootstrap_votes(votes, 100, MetricLevel::clip, opts));
  EXPECT_LT(many[kRmse].mean, few[kRmse].mean);
  EXPECT_GT(many[kSrcc].mean, few[kSrcc].mean);
}

TEST(Bootstrap, DeterministicAcrossWorkers) {
  const auto votes = testing::gaussian_votes(5, 6, 8, 1.5, 3);
  BootstrapOptions a;
  a.reps = 30;
  a.seed = 17;
  BootstrapOptions b = a;
  b.workers = 3;
  for (MetricLevel level : {MetricLevel::clip, MetricLevel::model}) {
    const auto ra = bootstrap_votes(votes, 4, level, a), rb = bootstrap_votes(votes, 4, level, b);
    ASSERT_EQ(ra.size(), rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
      EXPECT_EQ(ra[i].pcc, rb[i].pcc);
      EXPECT_EQ(ra[i].tau_b_95, rb[i].tau_b_95);
      EXPECT_EQ(ra[i].rmse, rb[i].rmse);
    }
  }
  b.seed = 18;
  EXPECT_NE(bootstrap_votes(votes, 4, MetricLevel::clip, a)[0].rmse,
            bootstrap_votes(votes, 4, MetricLevel::clip, b)[0].rmse);
}

TEST(Bootstrap, StratifiedModelSampling) {
  const auto votes = testing::gaussian_votes(4, 5, 10, 1.0, 4);
  BootstrapOptions opts;
  opts.reps = 10;
  opts.model_sampling = ModelSampling::stratified;
  const auto reports = bootstrap_votes(votes, 5, MetricLevel::model, opts);
  ASSERT_EQ(reports.size(), 10u);
  for (const auto& r : reports) EXPECT_EQ(r.n_items, 5u);
}

TEST(Bootstrap, Errors) {
  const auto votes = testing::gaussian_votes(2, 2, 3, 1.0, 5);
  BootstrapOptions opts;
  EXPECT_THROW(bootstrap_votes(votes, 0, MetricLevel::clip, opts), InvalidArgument);
  EXPECT_THROW(bootstrap_votes(std::vector<RatingRecord>{}, 3, MetricLevel::clip, opts), InvalidArgument);
  opts.reps = 0;
  EXPECT_THROW(bootstrap_votes(votes, 3, MetricLevel::clip, opts), InvalidArgument);
}

TEST(Summaries, PercentilesAndUndefinedMetrics) {
  std::vector<MetricReport> reports(3);
  for (int i = 0; i < 3; ++i) {
    reports[i].pcc = 0.1 * (i + 1);
    reports[i].rmse = i;
  }
  reports[1].pcc.reset();
  const auto s = summarize_reports(reports);
  EXPECT_NEAR(s[0].mean, 0.2, 1e-15);
  EXPECT_EQ(s[0].defined, 2u);
  EXPECT_TRUE(std::isnan(s[kSrcc].mean));
  EXPECT_EQ(s[kRmse].mean, 1.0);
  EXPECT_NEAR(s[kRmse].ci95_lo, 0.05, 1e-12);
  EXPECT_NEAR(s[kRmse].ci95_hi, 1.95, 1e-12);
}

TEST(Curve, CsvShapeAndStability) {
  const auto votes = testing::gaussian_votes(8, 4, 30, 1.0, 6);
  BootstrapOptions opts;
  opts.reps = 100;
  const std::vector<std::size_t> ns = {5, 20};
  const BootstrapCurve curve = bootstrap_curve(votes, ns, MetricLevel::clip, opts);
  ASSERT_EQ(curve.metrics.size(), 2u);
  for (const auto& m : curve.metrics)
    for (const auto& s : m) EXPECT_LE(s.ci95_lo, s.ci95_hi);

  // Doubling the repetitions moves the means by less than the spread.
  opts.reps = 200;
  const BootstrapCurve doubled = bootstrap_curve(votes, ns, MetricLevel::clip, opts);
  for (std::size_t i = 0; i < ns.size(); ++i)
    for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
      const auto& a = curve.metrics[i][m];
      EXPECT_LT(std::abs(a.mean - doubled.metrics[i][m].mean), a.ci95_hi - a.ci95_lo + 1e-12);
    }

  testing::TempDir dir("boot");
  const std::vector<BootstrapCurve> curves = {curve};
  write_bootstrap_csv(curves, dir / "b.csv");
  const std::string text = testing::read_bytes(dir / "b.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "level,n_votes,metric,mean,ci95_lo,ci95_hi");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 2 * 5);
}

TEST(UpperLimit, FullDataDegenerate) {
  const auto votes = testing::gaussian_votes(5, 4, 10, 1.0, 7);
  BootstrapOptions opts;
  opts.reps = 1;
  opts.degenerate = true;
  const UpperLimit u = upper_limit(votes, 10, 50, opts);
  EXPECT_NEAR(u.clip[0].mean, 1.0, 1e-12);
  EXPECT_NEAR(u.model[0].mean, 1.0, 1e-12);
  EXPECT_EQ(u.clip[kRmse].mean, 0.0);
}

}  // namespace
}  // namespace mlcvqa
