#include "mlcvqa/bootstrap.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "mlcvqa/common.hpp"
#include "mlcvqa/csv.hpp"
#include "mlcvqa/frame_metrics.hpp"
#include "mlcvqa/parallel.hpp"

namespace mlcvqa {
namespace {

struct ClipGroup {
  std::string clip_id;
  std::string codec_id;
  std::vector<RatingRecord> votes;
};

struct CodecGroup {
  std::string codec_id;
  std::vector<std::size_t> clips;  // indices into the clip groups
  std::vector<int> pooled;         // all scores of the codec
};

struct Groups {
  std::vector<ClipGroup> clips;
  std::vector<CodecGroup> codecs;
};

Groups group_votes(std::span<const RatingRecord> ratings) {
  std::map<std::pair<std::string, std::string>, std::vector<RatingRecord>> by_pair;
  for (const auto& r : ratings) by_pair[{r.clip_id, r.codec_id}].push_back(r);
  Groups g;
  std::map<std::string, std::size_t> codec_index;
  for (auto& [key, votes] : by_pair) {
    g.clips.push_back({key.first, key.second, std::move(votes)});
  }
  for (std::size_t i = 0; i < g.clips.size(); ++i) {
    const auto& codec = g.clips[i].codec_id;
    auto [it, inserted] = codec_index.emplace(codec, g.codecs.size());
    if (inserted) g.codecs.push_back({codec, {}, {}});
    auto& cg = g.codecs[it->second];
    cg.clips.push_back(i);
    for (const auto& v : g.clips[i].votes) cg.pooled.push_back(v.score);
  }
  std::sort(g.codecs.begin(), g.codecs.end(),
            [](const CodecGroup& a, const CodecGroup& b) { return a.codec_id < b.codec_id; });
  return g;
}

double sample_mean(std::span<const int> scores, std::size_t n, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, scores.size() - 1);
  long long sum = 0;
  for (std::size_t k = 0; k < n; ++k) sum += scores[pick(rng)];
  return static_cast<double>(sum) / static_cast<double>(n);
}

std::vector<int> scores_of(const ClipGroup& group) {
  std::vector<int> out;
  out.reserve(group.votes.size());
  for (const auto& v : group.votes) out.push_back(v.score);
  return out;
}

std::uint64_t stream_key(MetricLevel level, std::size_t n_votes) {
  return mix_seed(static_cast<std::uint64_t>(n_votes), level == MetricLevel::clip ? 1 : 2);
}

}  // namespace

const char* to_string(MetricName name) {
  switch (name) {
    case MetricName::pcc: return "pcc";
    case MetricName::srcc: return "srcc";
    case MetricName::tau_b: return "tau_b";
    case MetricName::tau_b_95: return "tau_b_95";
    case MetricName::rmse: return "rmse";
  }
  return "";
}

std::vector<MetricReport> bootstrap_votes(std::span<const RatingRecord> ratings, std::size_t n_votes,
                                          MetricLevel level, const BootstrapOptions& options) {
  if (ratings.empty()) throw InvalidArgument("bootstrap: no ratings");
  if (n_votes < 1) throw InvalidArgument("bootstrap: n_votes must be at least 1");
  if (options.reps < 1) throw InvalidArgument("bootstrap: reps must be at least 1");

  const Groups groups = group_votes(ratings);
  std::vector<ClipScore> clip_scores;
  clip_scores.reserve(groups.clips.size());
  for (const auto& g : groups.clips) clip_scores.push_back(aggregate_clip(g.votes));
  std::vector<std::vector<int>> clip_votes;
  for (const auto& g : groups.clips) clip_votes.push_back(scores_of(g));

  std::vector<ScoredItem> reference;
  if (level == MetricLevel::clip) {
    reference = scored_items(clip_scores);
  } else {
    reference = scored_items(aggregate_models(clip_scores, ratings));
  }
  const std::uint64_t rep_seed = mix_seed(options.seed, stream_key(level, n_votes));

  std::vector<MetricReport> reports(options.reps);
  parallel_for(options.reps, options.workers, [&](std::size_t r) {
    Rng rng = make_rng(rep_seed, r);
    const auto m = static_cast<Eigen::Index>(reference.size());
    Eigen::VectorXd subset(m);
    if (level == MetricLevel::clip) {
      for (Eigen::Index i = 0; i < m; ++i) {
        subset[i] = options.degenerate ? clip_scores[static_cast<std::size_t>(i)].dmos
                                       : sample_mean(clip_votes[static_cast<std::size_t>(i)], n_votes, rng);
      }
    } else {
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto& codec = groups.codecs[static_cast<std::size_t>(i)];
        if (options.degenerate) {
          subset[i] = reference[static_cast<std::size_t>(i)].dmos;
        } else if (options.model_sampling == ModelSampling::pooled) {
          subset[i] = sample_mean(codec.pooled, n_votes, rng);
        } else {
          double sum = 0.0;
          for (auto c : codec.clips) sum += sample_mean(clip_votes[c], n_votes, rng);
          subset[i] = sum / static_cast<double>(codec.clips.size());
        }
      }
    }
    reports[r] = compare(level, reference, subset);
  });
  return reports;
}

MetricSummaries summarize_reports(std::span<const MetricReport> reports) {
  MetricSummaries out;
  for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
    std::vector<double> values;
    for (const auto& r : reports) {
      Correlation v;
      switch (kAllMetrics[k]) {
        case MetricName::pcc: v = r.pcc; break;
        case MetricName::srcc: v = r.srcc; break;
        case MetricName::tau_b: v = r.tau_b; break;
        case MetricName::tau_b_95: v = r.tau_b_95; break;
        case MetricName::rmse: v = r.rmse; break;
      }
      if (v) values.push_back(*v);
    }
    auto& s = out[k];
    s.defined = values.size();
    if (values.empty()) {
      s.mean = s.ci95_lo = s.ci95_hi = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.ci95_lo = percentile(values, 2.5);
    s.ci95_hi = percentile(values, 97.5);
  }
  return out;
}

BootstrapCurve bootstrap_curve(std::span<const RatingRecord> ratings, std::span<const std::size_t> n_votes,
                               MetricLevel level, const BootstrapOptions& options) {
  BootstrapCurve curve;
  curve.level = level;
  for (auto n : n_votes) {
    const auto reports = bootstrap_votes(ratings, n, level, options);
    curve.n_votes.push_back(n);
    curve.metrics.push_back(summarize_reports(reports));
  }
  return curve;
}

void write_bootstrap_csv(std::span<const BootstrapCurve> curves, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "level,n_votes,metric,mean,ci95_lo,ci95_hi\n";
  for (const auto& curve : curves) {
    for (std::size_t i = 0; i < curve.n_votes.size(); ++i) {
      for (std::size_t k = 0; k < kAllMetrics.size(); ++k) {
        const auto& s = curve.metrics[i][k];
        out << to_string(curve.level) << ',' << curve.n_votes[i] << ',' << to_string(kAllMetrics[k]) << ','
            << csv::format_double(s.mean) << ',' << csv::format_double(s.ci95_lo) << ','
            << csv::format_double(s.ci95_hi) << '\n';
      }
    }
  }
  if (!out) throw Error("write failed for " + path.string());
}

UpperLimit upper_limit(std::span<const RatingRecord> ratings, std::size_t n_clip_votes, std::size_t n_model_votes,
                       const BootstrapOptions& options) {
  UpperLimit out;
  out.clip = summarize_reports(bootstrap_votes(ratings, n_clip_votes, MetricLevel::clip, options));
  out.model = summarize_reports(bootstrap_votes(ratings, n_model_votes, MetricLevel::model, options));
  return out;
}

}  // namespace mlcvqa
