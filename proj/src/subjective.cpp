#include "mlcvqa/subjective.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "mlcvqa/common.hpp"
#include "mlcvqa/csv.hpp"

namespace mlcvqa {

double t_quantile_975(std::size_t dof) {
  if (dof == 0) throw InvalidArgument("t quantile needs at least one degree of freedom");
  const boost::math::students_t dist(static_cast<double>(dof));
  return boost::math::quantile(dist, 0.975);
}

MeanInterval mean_ci95(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("mean of empty sample");
  const auto n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  MeanInterval out;
  out.mean = sum / static_cast<double>(n);
  if (n == 1) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  if (ss == 0.0) return out;
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  out.half_width = t_quantile_975(n - 1) * sd / std::sqrt(static_cast<double>(n));
  return out;
}

std::vector<RatingRecord> read_ratings(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const auto clip = table.column("clip_id");
  const auto codec = table.column("codec_id");
  const auto rater = table.column("rater_id");
  const auto score = table.column("score");
  std::vector<RatingRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto s = csv::to_int(row[score], table, r);
    if (s < kMinScore || s > kMaxScore) {
      throw ParseError(path.string() + " line " + std::to_string(r + 2) + ": score " + std::to_string(s) +
                       " outside [1, 9]");
    }
    out.push_back({row[clip], row[codec], row[rater], static_cast<int>(s)});
  }
  return out;
}

ClipScore aggregate_clip(std::span<const RatingRecord> votes) {
  if (votes.empty()) throw InvalidArgument("no votes to aggregate");
  std::vector<double> values;
  values.reserve(votes.size());
  for (const auto& v : votes) {
    if (v.clip_id != votes.front().clip_id || v.codec_id != votes.front().codec_id) {
      throw InvalidArgument("votes for different (clip, codec) pairs passed to aggregate_clip");
    }
    if (v.score < kMinScore || v.score > kMaxScore) {
      throw InvalidArgument("score " + std::to_string(v.score) + " outside [1, 9]");
    }
    values.push_back(v.score);
  }
  // Sorting makes the floating-point sum independent of vote order.
  std::sort(values.begin(), values.end());
  const auto mi = mean_ci95(values);
  return {votes.front().clip_id, votes.front().codec_id, mi.mean, mi.half_width, votes.size()};
}

std::vector<ClipScore> aggregate_clips(std::span<const RatingRecord> votes) {
  std::map<std::pair<std::string, std::string>, std::vector<RatingRecord>> groups;
  for (const auto& v : votes) groups[{v.clip_id, v.codec_id}].push_back(v);
  std::vector<ClipScore> out;
  out.reserve(groups.size());
  for (const auto& [key, group] : groups) out.push_back(aggregate_clip(group));
  return out;
}

ModelScore aggregate_model(std::span<const ClipScore> clip_scores, std::span<const RatingRecord> raw_votes,
                           std::span<const std::string> expected_clips) {
  if (clip_scores.empty()) throw InvalidArgument("no clip scores for model aggregation");
  const auto& codec = clip_scores.front().codec_id;
  std::map<std::string, double> by_clip;
  for (const auto& cs : clip_scores) {
    if (cs.codec_id != codec) throw InvalidArgument("clip scores of several codecs passed to aggregate_model");
    if (!by_clip.emplace(cs.clip_id, cs.dmos).second) {
      throw InvalidArgument("codec " + codec + " rated twice on clip " + cs.clip_id);
    }
  }
  for (const auto& clip : expected_clips) {
    if (!by_clip.contains(clip)) {
      throw InvalidArgument("codec " + codec + " lacks a rating for clip " + clip);
    }
  }
  if (by_clip.size() != expected_clips.size()) {
    throw InvalidArgument("codec " + codec + " has clips outside the expected set");
  }
  std::vector<double> values;
  values.reserve(by_clip.size());
  for (const auto& [clip, dmos] : by_clip) values.push_back(dmos);
  const auto mi = mean_ci95(values);
  std::size_t pooled = 0;
  for (const auto& v : raw_votes) {
    if (v.codec_id == codec && by_clip.contains(v.clip_id)) ++pooled;
  }
  return {codec, mi.mean, mi.half_width, pooled};
}

std::vector<ModelScore> aggregate_models(std::span<const ClipScore> clip_scores,
                                         std::span<const RatingRecord> raw_votes) {
  std::set<std::string> clips;
  std::map<std::string, std::vector<ClipScore>> by_codec;
  for (const auto& cs : clip_scores) {
    clips.insert(cs.clip_id);
    by_codec[cs.codec_id].push_back(cs);
  }
  const std::vector<std::string> expected(clips.begin(), clips.end());
  std::map<std::string, std::vector<RatingRecord>> votes_by_codec;
  for (const auto& v : raw_votes) votes_by_codec[v.codec_id].push_back(v);
  std::vector<ModelScore> out;
  out.reserve(by_codec.size());
  for (const auto& [codec, scores] : by_codec) {
    out.push_back(aggregate_model(scores, votes_by_codec[codec], expected));
  }
  return out;
}

Eigen::VectorXd rescale_linear(const Eigen::Ref<const Eigen::VectorXd>& values, double lo, double hi) {
  if (values.size() == 0) return {};
  const double min = values.minCoeff();
  const double max = values.maxCoeff();
  if (!(max > min)) throw InvalidArgument("cannot min-max rescale a constant sequence");
  const double scale = (hi - lo) / (max - min);
  Eigen::VectorXd out = ((values.array() - min) * scale + lo).matrix();
  // Pin the extremes so the observed range maps exactly onto [lo, hi].
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values[i] == min) out[i] = lo;
    if (values[i] == max) out[i] = hi;
  }
  return out;
}

Eigen::VectorXd rescale_fit(const Eigen::Ref<const Eigen::VectorXd>& values,
                            const Eigen::Ref<const Eigen::VectorXd>& targets) {
  if (values.size() != targets.size()) throw InvalidArgument("rescale_fit length mismatch");
  if (values.size() < 2) throw InvalidArgument("rescale_fit needs at least two points");
  const double mx = values.mean();
  const double my = targets.mean();
  const double sxx = (values.array() - mx).square().sum();
  if (sxx == 0.0) throw InvalidArgument("cannot fit a constant sequence");
  const double sxy = ((values.array() - mx) * (targets.array() - my)).sum();
  const double slope = sxy / sxx;
  return ((values.array() - mx) * slope + my).matrix();
}

void write_clip_scores(std::span<const ClipScore> scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "clip_id,codec_id,dmos,ci95,n\n";
  for (const auto& s : scores) {
    out << s.clip_id << ',' << s.codec_id << ',' << csv::format_double(s.dmos) << ','
        << csv::format_double(s.ci95_half_width) << ',' << s.n_votes << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

std::vector<ClipScore> read_clip_scores(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  const auto clip = table.column("clip_id");
  const auto codec = table.column("codec_id");
  const auto dmos = table.column("dmos");
  const auto ci = table.column("ci95");
  const auto n = table.column("n");
  std::vector<ClipScore> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    out.push_back({row[clip], row[codec], csv::to_double(row[dmos], table, r), csv::to_double(row[ci], table, r),
                   static_cast<std::size_t>(csv::to_int(row[n], table, r))});
  }
  return out;
}

void write_model_scores(std::span<const ModelScore> scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "codec_id,dmos,ci95,n\n";
  for (const auto& s : scores) {
    out << s.codec_id << ',' << csv::format_double(s.dmos) << ',' << csv::format_double(s.ci95_half_width)
        << ',' << s.n_votes << '\n';
  }
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace mlcvqa
