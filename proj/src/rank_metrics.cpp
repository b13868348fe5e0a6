#include "mlcvqa/rank_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "mlcvqa/common.hpp"
#include "mlcvqa/csv.hpp"
#include "mlcvqa/parallel.hpp"

namespace mlcvqa {
namespace {

void require_pair(const VectorRef& a, const VectorRef& b, Eigen::Index min_len, const char* what) {
  if (a.size() != b.size()) {
    throw InvalidArgument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + ")");
  }
  if (a.size() < min_len) {
    throw InvalidArgument(std::string(what) + ": needs at least " + std::to_string(min_len) + " items");
  }
  if (!a.allFinite() || !b.allFinite()) throw InvalidArgument(std::string(what) + ": non-finite input");
}

std::int64_t tie_pairs(std::span<const double> sorted) {
  std::int64_t pairs = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    pairs += t * (t - 1) / 2;
    i = j;
  }
  return pairs;
}

// Stable merge sort of v counting pairs i<j with v[i] > v[j].
std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& scratch, std::size_t lo,
                              std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = count_inversions(v, scratch, lo, mid) + count_inversions(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + static_cast<std::ptrdiff_t>(lo), scratch.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

Correlation pcc(const VectorRef& a, const VectorRef& b) {
  require_pair(a, b, 2, "pcc");
  const Eigen::ArrayXd da = a.array() - a.mean();
  const Eigen::ArrayXd db = b.array() - b.mean();
  const double saa = da.square().sum();
  const double sbb = db.square().sum();
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  const double r = (da * db).sum() / std::sqrt(saa * sbb);
  return std::clamp(r, -1.0, 1.0);
}

Eigen::VectorXd average_ranks(const VectorRef& values, bool descending) {
  const auto n = static_cast<std::size_t>(values.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return descending ? values[static_cast<Eigen::Index>(i)] > values[static_cast<Eigen::Index>(j)]
                      : values[static_cast<Eigen::Index>(i)] < values[static_cast<Eigen::Index>(j)];
  });
  Eigen::VectorXd ranks(values.size());
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[static_cast<Eigen::Index>(order[j])] == values[static_cast<Eigen::Index>(order[i])]) ++j;
    // Positions i..j-1 (0-based) share the mean of ranks i+1..j.
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[static_cast<Eigen::Index>(order[k])] = rank;
    i = j;
  }
  return ranks;
}

Correlation srcc(const VectorRef& a, const VectorRef& b) {
  require_pair(a, b, 2, "srcc");
  return pcc(average_ranks(a), average_ranks(b));
}

KendallCounts kendall_counts(const VectorRef& a, const VectorRef& b) {
  require_pair(a, b, 2, "tau_b");
  const auto n = static_cast<std::size_t>(a.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    return a[ii] < a[jj] || (a[ii] == a[jj] && b[ii] < b[jj]);
  });

  std::vector<double> sa(n), sb(n);
  for (std::size_t k = 0; k < n; ++k) {
    sa[k] = a[static_cast<Eigen::Index>(order[k])];
    sb[k] = b[static_cast<Eigen::Index>(order[k])];
  }

  KendallCounts counts;
  counts.pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  counts.tied_a = tie_pairs(sa);

  std::int64_t tied_both = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && sa[j] == sa[i] && sb[j] == sb[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    tied_both += t * (t - 1) / 2;
    i = j;
  }

  std::vector<double> scratch(n);
  const std::int64_t swaps = count_inversions(sb, scratch, 0, n);
  counts.tied_b = tie_pairs(sb);  // sb is sorted now
  counts.concordant_minus_discordant =
      counts.pairs - counts.tied_a - counts.tied_b + tied_both - 2 * swaps;
  return counts;
}

Correlation tau_b_from_counts(const KendallCounts& counts) {
  const std::int64_t untied_a = counts.pairs - counts.tied_a;
  const std::int64_t untied_b = counts.pairs - counts.tied_b;
  if (untied_a == 0 || untied_b == 0) return std::nullopt;
  const double tau = static_cast<double>(counts.concordant_minus_discordant) /
                     std::sqrt(static_cast<double>(untied_a) * static_cast<double>(untied_b));
  return std::clamp(tau, -1.0, 1.0);
}

Correlation tau_b(const VectorRef& a, const VectorRef& b) { return tau_b_from_counts(kendall_counts(a, b)); }

double rmse(const VectorRef& a, const VectorRef& b) {
  require_pair(a, b, 1, "rmse");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

std::string item_key(const std::string& clip_id, const std::string& codec_id) { return clip_id + "|" + codec_id; }

std::vector<ScoredItem> scored_items(std::span<const ClipScore> scores) {
  std::vector<ScoredItem> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back({item_key(s.clip_id, s.codec_id), s.dmos, s.ci95_half_width});
  return out;
}

std::vector<ScoredItem> scored_items(std::span<const ModelScore> scores) {
  std::vector<ScoredItem> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back({s.codec_id, s.dmos, s.ci95_half_width});
  return out;
}

RankedList ci_tie_ranking(std::span<const ScoredItem> items) {
  std::vector<const ScoredItem*> sorted;
  sorted.reserve(items.size());
  for (const auto& item : items) {
    if (!std::isfinite(item.dmos) || !(item.ci95_half_width >= 0.0)) {
      throw InvalidArgument("item " + item.id + " has a non-finite DMOS or negative CI");
    }
    sorted.push_back(&item);
  }
  std::sort(sorted.begin(), sorted.end(), [](const ScoredItem* x, const ScoredItem* y) {
    return x->dmos > y->dmos || (x->dmos == y->dmos && x->id < y->id);
  });

  RankedList ranked(sorted.size());
  std::size_t start = 0;
  while (start < sorted.size()) {
    const ScoredItem& anchor = *sorted[start];
    std::size_t end = start + 1;
    while (end < sorted.size()) {
      const ScoredItem& candidate = *sorted[end];
      const double gap = std::abs(candidate.dmos - anchor.dmos);
      if (gap <= anchor.ci95_half_width || gap <= candidate.ci95_half_width) {
        ++end;
      } else {
        break;
      }
    }
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranked[k] = {sorted[k]->id, rank};
    start = end;
  }
  return ranked;
}

Correlation tau_b_95(std::span<const ScoredItem> subjective, std::span<const PredictedItem> predictions) {
  if (subjective.size() != predictions.size()) {
    throw InvalidArgument("tau_b_95: " + std::to_string(subjective.size()) + " subjective items vs " +
                          std::to_string(predictions.size()) + " predictions");
  }
  std::unordered_map<std::string, double> predicted;
  for (const auto& p : predictions) {
    if (!predicted.emplace(p.id, p.score).second) throw InvalidArgument("tau_b_95: duplicate prediction " + p.id);
  }
  const RankedList ranked = ci_tie_ranking(subjective);
  const auto n = static_cast<Eigen::Index>(ranked.size());
  Eigen::VectorXd subjective_rank(n), prediction(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto it = predicted.find(ranked[static_cast<std::size_t>(i)].id);
    if (it == predicted.end()) {
      throw InvalidArgument("tau_b_95: no prediction for item " + ranked[static_cast<std::size_t>(i)].id);
    }
    subjective_rank[i] = ranked[static_cast<std::size_t>(i)].rank;
    prediction[i] = it->second;
  }
  // Both sides ranked with 1 = best.
  return tau_b(subjective_rank, average_ranks(prediction, /*descending=*/true));
}

const char* to_string(MetricLevel level) { return level == MetricLevel::clip ? "clip" : "model"; }

const char* to_string(RescaleMode mode) {
  switch (mode) {
    case RescaleMode::none: return "none";
    case RescaleMode::minmax: return "minmax";
    case RescaleMode::fit: return "fit";
  }
  return "none";
}

RescaleMode parse_rescale_mode(const std::string& text) {
  if (text == "none") return RescaleMode::none;
  if (text == "minmax") return RescaleMode::minmax;
  if (text == "fit") return RescaleMode::fit;
  throw InvalidArgument("unknown rescale mode '" + text + "' (expected none, minmax or fit)");
}

MetricReport compare(MetricLevel level, std::span<const ScoredItem> subjective, const VectorRef& predicted,
                     const std::optional<Eigen::VectorXd>& rmse_predictions) {
  const auto n = static_cast<Eigen::Index>(subjective.size());
  if (predicted.size() != n) throw InvalidArgument("compare: prediction count mismatch");
  Eigen::VectorXd dmos(n);
  std::vector<PredictedItem> items;
  items.reserve(subjective.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    dmos[i] = subjective[static_cast<std::size_t>(i)].dmos;
    items.push_back({subjective[static_cast<std::size_t>(i)].id, predicted[i]});
  }
  MetricReport report;
  report.level = level;
  report.n_items = subjective.size();
  // A single item (e.g. one codec) leaves every correlation undefined.
  if (n >= 2) {
    report.pcc = pcc(dmos, predicted);
    report.srcc = srcc(dmos, predicted);
    report.tau_b = tau_b(dmos, predicted);
    report.tau_b_95 = tau_b_95(subjective, items);
  }
  report.rmse = rmse(dmos, rmse_predictions ? *rmse_predictions : Eigen::VectorXd(predicted));
  return report;
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  const csv::Table table = csv::read(path);
  const auto clip = table.column("clip_id");
  const auto codec = table.column("codec_id");
  const auto score = table.column("score");
  std::vector<PredictionRecord> out;
  out.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const double value = csv::to_double(row[score], table, r);
    if (!std::isfinite(value)) throw ParseError(path + ": non-finite prediction on line " + std::to_string(r + 2));
    out.push_back({row[clip], row[codec], value});
  }
  return out;
}

void write_predictions(std::span<const PredictionRecord> predictions, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << "clip_id,codec_id,score\n";
  for (const auto& p : predictions) out << p.clip_id << ',' << p.codec_id << ',' << csv::format_double(p.score) << '\n';
  if (!out) throw Error("write failed for " + path);
}

namespace {

Eigen::VectorXd to_dmos_scale(const Eigen::VectorXd& predicted, const Eigen::VectorXd& dmos,
                              const EvalOptions& options) {
  switch (options.rescale) {
    case RescaleMode::none: return predicted;
    case RescaleMode::minmax: return rescale_linear(predicted, options.lo, options.hi);
    case RescaleMode::fit: return rescale_fit(predicted, dmos);
  }
  return predicted;
}

Correlation mean_of(std::span<const MetricReport> reports, Correlation MetricReport::*field) {
  double sum = 0.0;
  for (const auto& r : reports) {
    if (!(r.*field)) return std::nullopt;
    sum += *(r.*field);
  }
  return sum / static_cast<double>(reports.size());
}

}  // namespace

MetricReport average_reports(std::span<const MetricReport> reports) {
  if (reports.empty()) throw InvalidArgument("no reports to average");
  MetricReport out;
  out.level = reports.front().level;
  out.pcc = mean_of(reports, &MetricReport::pcc);
  out.srcc = mean_of(reports, &MetricReport::srcc);
  out.tau_b = mean_of(reports, &MetricReport::tau_b);
  out.tau_b_95 = mean_of(reports, &MetricReport::tau_b_95);
  double rmse_sum = 0.0;
  std::size_t items = 0;
  for (const auto& r : reports) {
    rmse_sum += r.rmse;
    items += r.n_items;
  }
  out.rmse = rmse_sum / static_cast<double>(reports.size());
  out.n_items = items;
  return out;
}

EvaluationResult evaluate(std::span<const PredictionRecord> predictions, std::span<const ClipScore> subjective,
                          const FoldAssignment& folds, const EvalOptions& options) {
  std::map<std::string, double> predicted;
  for (const auto& p : predictions) {
    if (!std::isfinite(p.score)) throw InvalidArgument("non-finite prediction for " + item_key(p.clip_id, p.codec_id));
    if (!predicted.emplace(item_key(p.clip_id, p.codec_id), p.score).second) {
      throw InvalidArgument("duplicate prediction for " + item_key(p.clip_id, p.codec_id));
    }
  }
  std::set<std::string> subjective_keys;
  std::set<std::string> all_clips;
  for (const auto& s : subjective) {
    subjective_keys.insert(item_key(s.clip_id, s.codec_id));
    all_clips.insert(s.clip_id);
  }
  for (const auto& [key, score] : predicted) {
    if (!subjective_keys.contains(key)) throw InvalidArgument("prediction for " + key + " has no subjective score");
  }

  FoldAssignment effective = folds;
  if (effective.empty()) effective.emplace_back(all_clips.begin(), all_clips.end());

  EvaluationResult result;
  result.rmse_scale = options.rescale;
  for (std::size_t f = 0; f < effective.size(); ++f) {
    const std::set<std::string> test_clips(effective[f].begin(), effective[f].end());
    for (const auto& clip : test_clips) {
      if (!all_clips.contains(clip)) {
        throw InvalidArgument("fold " + std::to_string(f) + " names clip " + clip + " without subjective data");
      }
    }
    std::vector<ClipScore> fold_scores;
    for (const auto& s : subjective) {
      if (test_clips.contains(s.clip_id)) fold_scores.push_back(s);
    }
    const auto n = static_cast<Eigen::Index>(fold_scores.size());
    Eigen::VectorXd pred(n), dmos(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& s = fold_scores[static_cast<std::size_t>(i)];
      const auto it = predicted.find(item_key(s.clip_id, s.codec_id));
      if (it == predicted.end()) {
        throw InvalidArgument("fold " + std::to_string(f) + ": no prediction for " + item_key(s.clip_id, s.codec_id));
      }
      pred[i] = it->second;
      dmos[i] = s.dmos;
    }
    const Eigen::VectorXd scaled = to_dmos_scale(pred, dmos, options);
    const auto clip_items = scored_items(fold_scores);
    result.clip_folds.push_back(compare(MetricLevel::clip, clip_items, pred, scaled));

    const auto models = aggregate_models(fold_scores, {});
    std::map<std::string, std::pair<double, double>> sums;  // codec -> (raw, scaled)
    std::map<std::string, std::size_t> counts;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& codec = fold_scores[static_cast<std::size_t>(i)].codec_id;
      sums[codec].first += pred[i];
      sums[codec].second += scaled[i];
      ++counts[codec];
    }
    const auto m = static_cast<Eigen::Index>(models.size());
    Eigen::VectorXd model_pred(m), model_scaled(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& codec = models[static_cast<std::size_t>(i)].codec_id;
      const auto c = static_cast<double>(counts[codec]);
      model_pred[i] = sums[codec].first / c;
      model_scaled[i] = sums[codec].second / c;
    }
    result.model_folds.push_back(compare(MetricLevel::model, scored_items(models), model_pred, model_scaled));
  }
  result.clip = average_reports(result.clip_folds);
  result.model = average_reports(result.model_folds);
  return result;
}

SignificanceResult paired_significance(const VectorRef& errors_a, const VectorRef& errors_b, std::size_t reps,
                                       std::uint64_t seed, unsigned workers) {
  require_pair(errors_a, errors_b, 5, "paired_significance");
  if (reps < 1000) throw InvalidArgument("paired_significance: reps must be at least 1000");
  const Eigen::VectorXd diff = errors_a - errors_b;
  const auto n = static_cast<std::size_t>(diff.size());
  std::vector<double> means(reps);
  parallel_for(reps, workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, r);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) sum += diff[static_cast<Eigen::Index>(pick(rng))];
    means[r] = sum / static_cast<double>(n);
  });
  std::size_t at_or_below = 0, at_or_above = 0;
  for (double m : means) {
    if (m <= 0.0) ++at_or_below;
    if (m >= 0.0) ++at_or_above;
  }
  SignificanceResult result;
  result.reps = reps;
  result.mean_difference = diff.mean();
  result.p_value =
      std::min(1.0, 2.0 * static_cast<double>(std::min(at_or_below, at_or_above)) / static_cast<double>(reps));
  result.significant_95 = result.p_value < 0.05;
  result.significant_90 = result.p_value < 0.10;
  return result;
}

}  // namespace mlcvqa
