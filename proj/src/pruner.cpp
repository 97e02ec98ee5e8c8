#include "flowprune/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <tuple>

namespace flowprune {

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::Linear ? "linear" : "exponential";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "exponential") return ScheduleKind::Exponential;
  throw std::invalid_argument("unknown schedule '" + name + "'");
}

void CompressionSchedule::validate() const {
  if (!(ratio >= 1.0) || !std::isfinite(ratio))
    throw DomainError("compression ratio must be a finite value >= 1, got " + std::to_string(ratio));
  if (iterations == 0) throw DomainError("compression schedule needs at least one iteration");
}

double CompressionSchedule::keep_fraction(std::size_t step) const {
  const double t = double(step) / double(iterations);
  if (kind == ScheduleKind::Exponential) return std::pow(ratio, -t);
  return 1.0 - t * (1.0 - 1.0 / ratio);
}

std::size_t keep_count(double fraction, std::size_t total) {
  const double x = fraction * double(total);
  const double k = std::ceil(x - 1e-9 * std::max(1.0, x));
  return std::clamp<std::size_t>(k <= 0.0 ? 0 : std::size_t(k), total == 0 ? 0 : 1, total);
}

namespace {

struct Entry {
  double score;
  std::size_t layer;
  std::size_t index;
};

bool lower_rank(const Entry& a, const Entry& b) {
  return std::tie(a.score, a.layer, a.index) < std::tie(b.score, b.layer, b.index);
}

Mask select(const ScoreMap& scores, std::size_t keep, bool ensure_survivor) {
  std::vector<Entry> entries;
  for (std::size_t l = 0; l < scores.values.size(); ++l)
    for (std::size_t i = 0; i < scores.values[l].size(); ++i)
      if (scores.present[l][i]) entries.push_back({scores.values[l][i], l, i});
  if (entries.empty()) throw DomainError("cannot select a mask from an empty score map");
  keep = std::min(keep, entries.size());
  std::sort(entries.begin(), entries.end(), lower_rank);

  Mask mask;
  mask.keep.resize(scores.present.size());
  for (std::size_t l = 0; l < scores.present.size(); ++l) mask.keep[l].assign(scores.present[l].size(), 0);

  std::size_t kept = 0;
  if (ensure_survivor) {
    // the best entry of every non-empty layer is kept first
    std::vector<bool> seen(scores.values.size(), false);
    for (auto it = entries.rbegin(); it != entries.rend() && kept < keep; ++it) {
      if (seen[it->layer]) continue;
      seen[it->layer] = true;
      mask.keep[it->layer][it->index] = 1;
      ++kept;
    }
  }
  for (auto it = entries.rbegin(); it != entries.rend() && kept < keep; ++it) {
    if (mask.keep[it->layer][it->index]) continue;
    mask.keep[it->layer][it->index] = 1;
    ++kept;
  }
  return mask;
}

}  // namespace

Mask select_top_k(const ScoreMap& scores, std::size_t keep) { return select(scores, keep, false); }

Mask select_mask(const ScoreMap& scores, double keep_fraction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
    throw DomainError("keep fraction must lie in (0, 1], got " + std::to_string(keep_fraction));
  const std::size_t n = scores.count();
  if (n == 0) throw DomainError("cannot select a mask from an empty score map");
  return select_top_k(scores, keep_count(keep_fraction, n));
}

double prune_cut_ratio(const NetworkSpec& spec, const ScoreMap& scores, const Mask& old_mask,
                       const Mask& new_mask) {
  if (!new_mask.subset_of(old_mask)) throw StructuralError("new mask is not contained in the old mask");
  double pruned = 0.0;
  double min_cut = std::numeric_limits<double>::infinity();
  for (std::size_t l : spec.prunable_layers()) {
    double layer_total = 0.0;
    for (std::size_t i = 0; i < old_mask.keep[l].size(); ++i) {
      if (!old_mask.keep[l][i]) continue;
      layer_total += scores.values[l][i];
      if (!new_mask.keep[l][i]) pruned += scores.values[l][i];
    }
    min_cut = std::min(min_cut, layer_total);
  }
  if (pruned == 0.0) return 0.0;
  if (!(min_cut > 0.0)) return std::numeric_limits<double>::infinity();
  return pruned / min_cut;
}

CollapseResult detect_layer_collapse(const NetworkSpec& spec, const Mask& mask) {
  CollapseResult result;
  std::size_t remaining = 0;
  for (const LayerCount& c : layer_param_counts(spec, mask)) {
    remaining += c.remaining;
    if (c.remaining == 0) result.layers.push_back(c.layer);
  }
  result.collapsed = !result.layers.empty() && remaining > 0;
  if (!result.collapsed) result.layers.clear();
  return result;
}

PruneReport prune(const NetworkSpec& spec, const ParamSet& params, const Scorer& scorer,
                  const CompressionSchedule& schedule, const PruneOptions& options) {
  schedule.validate();
  Mask mask = options.initial_mask.keep.empty() ? Mask::ones(spec) : options.initial_mask;
  check_congruent(spec, mask);
  PruneReport report;
  report.schedule = schedule;
  report.total = mask.total();
  if (schedule.ratio > double(report.total))
    throw DomainError("compression ratio " + std::to_string(schedule.ratio) + " exceeds the " +
                      std::to_string(report.total) + " prunable parameters");
  const std::size_t passes_before = options.counter ? options.counter->passes : 0;

  for (std::size_t k = 1; k <= schedule.iterations; ++k) {
    IterationRecord rec;
    rec.iteration = k;
    rec.keep_fraction = schedule.keep_fraction(k);
    const std::size_t current = mask.remaining();
    rec.target = std::min(current, keep_count(rec.keep_fraction, report.total));
    ScoreMap scores;
    try {
      scores = scorer(params, mask);
    } catch (const std::exception& e) {
      throw std::runtime_error("scoring failed at iteration " + std::to_string(k) + ": " + e.what());
    }
    Mask next = select(scores, rec.target, options.ensure_survivor);
    rec.noop = next.remaining() == current;

    double highest_removed = -std::numeric_limits<double>::infinity();
    double lowest_kept = std::numeric_limits<double>::infinity();
    rec.min_cut_size = std::numeric_limits<double>::infinity();
    for (std::size_t l : spec.prunable_layers()) {
      double layer_total = 0.0;
      for (std::size_t i = 0; i < mask.keep[l].size(); ++i) {
        if (!mask.keep[l][i]) continue;
        const double s = scores.values[l][i];
        layer_total += s;
        if (next.keep[l][i]) {
          lowest_kept = std::min(lowest_kept, s);
        } else {
          rec.prune_size += s;
          highest_removed = std::max(highest_removed, s);
        }
      }
      rec.min_cut_size = std::min(rec.min_cut_size, layer_total);
    }
    rec.threshold = rec.noop ? lowest_kept : highest_removed;
    rec.prune_cut_ratio = prune_cut_ratio(spec, scores, mask, next);
    mask = std::move(next);
    rec.layers = layer_param_counts(spec, mask);
    report.iterations.push_back(std::move(rec));
  }
  const CollapseResult collapse = detect_layer_collapse(spec, mask);
  report.collapsed = collapse.collapsed;
  report.collapsed_layers = collapse.layers;
  report.final_mask = std::move(mask);
  report.passes = options.counter ? options.counter->passes - passes_before : 0;
  return report;
}

Scorer make_scorer(const NetworkSpec& spec, ScoringContext context) {
  context.validate();
  return [&spec, context = std::move(context)](const ParamSet& params, const Mask& mask) {
    return compute_scores(spec, params, mask, context);
  };
}

std::vector<double> default_ratio_grid(double max_ratio, double step) {
  std::vector<double> grid;
  for (std::size_t i = 0;; ++i) {
    const double r = std::pow(10.0, double(i) * step);
    if (r > max_ratio * (1.0 - 1e-12)) break;
    grid.push_back(r);
  }
  grid.push_back(max_ratio);
  return grid;
}

CriticalCompression critical_compression(
    const NetworkSpec& spec, const ParamSet& params, const Scorer& scorer,
    const std::function<CompressionSchedule(double)>& schedule_for,
    const std::vector<double>& grid) {
  CriticalCompression result;
  bool collapsed_before = false;
  for (double ratio : grid) {
    const PruneReport report = prune(spec, params, scorer, schedule_for(ratio));
    CollapseResult c{report.collapsed, report.collapsed_layers};
    if (!c.collapsed && !collapsed_before) result.critical = std::max(result.critical, ratio);
    collapsed_before = collapsed_before || c.collapsed;
    result.ratios.push_back(ratio);
    result.collapse.push_back(std::move(c));
  }
  return result;
}

CompressionSchedule synflow_schedule(double ratio, std::size_t iterations) {
  return {ratio, iterations, ScheduleKind::Exponential};
}

}  // namespace flowprune
