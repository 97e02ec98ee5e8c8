#pragma once

// Global masking, compression schedules and the iterative prune loop.

#include <functional>
#include <string>
#include <vector>

#include "flowprune/scoring.hpp"

namespace flowprune {

enum class ScheduleKind { Linear, Exponential };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

/// Keep-fraction ρ^(−k/n) (exponential) or 1 − (k/n)(1 − 1/ρ) (linear) at
/// step k of n. ρ = 1 is accepted and keeps everything.
struct CompressionSchedule {
  double ratio = 1.0;
  std::size_t iterations = 1;
  ScheduleKind kind = ScheduleKind::Exponential;

  void validate() const;
  double keep_fraction(std::size_t step) const;
};

/// ⌈fraction × total⌉ with a relative guard so that exact products such as
/// N · (L / N) do not round up through representation error. At least one
/// entry is kept when total > 0.
std::size_t keep_count(double fraction, std::size_t total);

/// Keeps exactly `keep` present entries with the highest scores. Ties are
/// resolved by (layer, flat index): lower positions are removed first.
Mask select_top_k(const ScoreMap& scores, std::size_t keep);

/// select_top_k with keep = ⌈keep_fraction × scores.count()⌉.
Mask select_mask(const ScoreMap& scores, double keep_fraction);

/// Pruned score mass over the smallest per-layer remaining score mass.
double prune_cut_ratio(const NetworkSpec& spec, const ScoreMap& scores, const Mask& old_mask,
                       const Mask& new_mask);

struct CollapseResult {
  bool collapsed = false;
  std::vector<std::size_t> layers;
};

/// Some prunable layer is empty while parameters remain elsewhere.
CollapseResult detect_layer_collapse(const NetworkSpec& spec, const Mask& mask);

struct IterationRecord {
  std::size_t iteration = 0;
  double keep_fraction = 1.0;
  std::size_t target = 0;      // global keep count after this step
  bool noop = false;           // no parameter left the mask
  double threshold = 0.0;      // highest removed score (lowest kept if none removed)
  double prune_size = 0.0;
  double min_cut_size = 0.0;
  double prune_cut_ratio = 0.0;
  std::vector<LayerCount> layers;  // remaining counts after this step
};

struct PruneReport {
  std::string scorer;
  CompressionSchedule schedule;
  std::size_t total = 0;
  std::vector<IterationRecord> iterations;
  Mask final_mask;
  bool collapsed = false;
  std::vector<std::size_t> collapsed_layers;
  std::size_t passes = 0;
};

/// Scores the network under the current mask. θ is passed unmasked.
using Scorer = std::function<ScoreMap(const ParamSet& params, const Mask& mask)>;

struct PruneOptions {
  /// Keep at least one weight per layer regardless of scores. Off by
  /// default so collapse behaviour of the raw scorers is observable.
  bool ensure_survivor = false;
  Mask initial_mask;  // all-ones when empty
  PassCounter* counter = nullptr;
};

PruneReport prune(const NetworkSpec& spec, const ParamSet& params, const Scorer& scorer,
                  const CompressionSchedule& schedule, const PruneOptions& options = {});

/// Scorer bound to a ScoringContext.
Scorer make_scorer(const NetworkSpec& spec, ScoringContext context);

/// 10^{0, step, 2·step, ...} up to ρ_max, with ρ_max itself appended.
std::vector<double> default_ratio_grid(double max_ratio, double step = 0.25);

struct CriticalCompression {
  double critical = 1.0;  // largest ρ before the first collapse on the grid
  std::vector<double> ratios;
  std::vector<CollapseResult> collapse;
};

/// Sweeps `grid`, pruning from scratch with `schedule_for(ρ)` at each point.
CriticalCompression critical_compression(
    const NetworkSpec& spec, const ParamSet& params, const Scorer& scorer,
    const std::function<CompressionSchedule(double)>& schedule_for,
    const std::vector<double>& grid);

/// SynFlow's default family: n = 100, exponential.
CompressionSchedule synflow_schedule(double ratio, std::size_t iterations = 100);

}  // namespace flowprune
