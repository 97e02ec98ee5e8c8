#pragma once

// Experiment layer: synthetic data, a small SGD trainer, compression sweeps,
// toy iterative magnitude pruning and pass accounting.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flowprune/pruner.hpp"

namespace flowprune {

struct Dataset {
  std::size_t classes = 0;
  Batch train;
  Batch test;
};

struct SyntheticOptions {
  std::size_t classes = 10;
  Shape sample_shape{16};
  std::size_t samples = 1000;   // train + test
  double test_fraction = 0.2;
  double separation = 3.0;      // distance of each class mean from the origin
  std::uint64_t seed = 0;
};

/// Gaussian clusters: class means at `separation` along random unit
/// directions, unit covariance. Labels are balanced within each split.
Dataset gen_synthetic(const SyntheticOptions& options);
Dataset gen_synthetic(std::size_t classes, std::size_t dim, std::size_t samples, std::uint64_t seed);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::size_t> lr_drops;  // epochs at which lr is multiplied by drop_factor
  double drop_factor = 0.1;
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 0 is the state before training
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainResult {
  ParamSet params;
  std::vector<EpochMetrics> history;
  bool failed = false;
  std::string failure;

  double final_test_accuracy() const { return history.empty() ? 0.0 : history.back().test_accuracy; }
};

/// Fraction of samples whose arg-max output (first maximum on ties) matches.
double accuracy(const NetworkSpec& spec, const ParamSet& params, const Mask& mask, const Batch& data);
double mean_loss(const NetworkSpec& spec, const ParamSet& params, const Mask& mask, const Batch& data,
                 LossKind kind);

/// SGD with momentum, weight decay and step drops. Masked weights start at
/// zero and stay there; divergence marks the run failed instead of throwing.
TrainResult train(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                  const Dataset& data, const TrainConfig& config);

struct PassCount {
  std::size_t passes = 0;
  std::size_t examples_per_iteration = 0;
  std::size_t multiplier = 1;  // gradient evaluations per example
  std::string note;
};

/// Forward/backward passes as iterations × examples × multiplier.
PassCount pass_count(ScorerKind scorer, const CompressionSchedule& schedule, std::size_t classes,
                     std::size_t examples_per_class = 10);

struct ScorerConfig {
  std::string label;
  ScorerKind kind = ScorerKind::Synflow;
  std::size_t iterations = 1;
  ScheduleKind schedule = ScheduleKind::Exponential;
};

struct ExperimentConfig {
  NetworkSpec network;
  std::vector<ScorerConfig> scorers;
  std::vector<double> ratios;  // empty: default grid up to ρ_max
  double grid_step = 0.25;
  SyntheticOptions dataset;
  std::size_t score_examples_per_class = 10;
  std::size_t score_sub_batch = 256;
  LossKind loss = LossKind::CrossEntropy;
  TrainConfig training;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: hardware concurrency
  std::string output_dir = "out";
  // toy IMP
  std::vector<std::size_t> imp_cycles{1, 3};

  std::vector<double> ratio_grid() const;
  void validate() const;
};

/// Deterministic 64-bit mixing for per-cell RNG streams.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct SweepCell {
  std::string scorer;
  std::size_t iterations = 1;
  double ratio = 1.0;
  std::uint64_t seed = 0;
  bool collapsed = false;
  std::vector<std::size_t> collapsed_layers;
  bool failed = false;
  std::string error;
  double test_accuracy = 0.0;
  std::size_t passes = 0;
  std::size_t remaining = 0;
  std::vector<LayerCount> layers;
};

struct SweepSummary {
  std::string scorer;
  double ratio = 1.0;
  double min_accuracy = 0.0;
  double mean_accuracy = 0.0;
  double max_accuracy = 0.0;
  std::size_t collapsed_runs = 0;
  std::size_t runs = 0;
};

struct SweepReport {
  double max_ratio = 0.0;
  double chance = 0.0;
  std::vector<SweepCell> cells;  // sorted by (scorer, ratio, seed)
  std::vector<SweepSummary> summaries;
};

/// Scoring batch for data-dependent scorers: examples_per_class × classes
/// training samples drawn with `seed`.
Batch scoring_batch(const Dataset& data, std::size_t examples_per_class, std::uint64_t seed);

SweepCell run_cell(const ExperimentConfig& config, const Dataset& data, const ScorerConfig& scorer,
                   double ratio, std::uint64_t seed);

SweepReport run_sweep(const ExperimentConfig& config);

struct ImpResult {
  PruneReport report;
  ParamSet rewound;  // θ0 ⊙ final mask
  double test_accuracy = 0.0;
  bool trained_final = false;
  bool failed = false;
};

/// Train, magnitude-prune globally to ⌈N·ρ^(−c/cycles)⌉, rewind to θ0; repeat.
ImpResult imp_toy(const NetworkSpec& spec, const ParamSet& params, const Dataset& data,
                  std::size_t cycles, double target_ratio, const TrainConfig& training,
                  bool train_final = true);

CriticalCompression imp_critical_compression(const NetworkSpec& spec, const ParamSet& params,
                                             const Dataset& data, std::size_t cycles,
                                             const std::vector<double>& grid,
                                             const TrainConfig& training);

}  // namespace flowprune
