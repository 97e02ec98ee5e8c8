#pragma once

// Numerical verifiers for the conservation laws of synaptic saliency.
//
// Hidden units are output channels of dense/conv layers (a dense feature is a
// channel of spatial size 1). A residual add merges into the unit of its main
// branch; the identity skip edge is treated as a fixed unit-weight connection
// whose saliency is ⟨∂R/∂(add output), skip source⟩. Batch-norm is not
// homogeneous and is rejected by the neuron and cut verifiers.

#include <map>
#include <string>
#include <vector>

#include "flowprune/scoring.hpp"

namespace flowprune {

inline constexpr double kIdentityTolerance = 1e-8;

/// |a − b| / max(|a|, |b|, 1e-30)
double relative_residual(double a, double b);

struct UnitConservation {
  std::size_t layer = 0;    // producing dense/conv layer
  std::size_t channel = 0;
  double s_in = 0.0;
  double s_out = 0.0;
  double residual = 0.0;    // |s_in − s_out|
  double relative = 0.0;
};

struct CutConservation {
  std::size_t layer = 0;
  double weight_total = 0.0;
  double downstream_bias = 0.0;  // Σ_{i>=l} ⟨∂R/∂b^[i], b^[i]⟩
  double skip_total = 0.0;       // skip edges bridging the cut
  double cut_total = 0.0;
  double relative_to_output = 0.0;
  double relative_to_input = 0.0;
};

struct ConservationReport {
  double objective = 0.0;
  double output_flux = 0.0;  // ⟨∂R/∂y, y⟩
  double input_flux = 0.0;   // ⟨∂R/∂x, x⟩
  double bias_total = 0.0;   // Σ over all biases of ⟨∂R/∂b, b⟩
  std::vector<UnitConservation> units;
  std::vector<CutConservation> cuts;
  double max_relative_residual = 0.0;
  double tolerance = kIdentityTolerance;

  /// ⟨∂R/∂x, x⟩ plus every bias: the cut just after the input.
  double input_cut() const { return input_flux + bias_total; }
  bool pass() const { return max_relative_residual <= tolerance; }
};

/// Per-unit S_in (incoming weights and bias, plus merged skip edges) against
/// S_out (outgoing weights and skip edges), both summed from parameter
/// gradients.
ConservationReport check_neuron_conservation(const NetworkSpec& spec, const ParamSet& params,
                                             const Mask& mask, const Objective& objective);

/// Every layer-aligned cut (weights of layer l, biases of layers >= l, skip
/// edges bridging l) against ⟨∂R/∂y, y⟩ and ⟨∂R/∂x, x⟩ + all biases.
ConservationReport check_network_conservation(const NetworkSpec& spec, const ParamSet& params,
                                              const Mask& mask, const Objective& objective);

struct LayerScoreSize {
  std::size_t layer = 0;
  std::size_t size = 0;
  double average = 0.0;
  double inverse_size = 0.0;
  double product = 0.0;  // average × size
};

struct ScoreSizeLaw {
  std::string method;
  std::vector<LayerScoreSize> layers;
  double max_relative_spread = 0.0;  // across layers, of average × size

  bool pass(double tolerance = kIdentityTolerance) const {
    return max_relative_spread <= tolerance;
  }
};

ScoreSizeLaw layer_score_size_law(const NetworkSpec& spec, const ScoreMap& scores,
                                  std::string method = "saliency");
std::vector<ScoreSizeLaw> layer_score_size_law(const NetworkSpec& spec,
                                               const std::map<std::string, ScoreMap>& by_method);

struct FlowConservationTrace {
  double step_size = 0.0;
  std::size_t steps = 0;
  std::size_t record_every = 1;
  std::vector<std::size_t> recorded_steps;
  std::vector<std::size_t> layers;               // dense layer indices
  std::vector<std::vector<double>> sq_norms;     // [layer][sample] ‖W^[l]‖_F²
  std::vector<std::vector<double>> differences;  // [layer][sample] ‖W^[l]‖² − ‖W^[first]‖²
  std::vector<double> loss;                      // per recorded sample

  /// max over layers of |difference(T) − difference(0)|
  double drift() const;
};

/// Plain full-batch gradient descent on the half squared error of a bias-free
/// dense ReLU/linear network, recording squared Frobenius norms.
FlowConservationTrace gradient_flow_conservation(const NetworkSpec& spec, const ParamSet& params,
                                                 const Batch& data, std::size_t steps, double lr,
                                                 std::size_t record_every = 1);

struct FlowScalingCheck {
  double lr = 0.0;
  std::size_t steps = 0;
  double drift_full = 0.0;       // lr, `steps` steps
  double drift_half = 0.0;       // lr / 2, 2·steps steps (same horizon)
  double ratio = 0.0;            // drift_full / drift_half, ≈ 2 for first-order error
  double fixed_step_ratio = 0.0; // lr / 2 over only `steps` steps, for reference (≈ 4)
  double factor = 1.5;

  bool pass() const { return ratio >= 2.0 / factor && ratio <= 2.0 * factor; }
};

FlowScalingCheck check_flow_drift_scaling(const NetworkSpec& spec, const ParamSet& params,
                                          const Batch& data, double lr, std::size_t steps);

struct BatchNormNeuron {
  std::size_t bn_layer = 0;
  std::size_t channel = 0;
  double saliency_sum = 0.0;  // Σ ⟨∂R/∂θ_in, θ_in⟩ into the normalized unit
  double scale = 0.0;         // Σ |individual terms|
  double eps_term = 0.0;      // exact contribution of ε > 0 to the sum (train mode)
  double residual = 0.0;      // |saliency_sum − eps_term| / max(scale, 1e-30)
};

struct BatchNormReport {
  Mode mode = Mode::Train;
  std::vector<BatchNormNeuron> neurons;
  double max_residual = 0.0;
  double tolerance = kIdentityTolerance;

  bool pass() const { return max_residual <= tolerance; }
};

/// Saliency summed over the parameters feeding each batch-norm unit. In train
/// mode the sum vanishes up to the ε term; every batch-norm layer must follow
/// a dense or conv layer directly.
BatchNormReport bn_saliency_zero(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                                 const Objective& objective);

}  // namespace flowprune
