#pragma once

// Per-parameter pruning scores. Every scorer returns a ScoreMap congruent
// with the prunable weights; positions already removed by the mask are
// recorded as absent and never ranked.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowprune/autodiff.hpp"

namespace flowprune {

struct ScoreMap {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<std::uint8_t>> present;

  /// Empty map shaped after `mask`; presence copied from it.
  static ScoreMap like(const Mask& mask);
  std::size_t count() const;
  double layer_total(std::size_t layer) const;
};

/// Counts forward/backward passes as (#evaluations x #examples).
struct PassCounter {
  std::size_t passes = 0;
  void add(std::size_t examples) { passes += examples; }
};

/// A scalar objective R(y) of the network output, evaluated on a fixed input.
struct Objective {
  Tensor input;
  Mode mode = Mode::Eval;
  /// Evaluate on |θ| (weights, biases, batch-norm affine) instead of θ.
  bool absolute_params = false;
  /// Returns R and writes ∂R/∂y.
  std::function<double(const Tensor& output, Tensor& output_grad)> evaluate;

  /// R = <1, y> summed over the batch.
  static Objective output_sum(Tensor input, Mode mode = Mode::Eval);
  /// R_SF = 1ᵀ(∏|θ|)1: all-ones single input, absolute parameters.
  static Objective synflow(const NetworkSpec& spec, Mode mode = Mode::Eval);
  /// Training loss over a labelled batch.
  static Objective loss(Batch batch, LossKind kind, Mode mode = Mode::Train,
                        Reduction reduction = Reduction::Sum);
};

/// Everything the saliency and conservation code needs from one objective
/// evaluation: the parameters actually used (masked, possibly |θ|), the
/// trace and all gradients.
struct ObjectiveEvaluation {
  ParamSet effective;
  ForwardTrace trace;
  GradientSet grads;
  double value = 0.0;
};

ObjectiveEvaluation evaluate_objective(const NetworkSpec& spec, const ParamSet& params,
                                       const Mask& mask, const Objective& objective);

/// ∂R/∂θ ⊙ θ on the masked prunable weights.
ScoreMap saliency(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                  const Objective& objective);
ScoreMap saliency_from(const NetworkSpec& spec, const Mask& mask, const ObjectiveEvaluation& eval);

ScoreMap score_random(const NetworkSpec& spec, const Mask& mask, std::uint64_t seed);
ScoreMap score_magnitude(const NetworkSpec& spec, const ParamSet& params, const Mask& mask);

struct DataScoringOptions {
  std::size_t sub_batch = 256;
  Mode mode = Mode::Train;
  PassCounter* counter = nullptr;
};

/// |g ⊙ θ| with g the signed gradient summed over sub-batches (each sub-batch
/// contributes its summed-over-examples gradient).
ScoreMap score_snip(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                    const Batch& batch, LossKind loss, const DataScoringOptions& options = {});

/// −(H g) ⊙ θ with g and Hg accumulated over sub-batches.
ScoreMap score_grasp(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                     const Batch& batch, LossKind loss, const DataScoringOptions& options = {});

/// GraSP scoring against arbitrary per-sub-batch loss gradients; the
/// network-bound overload delegates here.
ScoreMap score_grasp(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                     std::span<const GradientFn> sub_batch_gradients);

struct SynflowOptions {
  Mode mode = Mode::Eval;
  /// Rescale every layer by 1 / max|θ^[l]| and retry when R_SF overflows.
  bool rescale_on_overflow = true;
  PassCounter* counter = nullptr;
};

ScoreMap score_synflow(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                       const SynflowOptions& options = {});

/// Path-product closed form for bias-free dense chains; independent oracle
/// for score_synflow.
ScoreMap synflow_closed_form(const NetworkSpec& spec, const ParamSet& params, const Mask& mask);

enum class ScorerKind { Random, Magnitude, Snip, Grasp, Synflow };

std::string to_string(ScorerKind kind);
ScorerKind scorer_kind_from_string(const std::string& name);
bool is_data_dependent(ScorerKind kind);

struct ScoringContext {
  ScorerKind kind = ScorerKind::Synflow;
  std::optional<Batch> data;
  LossKind loss = LossKind::CrossEntropy;
  Mode mode = Mode::Train;  // SNIP/GraSP; SynFlow always runs in eval mode
  std::uint64_t seed = 0;
  std::size_t sub_batch = 256;
  PassCounter* counter = nullptr;

  /// Throws std::invalid_argument when data presence does not match the scorer.
  void validate() const;
};

ScoreMap compute_scores(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                        const ScoringContext& context);

}  // namespace flowprune
