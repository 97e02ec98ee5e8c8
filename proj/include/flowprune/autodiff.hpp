#pragma once

// Batched forward evaluation and reverse-mode gradients over a NetworkSpec.
//
// All activation tensors carry a leading batch axis. Weights are masked on the
// fly (W ⊙ μ); gradients are reported with respect to the masked parameters,
// so callers that update θ must zero masked positions themselves.

#include <cstdint>
#include <functional>
#include <vector>

#include "flowprune/netgraph.hpp"

namespace flowprune {

enum class Mode { Train, Eval };

struct BatchNormCache {
  std::vector<double> mean;     // per channel, batch or running statistic used
  std::vector<double> inv_std;  // 1 / sqrt(var + eps)
  std::vector<double> var;      // variance used (batch or running)
  Tensor normalized;            // x̂ before the affine transform
};

struct ForwardTrace {
  Mode mode = Mode::Eval;
  /// activations[0] is the input, activations[k+1] the output of layer k.
  std::vector<Tensor> activations;
  /// Flat input index selected by each pooled output, per maxpool layer.
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<BatchNormCache> batchnorm;  // indexed by layer; empty for other kinds

  const Tensor& input() const { return activations.front(); }
  const Tensor& output() const { return activations.back(); }
  std::size_t batch_size() const { return input().rows(); }
};

/// Gradients congruent with a ParamSet (running buffers stay empty), plus the
/// gradient of every activation, including ∂R/∂x at index 0 and ∂R/∂y last.
struct GradientSet {
  std::vector<LayerParams> layers;
  std::vector<Tensor> activations;

  const Tensor& input_grad() const { return activations.front(); }
};

/// Shapes a batch of samples: {batch, sample dims...}.
Shape batch_shape(std::size_t batch, const Shape& sample);

ForwardTrace forward(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                     const Tensor& input, Mode mode);

GradientSet backward(const NetworkSpec& spec, const ForwardTrace& trace,
                     const ParamSet& params, const Mask& mask, const Tensor& output_grad);

enum class LossKind { CrossEntropy, Mse };
enum class Reduction { Mean, Sum };

struct Batch {
  Tensor inputs;             // {B, sample dims...}
  std::vector<int> labels;   // class index per sample
  Tensor targets;            // {B, outputs}; mse only, one-hot labels when empty

  std::size_t size() const { return inputs.rows(); }
  /// Samples [begin, end) as a new batch.
  Batch slice(std::size_t begin, std::size_t end) const;
};

struct LossValue {
  double value = 0.0;
  Tensor output_grad;
};

/// Softmax cross-entropy (max-subtracted) or half squared error, reduced over
/// the batch.
LossValue evaluate_loss(const Tensor& output, const Batch& batch, LossKind kind,
                        Reduction reduction = Reduction::Mean);

struct LossGradient {
  double loss = 0.0;
  GradientSet grad;
};

LossGradient loss_and_grad(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                           const Batch& batch, LossKind kind, Mode mode = Mode::Train,
                           Reduction reduction = Reduction::Mean);

/// Gradient of some loss as a function of the parameters.
using GradientFn = std::function<GradientSet(const ParamSet&)>;

/// H·v by central differences of the gradient, step δ / max(1, ‖v‖∞).
/// Perturbs weights, biases and batch-norm affine parameters.
GradientSet hvp(const ParamSet& params, const GradientFn& gradient, const GradientSet& v,
                double delta = 1e-4);

GradientSet hvp(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                const Batch& batch, LossKind kind, Mode mode, const GradientSet& v,
                Reduction reduction = Reduction::Mean);

// Parameter-shaped arithmetic. Only trainable slots (weight, bias, gamma,
// beta) take part.
GradientSet zeros_like(const ParamSet& params);
void add_scaled(GradientSet& target, const GradientSet& g, double scale);
void add_scaled(ParamSet& target, const GradientSet& g, double scale);
double inf_norm(const GradientSet& g);
double dot(const GradientSet& a, const GradientSet& b);

/// Visits every trainable tensor pair (params slot, gradient slot) with the
/// layer index; used by optimizers and the finite-difference helpers.
void for_each_trainable(ParamSet& params, const GradientSet& grads,
                        const std::function<void(std::size_t, Tensor&, const Tensor&)>& fn);

}  // namespace flowprune
