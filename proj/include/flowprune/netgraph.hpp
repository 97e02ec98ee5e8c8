#pragma once

// Feedforward architectures, parameter storage and binary masks.
//
// Activations are numbered 0..L for a network of L layers: activation 0 is the
// network input and activation k+1 is the output of layer k. Shapes stored on
// a LayerSpec are per-sample (no batch axis). Dense layers consume rank-1
// samples; conv2d, maxpool and channel batch-norm consume (C, H, W) samples.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "flowprune/tensor.hpp"

namespace flowprune {

enum class LayerKind { Dense, Conv2d, MaxPool, Relu, BatchNorm, Flatten, ResidualAdd };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  Shape input_shape;
  Shape output_shape;
  std::size_t units = 0;  // dense output features or conv output channels
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = true;         // dense/conv only; biases are never prunable
  double bn_eps = 1e-5;     // batch-norm only
  std::size_t skip_from = 0;  // residual-add: activation index added to the main input

  bool has_weights() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }
  bool has_bias() const { return has_weights() && bias; }
  bool prunable() const { return has_weights(); }
  Shape weight_shape() const;
  std::size_t weight_count() const { return has_weights() ? element_count(weight_shape()) : 0; }
  std::size_t fan_in() const;
};

struct ResidualEdge {
  std::size_t from_activation;
  std::size_t add_layer;
};

struct NetworkSpec {
  Shape input_shape;
  std::vector<LayerSpec> layers;

  std::size_t output_dim() const;
  std::vector<ResidualEdge> residual_edges() const;
  std::vector<std::size_t> prunable_layers() const;
  std::size_t prunable_count() const;
  /// Per-sample shape of activation k (0 = input).
  const Shape& activation_shape(std::size_t k) const;

  /// Throws StructuralError naming the first inconsistent layer.
  void validate() const;
};

/// Appends layers and infers their shapes.
class NetworkBuilder {
 public:
  explicit NetworkBuilder(Shape input_shape);

  NetworkBuilder& dense(std::size_t units, bool bias = true);
  NetworkBuilder& conv2d(std::size_t out_channels, std::size_t kernel, std::size_t stride = 1,
                         std::size_t padding = 0, bool bias = true);
  NetworkBuilder& maxpool(std::size_t kernel, std::size_t stride = 0);
  NetworkBuilder& relu();
  NetworkBuilder& batchnorm(double eps = 1e-5);
  NetworkBuilder& flatten();
  NetworkBuilder& residual_add(std::size_t from_activation);

  /// Index of the activation the next layer will consume.
  std::size_t current_activation() const { return spec_.layers.size(); }
  const Shape& current_shape() const;

  NetworkSpec build() const;

 private:
  NetworkBuilder& push(LayerSpec layer);
  NetworkSpec spec_;
};

/// Infers output shapes of a layer list read from a config; validates wiring.
NetworkSpec make_network(Shape input_shape, std::vector<LayerSpec> layers);

struct LayerParams {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;

  bool operator==(const LayerParams&) const = default;
};

/// Parameters of every layer, indexed by layer position. Layers without
/// parameters hold empty tensors.
struct ParamSet {
  std::vector<LayerParams> layers;

  bool operator==(const ParamSet&) const = default;
};

/// Binary keep-mask over the prunable weight tensors. keep[l] is empty for
/// layers without prunable weights.
struct Mask {
  std::vector<std::vector<std::uint8_t>> keep;

  static Mask ones(const NetworkSpec& spec);
  std::size_t remaining() const;
  std::size_t total() const;
  /// True when every entry of `*this` is also set in `other`.
  bool subset_of(const Mask& other) const;

  bool operator==(const Mask&) const = default;
};

void check_congruent(const NetworkSpec& spec, const Mask& mask);
void check_congruent(const NetworkSpec& spec, const ParamSet& params);

/// Kaiming-normal weights (std = sqrt(2 / fan_in)), zero biases, identity
/// batch-norm. Deterministic in `seed`.
ParamSet build_network(const NetworkSpec& spec, std::uint64_t seed);

ParamSet apply_mask(const NetworkSpec& spec, const ParamSet& params, const Mask& mask);

/// N / L: prunable parameters over prunable layers.
double max_compression(const NetworkSpec& spec);

struct LayerCount {
  std::size_t layer;
  std::size_t total;
  std::size_t remaining;

  double fraction() const { return total == 0 ? 0.0 : double(remaining) / double(total); }
  bool operator==(const LayerCount&) const = default;
};

std::vector<LayerCount> layer_param_counts(const NetworkSpec& spec, const Mask& mask);

}  // namespace flowprune
