#include "flowprune/netgraph.hpp"

#include <cmath>
#include <random>

namespace flowprune {

namespace {

std::string layer_label(std::size_t index, const LayerSpec& layer) {
  return "layer " + std::to_string(index) + " (" + to_string(layer.kind) + ")";
}

// Output shape of `layer` given the shapes of every earlier activation.
Shape infer_output(std::size_t index, const LayerSpec& layer,
                   const std::vector<Shape>& activations) {
  const Shape& in = activations.back();
  auto fail = [&](const std::string& why) -> Shape {
    throw StructuralError(layer_label(index, layer) + ": " + why + ", input " +
                          shape_string(in));
  };
  switch (layer.kind) {
    case LayerKind::Dense:
      if (in.size() != 1) return fail("dense layer needs a rank-1 input");
      if (layer.units == 0) return fail("dense layer needs units > 0");
      return {layer.units};
    case LayerKind::Conv2d: {
      if (in.size() != 3) return fail("conv2d needs a (C, H, W) input");
      if (layer.units == 0 || layer.kernel == 0 || layer.stride == 0)
        return fail("conv2d needs positive channels, kernel and stride");
      const std::size_t h = in[1] + 2 * layer.padding;
      const std::size_t w = in[2] + 2 * layer.padding;
      if (h < layer.kernel || w < layer.kernel) return fail("kernel larger than padded input");
      return {layer.units, (h - layer.kernel) / layer.stride + 1,
              (w - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::MaxPool: {
      if (in.size() != 3) return fail("maxpool needs a (C, H, W) input");
      if (layer.kernel == 0 || layer.stride == 0) return fail("maxpool needs kernel and stride");
      if (in[1] < layer.kernel || in[2] < layer.kernel) return fail("pool window exceeds input");
      return {in[0], (in[1] - layer.kernel) / layer.stride + 1,
              (in[2] - layer.kernel) / layer.stride + 1};
    }
    case LayerKind::Relu:
      return in;
    case LayerKind::BatchNorm:
      if (in.size() != 1 && in.size() != 3) return fail("batchnorm needs rank 1 or 3");
      return in;
    case LayerKind::Flatten:
      return {element_count(in)};
    case LayerKind::ResidualAdd:
      if (layer.skip_from >= index)
        return fail("residual source activation " + std::to_string(layer.skip_from) +
                    " is not upstream");
      if (activations[layer.skip_from] != in)
        return fail("residual source shape " + shape_string(activations[layer.skip_from]) +
                    " does not match");
      return in;
  }
  return fail("unknown layer kind");
}

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::ResidualAdd: return "residual_add";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (LayerKind k : {LayerKind::Dense, LayerKind::Conv2d, LayerKind::MaxPool, LayerKind::Relu,
                      LayerKind::BatchNorm, LayerKind::Flatten, LayerKind::ResidualAdd}) {
    if (to_string(k) == name) return k;
  }
  throw StructuralError("unknown layer type '" + name + "'");
}

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::Dense) return {units, input_shape.at(0)};
  if (kind == LayerKind::Conv2d) return {units, input_shape.at(0), kernel, kernel};
  return {};
}

std::size_t LayerSpec::fan_in() const {
  if (kind == LayerKind::Dense) return input_shape.at(0);
  if (kind == LayerKind::Conv2d) return input_shape.at(0) * kernel * kernel;
  return 0;
}

std::size_t NetworkSpec::output_dim() const {
  return element_count(layers.empty() ? input_shape : layers.back().output_shape);
}

std::vector<ResidualEdge> NetworkSpec::residual_edges() const {
  std::vector<ResidualEdge> edges;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].kind == LayerKind::ResidualAdd) edges.push_back({layers[l].skip_from, l});
  }
  return edges;
}

std::vector<std::size_t> NetworkSpec::prunable_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].prunable()) out.push_back(l);
  }
  return out;
}

std::size_t NetworkSpec::prunable_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight_count();
  return n;
}

const Shape& NetworkSpec::activation_shape(std::size_t k) const {
  return k == 0 ? input_shape : layers.at(k - 1).output_shape;
}

void NetworkSpec::validate() const {
  if (input_shape.empty() || element_count(input_shape) == 0)
    throw StructuralError("network input shape " + shape_string(input_shape) + " is empty");
  if (layers.empty()) throw StructuralError("network has no layers");
  std::vector<Shape> activations{input_shape};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerSpec& layer = layers[l];
    if (layer.input_shape != activations.back())
      throw StructuralError(layer_label(l, layer) + ": declared input " +
                            shape_string(layer.input_shape) + " but receives " +
                            shape_string(activations.back()));
    Shape out = infer_output(l, layer, activations);
    if (out != layer.output_shape)
      throw StructuralError(layer_label(l, layer) + ": declared output " +
                            shape_string(layer.output_shape) + " but computes " +
                            shape_string(out));
    activations.push_back(std::move(out));
  }
}

NetworkBuilder::NetworkBuilder(Shape input_shape) { spec_.input_shape = std::move(input_shape); }

const Shape& NetworkBuilder::current_shape() const {
  return spec_.activation_shape(spec_.layers.size());
}

NetworkBuilder& NetworkBuilder::push(LayerSpec layer) {
  std::vector<Shape> activations{spec_.input_shape};
  for (const auto& l : spec_.layers) activations.push_back(l.output_shape);
  layer.input_shape = activations.back();
  layer.output_shape = infer_output(spec_.layers.size(), layer, activations);
  spec_.layers.push_back(std::move(layer));
  return *this;
}

NetworkBuilder& NetworkBuilder::dense(std::size_t units, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  l.bias = bias;
  return push(l);
}

NetworkBuilder& NetworkBuilder::conv2d(std::size_t out_channels, std::size_t kernel,
                                       std::size_t stride, std::size_t padding, bool bias) {
  LayerSpec l;
  l.kind = LayerKind::Conv2d;
  l.units = out_channels;
  l.kernel = kernel;
  l.stride = stride;
  l.padding = padding;
  l.bias = bias;
  return push(l);
}

NetworkBuilder& NetworkBuilder::maxpool(std::size_t kernel, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool;
  l.kernel = kernel;
  l.stride = stride == 0 ? kernel : stride;
  return push(l);
}

NetworkBuilder& NetworkBuilder::relu() {
  LayerSpec l;
  l.kind = LayerKind::Relu;
  return push(l);
}

NetworkBuilder& NetworkBuilder::batchnorm(double eps) {
  LayerSpec l;
  l.kind = LayerKind::BatchNorm;
  l.bn_eps = eps;
  return push(l);
}

NetworkBuilder& NetworkBuilder::flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return push(l);
}

NetworkBuilder& NetworkBuilder::residual_add(std::size_t from_activation) {
  LayerSpec l;
  l.kind = LayerKind::ResidualAdd;
  l.skip_from = from_activation;
  return push(l);
}

NetworkSpec NetworkBuilder::build() const {
  spec_.validate();
  return spec_;
}

NetworkSpec make_network(Shape input_shape, std::vector<LayerSpec> layers) {
  NetworkBuilder builder(std::move(input_shape));
  for (auto& layer : layers) {
    switch (layer.kind) {
      case LayerKind::Dense: builder.dense(layer.units, layer.bias); break;
      case LayerKind::Conv2d:
        builder.conv2d(layer.units, layer.kernel, layer.stride, layer.padding, layer.bias);
        break;
      case LayerKind::MaxPool: builder.maxpool(layer.kernel, layer.stride); break;
      case LayerKind::Relu: builder.relu(); break;
      case LayerKind::BatchNorm: builder.batchnorm(layer.bn_eps); break;
      case LayerKind::Flatten: builder.flatten(); break;
      case LayerKind::ResidualAdd: builder.residual_add(layer.skip_from); break;
    }
  }
  return builder.build();
}

Mask Mask::ones(const NetworkSpec& spec) {
  Mask m;
  m.keep.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    m.keep[l].assign(spec.layers[l].weight_count(), 1);
  }
  return m;
}

std::size_t Mask::remaining() const {
  std::size_t n = 0;
  for (const auto& layer : keep)
    for (auto v : layer) n += v;
  return n;
}

std::size_t Mask::total() const {
  std::size_t n = 0;
  for (const auto& layer : keep) n += layer.size();
  return n;
}

bool Mask::subset_of(const Mask& other) const {
  if (keep.size() != other.keep.size()) return false;
  for (std::size_t l = 0; l < keep.size(); ++l) {
    if (keep[l].size() != other.keep[l].size()) return false;
    for (std::size_t i = 0; i < keep[l].size(); ++i)
      if (keep[l][i] && !other.keep[l][i]) return false;
  }
  return true;
}

void check_congruent(const NetworkSpec& spec, const Mask& mask) {
  if (mask.keep.size() != spec.layers.size())
    throw StructuralError("mask covers " + std::to_string(mask.keep.size()) +
                          " layers, network has " + std::to_string(spec.layers.size()));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    if (mask.keep[l].size() != spec.layers[l].weight_count())
      throw StructuralError("mask for " + layer_label(l, spec.layers[l]) + " has " +
                            std::to_string(mask.keep[l].size()) + " entries, expected " +
                            std::to_string(spec.layers[l].weight_count()));
  }
}

void check_congruent(const NetworkSpec& spec, const ParamSet& params) {
  if (params.layers.size() != spec.layers.size())
    throw StructuralError("parameter set covers " + std::to_string(params.layers.size()) +
                          " layers, network has " + std::to_string(spec.layers.size()));
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& layer = spec.layers[l];
    const LayerParams& p = params.layers[l];
    if (p.weight.shape != layer.weight_shape() && !(p.weight.empty() && !layer.has_weights()))
      throw StructuralError(layer_label(l, layer) + ": weight shape " +
                            shape_string(p.weight.shape) + ", expected " +
                            shape_string(layer.weight_shape()));
    const std::size_t bias_size = layer.has_bias() ? layer.units : 0;
    if (p.bias.size() != bias_size)
      throw StructuralError(layer_label(l, layer) + ": bias has " +
                            std::to_string(p.bias.size()) + " entries, expected " +
                            std::to_string(bias_size));
    const std::size_t channels =
        layer.kind == LayerKind::BatchNorm ? layer.input_shape.front() : 0;
    if (p.gamma.size() != channels || p.beta.size() != channels ||
        p.running_mean.size() != channels || p.running_var.size() != channels)
      throw StructuralError(layer_label(l, layer) + ": batch-norm tensors do not match " +
                            std::to_string(channels) + " channels");
  }
}

ParamSet build_network(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  ParamSet params;
  params.layers.resize(spec.layers.size());
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& layer = spec.layers[l];
    LayerParams& p = params.layers[l];
    if (layer.has_weights()) {
      std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / double(layer.fan_in())));
      p.weight = Tensor(layer.weight_shape());
      for (double& w : p.weight.data) w = normal(rng);
      if (layer.has_bias()) p.bias = Tensor({layer.units}, 0.0);
    } else if (layer.kind == LayerKind::BatchNorm) {
      const std::size_t c = layer.input_shape.front();
      p.gamma = Tensor({c}, 1.0);
      p.beta = Tensor({c}, 0.0);
      p.running_mean = Tensor({c}, 0.0);
      p.running_var = Tensor({c}, 1.0);
    }
  }
  return params;
}

ParamSet apply_mask(const NetworkSpec& spec, const ParamSet& params, const Mask& mask) {
  check_congruent(spec, params);
  check_congruent(spec, mask);
  ParamSet out = params;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    auto& w = out.layers[l].weight.data;
    const auto& keep = mask.keep[l];
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (!keep[i]) w[i] = 0.0;
  }
  return out;
}

double max_compression(const NetworkSpec& spec) {
  const auto layers = spec.prunable_layers();
  if (layers.empty()) throw DomainError("max compression undefined: no prunable layers");
  return double(spec.prunable_count()) / double(layers.size());
}

std::vector<LayerCount> layer_param_counts(const NetworkSpec& spec, const Mask& mask) {
  check_congruent(spec, mask);
  std::vector<LayerCount> out;
  for (std::size_t l : spec.prunable_layers()) {
    std::size_t kept = 0;
    for (auto v : mask.keep[l]) kept += v;
    out.push_back({l, mask.keep[l].size(), kept});
  }
  return out;
}

}  // namespace flowprune
