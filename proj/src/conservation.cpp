#include "flowprune/conservation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flowprune {

double relative_residual(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30});
}

namespace {

constexpr long kInputNode = -1;

void require_homogeneous(const NetworkSpec& spec) {
  for (std::size_t l = 0; l < spec.layers.size(); ++l)
    if (spec.layers[l].kind == LayerKind::BatchNorm)
      throw UnsupportedError("layer " + std::to_string(l) +
                             " (batchnorm) is not a homogeneous activation");
}

// Owner unit of every activation element: the dense/conv layer whose output
// channel it carries through ReLU, pooling, flatten and residual merges.
struct UnitMap {
  std::vector<long> node;                           // per activation
  std::vector<std::vector<std::size_t>> channel;    // per activation, per sample element

  explicit UnitMap(const NetworkSpec& spec) {
    const std::size_t n = spec.layers.size();
    node.assign(n + 1, kInputNode);
    channel.resize(n + 1);
    channel[0].assign(element_count(spec.input_shape), 0);
    for (std::size_t l = 0; l < n; ++l) {
      const LayerSpec& layer = spec.layers[l];
      const std::size_t out_size = element_count(layer.output_shape);
      auto& out = channel[l + 1];
      out.resize(out_size);
      switch (layer.kind) {
        case LayerKind::Dense:
        case LayerKind::Conv2d: {
          node[l + 1] = long(l);
          const std::size_t spatial = out_size / layer.units;
          for (std::size_t e = 0; e < out_size; ++e) out[e] = e / spatial;
          break;
        }
        case LayerKind::MaxPool: {
          node[l + 1] = node[l];
          const std::size_t in_plane = layer.input_shape[1] * layer.input_shape[2];
          const std::size_t out_plane = layer.output_shape[1] * layer.output_shape[2];
          for (std::size_t e = 0; e < out_size; ++e) out[e] = channel[l][(e / out_plane) * in_plane];
          break;
        }
        case LayerKind::ResidualAdd:
          if (node[l] == kInputNode)
            throw UnsupportedError("residual add at layer " + std::to_string(l) +
                                   " has no parameterised main branch");
          [[fallthrough]];
        case LayerKind::Relu:
        case LayerKind::BatchNorm:
        case LayerKind::Flatten:
          node[l + 1] = node[l];
          out = channel[l];
          break;
      }
    }
  }
};

double weight_saliency(const ObjectiveEvaluation& eval, std::size_t l) {
  return dot(eval.grads.layers[l].weight.values(), eval.effective.layers[l].weight.values());
}

double bias_saliency(const ObjectiveEvaluation& eval, std::size_t l) {
  const Tensor& b = eval.effective.layers[l].bias;
  return b.empty() ? 0.0 : dot(eval.grads.layers[l].bias.values(), b.values());
}

// Σ over batch and elements of ∂R/∂(add output) ⊙ skip source.
template <typename Sink>
void skip_contributions(const ObjectiveEvaluation& eval, std::size_t add_layer,
                        std::size_t from, Sink&& sink) {
  const Tensor& g = eval.grads.activations[add_layer + 1];
  const Tensor& src = eval.trace.activations[from];
  const std::size_t per_sample = src.row_size();
  for (std::size_t i = 0; i < src.size(); ++i) sink(i % per_sample, g.data[i] * src.data[i]);
}

void fill_fluxes(ConservationReport& report, const NetworkSpec& spec,
                 const ObjectiveEvaluation& eval) {
  report.objective = eval.value;
  report.output_flux = dot(eval.grads.activations.back().values(), eval.trace.output().values());
  report.input_flux = dot(eval.grads.input_grad().values(), eval.trace.input().values());
  report.bias_total = 0.0;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) report.bias_total += bias_saliency(eval, l);
}

}  // namespace

ConservationReport check_neuron_conservation(const NetworkSpec& spec, const ParamSet& params,
                                             const Mask& mask, const Objective& objective) {
  require_homogeneous(spec);
  const ObjectiveEvaluation eval = evaluate_objective(spec, params, mask, objective);
  const UnitMap units(spec);
  const std::size_t n = spec.layers.size();

  std::vector<std::vector<double>> s_in(n), s_out(n);
  for (std::size_t l = 0; l < n; ++l) {
    if (spec.layers[l].has_weights()) {
      s_in[l].assign(spec.layers[l].units, 0.0);
      s_out[l].assign(spec.layers[l].units, 0.0);
    }
  }

  for (std::size_t l = 0; l < n; ++l) {
    const LayerSpec& layer = spec.layers[l];
    if (layer.has_weights()) {
      const auto& g = eval.grads.layers[l].weight.data;
      const auto& w = eval.effective.layers[l].weight.data;
      const std::size_t per_out = w.size() / layer.units;
      for (std::size_t i = 0; i < w.size(); ++i) s_in[l][i / per_out] += g[i] * w[i];
      if (layer.has_bias())
        for (std::size_t c = 0; c < layer.units; ++c)
          s_in[l][c] += eval.grads.layers[l].bias[c] * eval.effective.layers[l].bias[c];

      // Outgoing from whichever unit owns this layer's input elements.
      const long owner = units.node[l];
      if (owner == kInputNode) continue;
      const auto& chan = units.channel[l];
      if (layer.kind == LayerKind::Dense) {
        const std::size_t cols = layer.input_shape[0];
        for (std::size_t i = 0; i < w.size(); ++i) s_out[owner][chan[i % cols]] += g[i] * w[i];
      } else {
        const std::size_t in_c = layer.input_shape[0];
        const std::size_t plane = layer.input_shape[1] * layer.input_shape[2];
        const std::size_t kk = layer.kernel * layer.kernel;
        for (std::size_t i = 0; i < w.size(); ++i) {
          const std::size_t ci = (i / kk) % in_c;
          s_out[owner][chan[ci * plane]] += g[i] * w[i];
        }
      }
    } else if (layer.kind == LayerKind::ResidualAdd) {
      const long merged = units.node[l];
      const auto& merged_chan = units.channel[l + 1];
      skip_contributions(eval, l, layer.skip_from, [&](std::size_t e, double v) {
        s_in[merged][merged_chan[e]] += v;
      });
      const long source = units.node[layer.skip_from];
      if (source != kInputNode) {
        const auto& src_chan = units.channel[layer.skip_from];
        skip_contributions(eval, l, layer.skip_from, [&](std::size_t e, double v) {
          s_out[source][src_chan[e]] += v;
        });
      }
    }
  }

  ConservationReport report;
  fill_fluxes(report, spec, eval);
  const long output_node = units.node[n];
  for (std::size_t l = 0; l < n; ++l) {
    if (!spec.layers[l].has_weights() || long(l) == output_node) continue;
    for (std::size_t c = 0; c < spec.layers[l].units; ++c) {
      UnitConservation u;
      u.layer = l;
      u.channel = c;
      u.s_in = s_in[l][c];
      u.s_out = s_out[l][c];
      u.residual = std::abs(u.s_in - u.s_out);
      u.relative = relative_residual(u.s_in, u.s_out);
      report.max_relative_residual = std::max(report.max_relative_residual, u.relative);
      report.units.push_back(u);
    }
  }
  return report;
}

ConservationReport check_network_conservation(const NetworkSpec& spec, const ParamSet& params,
                                              const Mask& mask, const Objective& objective) {
  require_homogeneous(spec);
  const ObjectiveEvaluation eval = evaluate_objective(spec, params, mask, objective);
  ConservationReport report;
  fill_fluxes(report, spec, eval);
  const std::size_t n = spec.layers.size();

  std::vector<double> downstream_bias(n + 1, 0.0);
  for (std::size_t l = n; l-- > 0;) downstream_bias[l] = downstream_bias[l + 1] + bias_saliency(eval, l);

  const auto edges = spec.residual_edges();
  std::vector<double> edge_total(edges.size(), 0.0);
  for (std::size_t e = 0; e < edges.size(); ++e)
    skip_contributions(eval, edges[e].add_layer, edges[e].from_activation,
                       [&](std::size_t, double v) { edge_total[e] += v; });

  report.max_relative_residual = relative_residual(report.output_flux, report.input_cut());
  for (std::size_t l : spec.prunable_layers()) {
    CutConservation cut;
    cut.layer = l;
    cut.weight_total = weight_saliency(eval, l);
    cut.downstream_bias = downstream_bias[l];
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (edges[e].from_activation <= l && edges[e].add_layer > l) cut.skip_total += edge_total[e];
    cut.cut_total = cut.weight_total + cut.downstream_bias + cut.skip_total;
    cut.relative_to_output = relative_residual(cut.cut_total, report.output_flux);
    cut.relative_to_input = relative_residual(cut.cut_total, report.input_cut());
    report.max_relative_residual =
        std::max({report.max_relative_residual, cut.relative_to_output, cut.relative_to_input});
    report.cuts.push_back(cut);
  }
  return report;
}

ScoreSizeLaw layer_score_size_law(const NetworkSpec& spec, const ScoreMap& scores,
                                  std::string method) {
  ScoreSizeLaw law;
  law.method = std::move(method);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (std::size_t l : spec.prunable_layers()) {
    LayerScoreSize row;
    row.layer = l;
    for (auto p : scores.present[l]) row.size += p;
    if (row.size == 0) continue;
    row.average = scores.layer_total(l) / double(row.size);
    row.inverse_size = 1.0 / double(row.size);
    row.product = row.average * double(row.size);
    lo = std::min(lo, row.product);
    hi = std::max(hi, row.product);
    law.layers.push_back(row);
  }
  law.max_relative_spread = law.layers.empty() ? 0.0 : relative_residual(hi, lo);
  return law;
}

std::vector<ScoreSizeLaw> layer_score_size_law(const NetworkSpec& spec,
                                               const std::map<std::string, ScoreMap>& by_method) {
  std::vector<ScoreSizeLaw> out;
  for (const auto& [name, scores] : by_method) out.push_back(layer_score_size_law(spec, scores, name));
  return out;
}

double FlowConservationTrace::drift() const {
  double d = 0.0;
  for (const auto& series : differences)
    if (!series.empty()) d = std::max(d, std::abs(series.back() - series.front()));
  return d;
}

FlowConservationTrace gradient_flow_conservation(const NetworkSpec& spec, const ParamSet& params,
                                                 const Batch& data, std::size_t steps, double lr,
                                                 std::size_t record_every) {
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& layer = spec.layers[l];
    if (layer.kind != LayerKind::Dense && layer.kind != LayerKind::Relu)
      throw UnsupportedError("gradient-flow conservation needs a dense network; layer " +
                             std::to_string(l) + " is " + to_string(layer.kind));
    if (layer.has_bias()) throw UnsupportedError("gradient-flow conservation needs bias-free layers");
  }
  if (record_every == 0) record_every = 1;
  FlowConservationTrace trace;
  trace.step_size = lr;
  trace.steps = steps;
  trace.record_every = record_every;
  trace.layers = spec.prunable_layers();
  trace.sq_norms.resize(trace.layers.size());
  trace.differences.resize(trace.layers.size());

  const Mask mask = Mask::ones(spec);
  ParamSet theta = params;
  auto record = [&](std::size_t step, double loss) {
    trace.recorded_steps.push_back(step);
    trace.loss.push_back(loss);
    const auto& first = theta.layers[trace.layers.front()].weight;
    const double base = dot(first.values(), first.values());
    for (std::size_t k = 0; k < trace.layers.size(); ++k) {
      const auto& w = theta.layers[trace.layers[k]].weight;
      const double sq = dot(w.values(), w.values());
      trace.sq_norms[k].push_back(sq);
      trace.differences[k].push_back(sq - base);
    }
  };
  for (std::size_t step = 0;; ++step) {
    const LossGradient lg = loss_and_grad(spec, theta, mask, data, LossKind::Mse, Mode::Eval);
    if (!std::isfinite(lg.loss)) throw NumericError("gradient descent diverged at step " + std::to_string(step));
    if (step % record_every == 0 || step == steps) record(step, lg.loss);
    if (step == steps) break;
    add_scaled(theta, lg.grad, -lr);
  }
  return trace;
}

FlowScalingCheck check_flow_drift_scaling(const NetworkSpec& spec, const ParamSet& params,
                                          const Batch& data, double lr, std::size_t steps) {
  FlowScalingCheck check;
  check.lr = lr;
  check.steps = steps;
  const std::size_t every = std::max<std::size_t>(1, steps / 10);
  check.drift_full = gradient_flow_conservation(spec, params, data, steps, lr, every).drift();
  check.drift_half = gradient_flow_conservation(spec, params, data, 2 * steps, lr / 2, 2 * every).drift();
  const double fixed = gradient_flow_conservation(spec, params, data, steps, lr / 2, every).drift();
  check.ratio = check.drift_full / std::max(check.drift_half, 1e-300);
  check.fixed_step_ratio = check.drift_full / std::max(fixed, 1e-300);
  return check;
}

BatchNormReport bn_saliency_zero(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                                 const Objective& objective) {
  const ObjectiveEvaluation eval = evaluate_objective(spec, params, mask, objective);
  BatchNormReport report;
  report.mode = objective.mode;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& bn = spec.layers[l];
    if (bn.kind != LayerKind::BatchNorm) continue;
    if (l == 0 || !spec.layers[l - 1].has_weights())
      throw UnsupportedError("batch-norm layer " + std::to_string(l) +
                             " does not directly follow a dense or conv layer");
    const std::size_t p = l - 1;
    const LayerSpec& producer = spec.layers[p];
    const auto& g = eval.grads.layers[p].weight.data;
    const auto& w = eval.effective.layers[p].weight.data;
    const std::size_t per_out = w.size() / producer.units;
    const BatchNormCache& cache = eval.trace.batchnorm[l];
    const Tensor& gout = eval.grads.activations[l + 1];
    const std::size_t channels = bn.input_shape[0];
    const std::size_t spatial = element_count(bn.input_shape) / channels;
    const std::size_t batch = gout.rows();
    for (std::size_t c = 0; c < channels; ++c) {
      if (objective.mode == Mode::Train && cache.var[c] == 0.0)
        throw NumericError("batch-norm layer " + std::to_string(l) + " channel " +
                           std::to_string(c) + " has zero batch variance");
      BatchNormNeuron neuron;
      neuron.bn_layer = l;
      neuron.channel = c;
      for (std::size_t i = c * per_out; i < (c + 1) * per_out; ++i) {
        neuron.saliency_sum += g[i] * w[i];
        neuron.scale += std::abs(g[i] * w[i]);
      }
      if (producer.has_bias()) {
        const double t = eval.grads.layers[p].bias[c] * eval.effective.layers[p].bias[c];
        neuron.saliency_sum += t;
        neuron.scale += std::abs(t);
      }
      if (objective.mode == Mode::Train) {
        // d/dα x̂(α θ_in) at α = 1 equals x̂ · ε / (σ² + ε).
        double s = 0.0;
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < spatial; ++i) {
            const std::size_t at = (b * channels + c) * spatial + i;
            s += gout.data[at] * eval.effective.layers[l].gamma[c] * cache.normalized.data[at];
          }
        neuron.eps_term = s * bn.bn_eps / (cache.var[c] + bn.bn_eps);
      }
      neuron.residual = std::abs(neuron.saliency_sum - neuron.eps_term) / std::max(neuron.scale, 1e-30);
      report.max_residual = std::max(report.max_residual, neuron.residual);
      report.neurons.push_back(neuron);
    }
  }
  return report;
}

}  // namespace flowprune
