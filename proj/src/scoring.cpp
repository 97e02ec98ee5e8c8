#include "flowprune/scoring.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace flowprune {

ScoreMap ScoreMap::like(const Mask& mask) {
  ScoreMap s;
  s.present = mask.keep;
  s.values.resize(mask.keep.size());
  for (std::size_t l = 0; l < mask.keep.size(); ++l) s.values[l].assign(mask.keep[l].size(), 0.0);
  return s;
}

std::size_t ScoreMap::count() const {
  std::size_t n = 0;
  for (const auto& layer : present)
    for (auto p : layer) n += p;
  return n;
}

double ScoreMap::layer_total(std::size_t layer) const {
  double s = 0.0;
  for (std::size_t i = 0; i < values[layer].size(); ++i)
    if (present[layer][i]) s += values[layer][i];
  return s;
}

Objective Objective::output_sum(Tensor input, Mode mode) {
  Objective o;
  o.input = std::move(input);
  o.mode = mode;
  o.evaluate = [](const Tensor& y, Tensor& dy) {
    dy = Tensor(y.shape, 1.0);
    double s = 0.0;
    for (double v : y.data) s += v;
    return s;
  };
  return o;
}

Objective Objective::synflow(const NetworkSpec& spec, Mode mode) {
  Objective o = output_sum(Tensor(batch_shape(1, spec.input_shape), 1.0), mode);
  o.absolute_params = true;
  return o;
}

Objective Objective::loss(Batch batch, LossKind kind, Mode mode, Reduction reduction) {
  Objective o;
  o.input = batch.inputs;
  o.mode = mode;
  o.evaluate = [batch = std::move(batch), kind, reduction](const Tensor& y, Tensor& dy) {
    LossValue v = evaluate_loss(y, batch, kind, reduction);
    dy = std::move(v.output_grad);
    return v.value;
  };
  return o;
}

ObjectiveEvaluation evaluate_objective(const NetworkSpec& spec, const ParamSet& params,
                                       const Mask& mask, const Objective& objective) {
  ObjectiveEvaluation eval;
  eval.effective = apply_mask(spec, params, mask);
  if (objective.absolute_params) {
    for (auto& layer : eval.effective.layers)
      for (Tensor* t : {&layer.weight, &layer.bias, &layer.gamma, &layer.beta})
        for (double& v : t->data) v = std::abs(v);
  }
  eval.trace = forward(spec, eval.effective, mask, objective.input, objective.mode);
  Tensor dy;
  eval.value = objective.evaluate(eval.trace.output(), dy);
  eval.grads = backward(spec, eval.trace, eval.effective, mask, dy);
  return eval;
}

ScoreMap saliency_from(const NetworkSpec& spec, const Mask& mask, const ObjectiveEvaluation& eval) {
  ScoreMap s = ScoreMap::like(mask);
  for (std::size_t l : spec.prunable_layers()) {
    const auto& g = eval.grads.layers[l].weight.data;
    const auto& w = eval.effective.layers[l].weight.data;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (!s.present[l][i]) continue;
      s.values[l][i] = g[i] * w[i];
      if (!std::isfinite(s.values[l][i]))
        throw NumericError("non-finite saliency in layer " + std::to_string(l));
    }
  }
  return s;
}

ScoreMap saliency(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                  const Objective& objective) {
  return saliency_from(spec, mask, evaluate_objective(spec, params, mask, objective));
}

ScoreMap score_random(const NetworkSpec& spec, const Mask& mask, std::uint64_t seed) {
  check_congruent(spec, mask);
  ScoreMap s = ScoreMap::like(mask);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Draw for every position so a given seed scores each parameter identically
  // whatever the mask.
  for (std::size_t l = 0; l < s.values.size(); ++l)
    for (std::size_t i = 0; i < s.values[l].size(); ++i) {
      const double z = normal(rng);
      if (s.present[l][i]) s.values[l][i] = z;
    }
  return s;
}

ScoreMap score_magnitude(const NetworkSpec& spec, const ParamSet& params, const Mask& mask) {
  check_congruent(spec, params);
  check_congruent(spec, mask);
  ScoreMap s = ScoreMap::like(mask);
  for (std::size_t l : spec.prunable_layers()) {
    const auto& w = params.layers[l].weight.data;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (s.present[l][i]) s.values[l][i] = std::abs(w[i]);
  }
  return s;
}

namespace {

template <typename Fn>
void for_each_sub_batch(const Batch& batch, std::size_t sub_batch, Fn&& fn) {
  if (batch.size() == 0) throw DomainError("data-dependent scoring needs a nonempty batch");
  const std::size_t step = sub_batch == 0 ? batch.size() : sub_batch;
  for (std::size_t begin = 0; begin < batch.size(); begin += step)
    fn(batch.slice(begin, std::min(batch.size(), begin + step)));
}

void require_finite(const GradientSet& g, const char* what) {
  for (std::size_t l = 0; l < g.layers.size(); ++l)
    if (!all_finite(g.layers[l].weight.values()) || !all_finite(g.layers[l].bias.values()))
      throw NumericError(std::string("non-finite ") + what + " in layer " + std::to_string(l));
}

}  // namespace

ScoreMap score_snip(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                    const Batch& batch, LossKind loss, const DataScoringOptions& options) {
  GradientSet total = zeros_like(params);
  for_each_sub_batch(batch, options.sub_batch, [&](const Batch& sub) {
    const LossGradient lg = loss_and_grad(spec, params, mask, sub, loss, options.mode, Reduction::Sum);
    add_scaled(total, lg.grad, 1.0);
    if (options.counter) options.counter->add(sub.size());
  });
  require_finite(total, "gradient");
  ScoreMap s = ScoreMap::like(mask);
  for (std::size_t l : spec.prunable_layers()) {
    const auto& g = total.layers[l].weight.data;
    const auto& w = params.layers[l].weight.data;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (s.present[l][i]) s.values[l][i] = std::abs(g[i] * w[i]);
  }
  return s;
}

ScoreMap score_grasp(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                     std::span<const GradientFn> sub_batch_gradients) {
  check_congruent(spec, mask);
  if (sub_batch_gradients.empty()) throw DomainError("GraSP needs at least one batch");
  GradientSet g = zeros_like(params);
  for (const auto& grad : sub_batch_gradients) add_scaled(g, grad(params), 1.0);
  require_finite(g, "gradient");
  GradientSet hg = zeros_like(params);
  for (const auto& grad : sub_batch_gradients) add_scaled(hg, hvp(params, grad, g), 1.0);
  ScoreMap s = ScoreMap::like(mask);
  for (std::size_t l : spec.prunable_layers()) {
    const auto& h = hg.layers[l].weight.data;
    const auto& w = params.layers[l].weight.data;
    for (std::size_t i = 0; i < w.size(); ++i)
      if (s.present[l][i]) s.values[l][i] = -h[i] * w[i];
  }
  return s;
}

ScoreMap score_grasp(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                     const Batch& batch, LossKind loss, const DataScoringOptions& options) {
  std::vector<GradientFn> grads;
  for_each_sub_batch(batch, options.sub_batch, [&](const Batch& sub) {
    grads.push_back([&spec, &mask, sub, loss, mode = options.mode](const ParamSet& p) {
      return loss_and_grad(spec, p, mask, sub, loss, mode, Reduction::Sum).grad;
    });
    // one gradient pass plus two for the central-difference HVP
    if (options.counter) options.counter->add(3 * sub.size());
  });
  return score_grasp(spec, params, mask, grads);
}

ScoreMap score_synflow(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                       const SynflowOptions& options) {
  const Objective objective = Objective::synflow(spec, options.mode);
  if (options.counter) options.counter->add(1);
  ObjectiveEvaluation eval = evaluate_objective(spec, params, mask, objective);
  if (!std::isfinite(eval.value) && options.rescale_on_overflow) {
    ParamSet scaled = params;
    for (std::size_t l : spec.prunable_layers()) {
      auto& w = scaled.layers[l].weight.data;
      const double m = max_abs(w);
      if (m > 0.0)
        for (double& v : w) v /= m;
    }
    eval = evaluate_objective(spec, scaled, mask, objective);
  }
  if (!std::isfinite(eval.value))
    throw NumericError("SynFlow objective is non-finite; rescale layer weights before scoring");
  return saliency_from(spec, mask, eval);
}

ScoreMap synflow_closed_form(const NetworkSpec& spec, const ParamSet& params, const Mask& mask) {
  check_congruent(spec, params);
  check_congruent(spec, mask);
  std::vector<std::size_t> dense;
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const LayerSpec& layer = spec.layers[l];
    if (layer.kind == LayerKind::Dense) {
      if (max_abs(params.layers[l].bias.values()) != 0.0)
        throw UnsupportedError("closed-form SynFlow needs a bias-free network; layer " +
                               std::to_string(l) + " has a bias");
      dense.push_back(l);
    } else if (layer.kind != LayerKind::Relu && layer.kind != LayerKind::Flatten) {
      // ReLU and flatten act as the identity on the non-negative flow.
      throw UnsupportedError("closed-form SynFlow supports dense chains only; layer " +
                             std::to_string(l) + " is " + to_string(layer.kind));
    }
  }
  auto abs_weight = [&](std::size_t l, std::size_t i) {
    return mask.keep[l][i] ? std::abs(params.layers[l].weight.data[i]) : 0.0;
  };
  // forward[k]: ∏_{m<k}|W^[m]| 1 entering dense layer k
  std::vector<std::vector<double>> fwd(dense.size() + 1), bwd(dense.size() + 1);
  fwd[0].assign(element_count(spec.input_shape), 1.0);
  for (std::size_t k = 0; k < dense.size(); ++k) {
    const LayerSpec& layer = spec.layers[dense[k]];
    const std::size_t rows = layer.units, cols = layer.input_shape[0];
    fwd[k + 1].assign(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) fwd[k + 1][i] += abs_weight(dense[k], i * cols + j) * fwd[k][j];
  }
  // bwd[k]: 1ᵀ ∏_{m>=k}|W^[m]| leaving dense layer k-1
  bwd[dense.size()].assign(spec.output_dim(), 1.0);
  for (std::size_t k = dense.size(); k-- > 0;) {
    const LayerSpec& layer = spec.layers[dense[k]];
    const std::size_t rows = layer.units, cols = layer.input_shape[0];
    bwd[k].assign(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) bwd[k][j] += bwd[k + 1][i] * abs_weight(dense[k], i * cols + j);
  }
  ScoreMap s = ScoreMap::like(mask);
  for (std::size_t k = 0; k < dense.size(); ++k) {
    const std::size_t l = dense[k];
    const std::size_t rows = spec.layers[l].units, cols = spec.layers[l].input_shape[0];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t at = i * cols + j;
        if (s.present[l][at]) s.values[l][at] = bwd[k + 1][i] * abs_weight(l, at) * fwd[k][j];
      }
  }
  return s;
}

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Random: return "random";
    case ScorerKind::Magnitude: return "magnitude";
    case ScorerKind::Snip: return "snip";
    case ScorerKind::Grasp: return "grasp";
    case ScorerKind::Synflow: return "synflow";
  }
  return "unknown";
}

ScorerKind scorer_kind_from_string(const std::string& name) {
  for (ScorerKind k : {ScorerKind::Random, ScorerKind::Magnitude, ScorerKind::Snip,
                       ScorerKind::Grasp, ScorerKind::Synflow})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown scorer '" + name + "'");
}

bool is_data_dependent(ScorerKind kind) {
  return kind == ScorerKind::Snip || kind == ScorerKind::Grasp;
}

void ScoringContext::validate() const {
  if (is_data_dependent(kind) && (!data || data->size() == 0))
    throw std::invalid_argument(to_string(kind) + " scoring needs a data batch");
  if (!is_data_dependent(kind) && data)
    throw std::invalid_argument(to_string(kind) + " scoring is data-agnostic and takes no batch");
}

ScoreMap compute_scores(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                        const ScoringContext& context) {
  context.validate();
  const DataScoringOptions data_options{context.sub_batch, context.mode, context.counter};
  switch (context.kind) {
    case ScorerKind::Random: return score_random(spec, mask, context.seed);
    case ScorerKind::Magnitude: return score_magnitude(spec, params, mask);
    case ScorerKind::Snip: return score_snip(spec, params, mask, *context.data, context.loss, data_options);
    case ScorerKind::Grasp: return score_grasp(spec, params, mask, *context.data, context.loss, data_options);
    case ScorerKind::Synflow: {
      SynflowOptions options;
      options.counter = context.counter;
      return score_synflow(spec, params, mask, options);
    }
  }
  throw std::invalid_argument("unknown scorer");
}

}  // namespace flowprune
