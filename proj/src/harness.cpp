#include "flowprune/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

namespace flowprune {

namespace {

Batch gather(const Batch& source, std::span<const std::size_t> indices) {
  Batch out;
  const std::size_t row = source.inputs.row_size();
  Shape shape = source.inputs.shape;
  shape[0] = indices.size();
  out.inputs = Tensor(shape);
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices[r];
    std::copy_n(source.inputs.data.begin() + i * row, row, out.inputs.data.begin() + r * row);
    out.labels.push_back(source.labels[i]);
  }
  if (!source.targets.data.empty()) {
    const std::size_t trow = source.targets.row_size();
    Shape tshape = source.targets.shape;
    tshape[0] = indices.size();
    out.targets = Tensor(tshape);
    for (std::size_t r = 0; r < indices.size(); ++r)
      std::copy_n(source.targets.data.begin() + indices[r] * trow, trow,
                  out.targets.data.begin() + r * trow);
  }
  return out;
}

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

constexpr std::size_t kEvalChunk = 512;

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over a combination of both words
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Dataset gen_synthetic(const SyntheticOptions& o) {
  if (o.classes < 2) throw DomainError("synthetic data needs at least two classes");
  const std::size_t dim = element_count(o.sample_shape);
  if (dim == 0) throw DomainError("synthetic samples need a non-empty shape");
  if (!(o.test_fraction >= 0.0 && o.test_fraction < 1.0))
    throw DomainError("test fraction must lie in [0, 1)");
  const std::size_t n_test = std::size_t(std::llround(double(o.samples) * o.test_fraction));
  const std::size_t n_train = o.samples - n_test;
  if (n_train < o.classes) throw DomainError("fewer training samples than classes");

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> means(o.classes, std::vector<double>(dim));
  for (auto& m : means) {
    double norm = 0.0;
    for (double& v : m) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m) v *= o.separation / norm;
  }

  auto make_split = [&](std::size_t n) {
    Batch b;
    b.inputs = Tensor(batch_shape(n, o.sample_shape));
    b.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) b.labels[i] = int(i % o.classes);
    std::shuffle(b.labels.begin(), b.labels.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = means[std::size_t(b.labels[i])];
      for (std::size_t d = 0; d < dim; ++d) b.inputs.data[i * dim + d] = m[d] + normal(rng);
    }
    return b;
  };

  Dataset data;
  data.classes = o.classes;
  data.train = make_split(n_train);
  data.test = make_split(n_test);
  return data;
}

Dataset gen_synthetic(std::size_t classes, std::size_t dim, std::size_t samples, std::uint64_t seed) {
  SyntheticOptions o;
  o.classes = classes;
  o.sample_shape = {dim};
  o.samples = samples;
  o.seed = seed;
  return gen_synthetic(o);
}

namespace {

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const NetworkSpec& spec, const ParamSet& params, const Mask& mask, const Batch& data,
                    std::optional<LossKind> loss) {
  Evaluation e;
  if (data.size() == 0) return e;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += kEvalChunk) {
    const Batch chunk = data.slice(begin, std::min(data.size(), begin + kEvalChunk));
    const ForwardTrace trace = forward(spec, params, mask, chunk.inputs, Mode::Eval);
    const Tensor& y = trace.output();
    if (loss) e.loss += evaluate_loss(y, chunk, *loss, Reduction::Sum).value;
    const std::size_t k = y.row_size();
    for (std::size_t r = 0; r < chunk.size(); ++r) {
      const auto row = y.data.begin() + r * k;
      const auto best = std::size_t(std::max_element(row, row + k) - row);
      if (int(best) == chunk.labels[r]) ++correct;
    }
  }
  e.loss /= double(data.size());
  e.accuracy = double(correct) / double(data.size());
  return e;
}

}  // namespace

double accuracy(const NetworkSpec& spec, const ParamSet& params, const Mask& mask, const Batch& data) {
  return evaluate(spec, params, mask, data, std::nullopt).accuracy;
}

double mean_loss(const NetworkSpec& spec, const ParamSet& params, const Mask& mask, const Batch& data,
                 LossKind kind) {
  return evaluate(spec, params, mask, data, kind).loss;
}

TrainResult train(const NetworkSpec& spec, const ParamSet& params, const Mask& mask,
                  const Dataset& data, const TrainConfig& config) {
  check_congruent(spec, params);
  check_congruent(spec, mask);
  if (config.batch_size == 0) throw DomainError("batch size must be positive");

  TrainResult result;
  result.params = apply_mask(spec, params, mask);
  ParamSet& p = result.params;
  auto record = [&](std::size_t epoch) {
    EpochMetrics m;
    m.epoch = epoch;
    const Evaluation train_eval = evaluate(spec, p, mask, data.train, config.loss);
    m.train_loss = train_eval.loss;
    m.train_accuracy = train_eval.accuracy;
    m.test_accuracy = accuracy(spec, p, mask, data.test);
    result.history.push_back(m);
    return std::isfinite(m.train_loss);
  };
  if (!record(0)) {
    result.failed = true;
    result.failure = "non-finite loss before training";
    return result;
  }

  GradientSet velocity = zeros_like(p);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order = iota_n(data.train.size());
  double lr = config.lr;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (std::find(config.lr_drops.begin(), config.lr_drops.end(), epoch) != config.lr_drops.end())
      lr *= config.drop_factor;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const Batch batch = gather(data.train, std::span(order).subspan(begin, end - begin));
      const ForwardTrace trace = forward(spec, p, mask, batch.inputs, Mode::Train);
      const LossValue loss = evaluate_loss(trace.output(), batch, config.loss, Reduction::Mean);
      if (!std::isfinite(loss.value)) {
        result.failed = true;
        result.failure = "loss diverged in epoch " + std::to_string(epoch);
        return result;
      }
      const GradientSet g = backward(spec, trace, p, mask, loss.output_grad);

      for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const LayerSpec& layer = spec.layers[l];
        LayerParams& lp = p.layers[l];
        const LayerParams& lg = g.layers[l];
        LayerParams& lv = velocity.layers[l];
        auto step = [&](Tensor& w, const Tensor& dw, Tensor& v, const std::uint8_t* keep, bool decay) {
          for (std::size_t i = 0; i < w.data.size(); ++i) {
            if (keep && !keep[i]) {
              v.data[i] = 0.0;
              continue;
            }
            const double grad = dw.data[i] + (decay ? config.weight_decay * w.data[i] : 0.0);
            v.data[i] = config.momentum * v.data[i] + grad;
            w.data[i] -= lr * v.data[i];
          }
        };
        if (layer.has_weights()) {
          step(lp.weight, lg.weight, lv.weight, mask.keep[l].data(), true);
          if (layer.has_bias()) step(lp.bias, lg.bias, lv.bias, nullptr, true);
        } else if (layer.kind == LayerKind::BatchNorm) {
          step(lp.gamma, lg.gamma, lv.gamma, nullptr, false);
          step(lp.beta, lg.beta, lv.beta, nullptr, false);
          const BatchNormCache& cache = trace.batchnorm[l];
          constexpr double kMomentum = 0.1;
          for (std::size_t c = 0; c < cache.mean.size(); ++c) {
            lp.running_mean.data[c] = (1.0 - kMomentum) * lp.running_mean.data[c] + kMomentum * cache.mean[c];
            lp.running_var.data[c] = (1.0 - kMomentum) * lp.running_var.data[c] + kMomentum * cache.var[c];
          }
        }
      }
    }
    if (!record(epoch)) {
      result.failed = true;
      result.failure = "loss diverged in epoch " + std::to_string(epoch);
      return result;
    }
  }
  return result;
}

PassCount pass_count(ScorerKind scorer, const CompressionSchedule& schedule, std::size_t classes,
                     std::size_t examples_per_class) {
  schedule.validate();
  PassCount count;
  switch (scorer) {
    case ScorerKind::Random:
    case ScorerKind::Magnitude:
      count.multiplier = 0;
      count.note = "no gradient evaluations";
      break;
    case ScorerKind::Synflow:
      count.examples_per_iteration = 1;
      count.note = "one all-ones input per iteration";
      break;
    case ScorerKind::Snip:
      count.examples_per_iteration = examples_per_class * classes;
      count.note = "one gradient per example";
      break;
    case ScorerKind::Grasp:
      count.examples_per_iteration = examples_per_class * classes;
      count.multiplier = 3;
      count.note = "gradient plus two gradients for the finite-difference Hessian product";
      break;
  }
  count.passes = schedule.iterations * count.examples_per_iteration * count.multiplier;
  return count;
}

std::vector<double> ExperimentConfig::ratio_grid() const {
  if (!ratios.empty()) return ratios;
  return default_ratio_grid(max_compression(network), grid_step);
}

void ExperimentConfig::validate() const {
  network.validate();
  if (scorers.empty()) throw std::invalid_argument("experiment lists no scorers");
  if (seeds.empty()) throw std::invalid_argument("experiment lists no seeds");
  if (network.output_dim() != dataset.classes)
    throw std::invalid_argument("network outputs " + std::to_string(network.output_dim()) +
                                " values but the dataset has " + std::to_string(dataset.classes) +
                                " classes");
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid step must be positive");
  for (double r : ratios)
    if (!(r >= 1.0) || !std::isfinite(r)) throw DomainError("compression ratios must be finite and >= 1");
  for (const ScorerConfig& s : scorers)
    if (s.iterations == 0) throw DomainError("scorer '" + s.label + "' needs at least one iteration");
}

Batch scoring_batch(const Dataset& data, std::size_t examples_per_class, std::uint64_t seed) {
  std::vector<std::size_t> order = iota_n(data.train.size());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> taken(data.classes, 0);
  std::vector<std::size_t> chosen;
  for (std::size_t i : order) {
    const auto c = std::size_t(data.train.labels[i]);
    if (taken[c] < examples_per_class) {
      ++taken[c];
      chosen.push_back(i);
    }
  }
  return gather(data.train, chosen);
}

SweepCell run_cell(const ExperimentConfig& config, const Dataset& data, const ScorerConfig& scorer,
                   double ratio, std::uint64_t seed) {
  const NetworkSpec& spec = config.network;
  SweepCell cell;
  cell.scorer = scorer.label;
  cell.iterations = scorer.iterations;
  cell.ratio = ratio;
  cell.seed = seed;
  try {
    const ParamSet params = build_network(spec, derive_seed(seed, 1));
    Mask mask = Mask::ones(spec);
    if (ratio > 1.0) {
      PassCounter counter;
      ScoringContext context;
      context.kind = scorer.kind;
      context.loss = config.loss;
      context.seed = derive_seed(seed, 2);
      context.sub_batch = config.score_sub_batch;
      context.counter = &counter;
      if (is_data_dependent(scorer.kind))
        context.data = scoring_batch(data, config.score_examples_per_class, derive_seed(seed, 3));
      PruneOptions options;
      options.counter = &counter;
      const PruneReport report = prune(spec, params, make_scorer(spec, std::move(context)),
                                       {ratio, scorer.iterations, scorer.schedule}, options);
      mask = report.final_mask;
      cell.passes = report.passes;
      cell.collapsed = report.collapsed;
      cell.collapsed_layers = report.collapsed_layers;
    }
    cell.remaining = mask.remaining();
    cell.layers = layer_param_counts(spec, mask);
    if (cell.collapsed) {
      // an empty layer cuts every path: the output is constant, so measure it untrained
      cell.test_accuracy = accuracy(spec, params, mask, data.test);
      return cell;
    }
    TrainConfig training = config.training;
    training.seed = derive_seed(seed, 4);
    const TrainResult trained = train(spec, params, mask, data, training);
    cell.failed = trained.failed;
    cell.error = trained.failure;
    cell.test_accuracy = trained.failed ? 1.0 / double(data.classes) : trained.final_test_accuracy();
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
    cell.test_accuracy = 1.0 / double(data.classes);
  }
  return cell;
}

SweepReport run_sweep(const ExperimentConfig& config) {
  config.validate();
  SyntheticOptions options = config.dataset;
  options.sample_shape = config.network.input_shape;
  const Dataset data = gen_synthetic(options);
  const std::vector<double> grid = config.ratio_grid();

  struct Job {
    std::size_t scorer;
    double ratio;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < config.scorers.size(); ++s)
    for (double r : grid)
      for (std::uint64_t seed : config.seeds) jobs.push_back({s, r, seed});

  SweepReport report;
  report.max_ratio = max_compression(config.network);
  report.chance = 1.0 / double(data.classes);
  report.cells.resize(jobs.size());

  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++)
      report.cells[j] = run_cell(config, data, config.scorers[jobs[j].scorer], jobs[j].ratio, jobs[j].seed);
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::stable_sort(report.cells.begin(), report.cells.end(), [](const SweepCell& a, const SweepCell& b) {
    return std::tie(a.scorer, a.ratio, a.seed) < std::tie(b.scorer, b.ratio, b.seed);
  });
  for (const SweepCell& cell : report.cells) {
    if (report.summaries.empty() || report.summaries.back().scorer != cell.scorer ||
        report.summaries.back().ratio != cell.ratio) {
      SweepSummary s;
      s.scorer = cell.scorer;
      s.ratio = cell.ratio;
      s.min_accuracy = cell.test_accuracy;
      s.max_accuracy = cell.test_accuracy;
      report.summaries.push_back(s);
    }
    SweepSummary& s = report.summaries.back();
    s.min_accuracy = std::min(s.min_accuracy, cell.test_accuracy);
    s.max_accuracy = std::max(s.max_accuracy, cell.test_accuracy);
    s.mean_accuracy += cell.test_accuracy;
    s.collapsed_runs += cell.collapsed ? 1 : 0;
    ++s.runs;
  }
  for (SweepSummary& s : report.summaries) s.mean_accuracy /= double(s.runs);
  return report;
}

ImpResult imp_toy(const NetworkSpec& spec, const ParamSet& params, const Dataset& data,
                  std::size_t cycles, double target_ratio, const TrainConfig& training,
                  bool train_final) {
  if (cycles == 0) throw DomainError("IMP needs at least one cycle");
  const CompressionSchedule schedule{target_ratio, cycles, ScheduleKind::Exponential};
  schedule.validate();

  ImpResult result;
  result.report.scorer = "imp";
  result.report.schedule = schedule;
  Mask mask = Mask::ones(spec);
  result.report.total = mask.total();
  if (target_ratio > double(result.report.total)) throw DomainError("compression ratio exceeds N");

  for (std::size_t c = 1; c <= cycles; ++c) {
    TrainConfig cfg = training;
    cfg.seed = derive_seed(training.seed, c);
    const TrainResult trained = train(spec, params, mask, data, cfg);
    if (trained.failed) result.failed = true;

    const ScoreMap scores = score_magnitude(spec, trained.params, mask);
    IterationRecord rec;
    rec.iteration = c;
    rec.keep_fraction = schedule.keep_fraction(c);
    rec.target = std::min(mask.remaining(), keep_count(rec.keep_fraction, result.report.total));
    Mask next = select_top_k(scores, rec.target);
    rec.noop = next.remaining() == mask.remaining();
    rec.prune_cut_ratio = prune_cut_ratio(spec, scores, mask, next);
    mask = std::move(next);
    rec.layers = layer_param_counts(spec, mask);
    result.report.iterations.push_back(std::move(rec));
  }

  const CollapseResult collapse = detect_layer_collapse(spec, mask);
  result.report.collapsed = collapse.collapsed;
  result.report.collapsed_layers = collapse.layers;
  result.rewound = apply_mask(spec, params, mask);
  result.report.final_mask = std::move(mask);

  if (train_final && !collapse.collapsed) {
    TrainConfig cfg = training;
    cfg.seed = derive_seed(training.seed, cycles + 1);
    const TrainResult final_run = train(spec, result.rewound, result.report.final_mask, data, cfg);
    result.trained_final = true;
    result.failed = result.failed || final_run.failed;
    result.test_accuracy = final_run.failed ? 1.0 / double(data.classes) : final_run.final_test_accuracy();
  } else if (collapse.collapsed) {
    result.test_accuracy = 1.0 / double(data.classes);
  }
  return result;
}

CriticalCompression imp_critical_compression(const NetworkSpec& spec, const ParamSet& params,
                                             const Dataset& data, std::size_t cycles,
                                             const std::vector<double>& grid,
                                             const TrainConfig& training) {
  CriticalCompression result;
  bool collapsed_before = false;
  for (double ratio : grid) {
    CollapseResult c;
    if (ratio > 1.0) {
      const ImpResult run = imp_toy(spec, params, data, cycles, ratio, training, false);
      c = {run.report.collapsed, run.report.collapsed_layers};
    }
    if (!c.collapsed && !collapsed_before) result.critical = std::max(result.critical, ratio);
    collapsed_before = collapsed_before || c.collapsed;
    result.ratios.push_back(ratio);
    result.collapse.push_back(std::move(c));
  }
  return result;
}

}  // namespace flowprune
