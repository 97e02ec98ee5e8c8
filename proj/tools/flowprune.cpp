#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <random>

#include <CLI11.hpp>

#include "flowprune/io.hpp"
#include "flowprune/zoo.hpp"

namespace fs = std::filesystem;
using namespace flowprune;

namespace {

struct Common {
  std::string config;
  std::string network = "toy_vgg";
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string format = "json";
};

ExperimentConfig load_or_default(const Common& c) {
  if (!c.config.empty()) return load_experiment(c.config);
  ExperimentConfig cfg;
  cfg.network = zoo::by_name(c.network);
  cfg.dataset.classes = cfg.network.output_dim();
  cfg.dataset.sample_shape = cfg.network.input_shape;
  return cfg;
}

void emit(const fs::path& dir, const std::string& stem, Format format, const json& j, const std::string& csv) {
  if (format == Format::Json)
    write_file(dir / (stem + ".json"), dump(j));
  else
    write_file(dir / (stem + ".csv"), csv);
}

int run_prune(const Common& c, const std::string& scorer_name, double rho, std::size_t iterations,
              const std::string& schedule) {
  const ExperimentConfig cfg = load_or_default(c);
  const std::uint64_t seed = c.seed.value_or(cfg.seed);
  const ScorerKind kind = scorer_kind_from_string(scorer_name);
  const CompressionSchedule sched{rho, iterations, schedule_kind_from_string(schedule)};

  const ParamSet params = build_network(cfg.network, derive_seed(seed, 1));
  PassCounter counter;
  ScoringContext context;
  context.kind = kind;
  context.loss = cfg.loss;
  context.seed = derive_seed(seed, 2);
  context.sub_batch = cfg.score_sub_batch;
  context.counter = &counter;
  if (is_data_dependent(kind)) {
    SyntheticOptions data_options = cfg.dataset;
    data_options.sample_shape = cfg.network.input_shape;
    const Dataset data = gen_synthetic(data_options);
    context.data = scoring_batch(data, cfg.score_examples_per_class, derive_seed(seed, 3));
  }
  PruneOptions options;
  options.counter = &counter;
  PruneReport report = prune(cfg.network, params, make_scorer(cfg.network, std::move(context)), sched, options);
  report.scorer = scorer_name;

  const Format format = format_from_string(c.format);
  json j = to_json(report);
  j["pass_count"] = to_json(pass_count(kind, sched, cfg.dataset.classes, cfg.score_examples_per_class));
  emit(c.out, "prune_report", format, j, prune_report_csv(report));
  std::printf("%s rho=%g n=%zu remaining=%zu/%zu collapsed=%s passes=%zu\n", scorer_name.c_str(), rho,
              iterations, report.final_mask.remaining(), report.total, report.collapsed ? "yes" : "no",
              report.passes);
  return 0;
}

int run_sweep_cmd(const Common& c) {
  ExperimentConfig cfg = load_or_default(c);
  if (cfg.scorers.empty())
    for (ScorerKind k : {ScorerKind::Random, ScorerKind::Magnitude, ScorerKind::Snip, ScorerKind::Grasp})
      cfg.scorers.push_back({to_string(k), k, 1, ScheduleKind::Exponential});
  if (c.seed) cfg.seeds = {*c.seed, *c.seed + 1, *c.seed + 2};
  const SweepReport report = run_sweep(cfg);
  const fs::path dir = c.out;
  if (format_from_string(c.format) == Format::Json) {
    write_file(dir / "sweep.json", dump(to_json(report)));
  } else {
    write_file(dir / "sweep_cells.csv", sweep_cells_csv(report));
    write_file(dir / "sweep_layers.csv", sweep_layers_csv(report));
    write_file(dir / "sweep_summary.csv", sweep_summary_csv(report));
  }
  std::size_t failed = 0;
  for (const SweepSummary& s : report.summaries)
    std::printf("%-14s rho=%-10.4g acc min/mean/max %.3f/%.3f/%.3f collapsed %zu/%zu\n", s.scorer.c_str(),
                s.ratio, s.min_accuracy, s.mean_accuracy, s.max_accuracy, s.collapsed_runs, s.runs);
  for (const SweepCell& cell : report.cells)
    if (cell.failed) {
      ++failed;
      std::fprintf(stderr, "cell %s rho=%g seed=%llu failed: %s\n", cell.scorer.c_str(), cell.ratio,
                   static_cast<unsigned long long>(cell.seed), cell.error.c_str());
    }
  return failed ? 1 : 0;
}

int run_verify(const Common& c) {
  const std::uint64_t seed = c.seed.value_or(0);
  const fs::path dir = c.out;
  const Format format = format_from_string(c.format);
  bool ok = true;
  auto line = [&](const std::string& name, bool pass, double value) {
    std::printf("%-34s %s (%.3g)\n", name.c_str(), pass ? "PASS" : "FAIL", value);
    ok = ok && pass;
  };

  for (const auto& [name, spec] : zoo::homogeneous_suite()) {
    const ParamSet params = build_network(spec, seed);
    const Mask mask = Mask::ones(spec);
    Tensor x(batch_shape(4, spec.input_shape));
    std::mt19937_64 rng(derive_seed(seed, 7));
    std::normal_distribution<double> normal;
    for (double& v : x.data) v = normal(rng);
    const std::map<std::string, Objective> objectives{{"output_sum", Objective::output_sum(x)},
                                                      {"synflow", Objective::synflow(spec)}};
    for (const auto& [oname, objective] : objectives) {
      const ConservationReport neuron = check_neuron_conservation(spec, params, mask, objective);
      const ConservationReport network = check_network_conservation(spec, params, mask, objective);
      line(name + " neuron " + oname, neuron.pass(), neuron.max_relative_residual);
      line(name + " cut " + oname, network.pass(), network.max_relative_residual);
      const std::string stem = name + "_" + oname;
      emit(dir, stem + "_units", format, to_json(neuron), units_csv(neuron));
      emit(dir, stem + "_cuts", format, to_json(network), cuts_csv(network));
    }
  }

  {
    const NetworkSpec spec = zoo::mlp({20, 50, 40, 10});
    const ParamSet params = build_network(spec, seed);
    const Mask mask = Mask::ones(spec);
    const Dataset data = gen_synthetic(10, 20, 200, seed);
    std::map<std::string, ScoreMap> scores;
    scores["synflow"] = score_synflow(spec, params, mask);
    scores["snip"] = score_snip(spec, params, mask, data.train, LossKind::CrossEntropy);
    scores["grasp"] = score_grasp(spec, params, mask, data.train, LossKind::CrossEntropy);
    const std::vector<ScoreSizeLaw> laws = layer_score_size_law(spec, scores);
    for (const ScoreSizeLaw& law : laws)
      if (law.method == "synflow") line("score-size law synflow", law.pass(), law.max_relative_spread);
    json j = json::array();
    for (const ScoreSizeLaw& law : laws) j.push_back(to_json(law));
    emit(dir, "score_size", format, j, score_size_csv(laws));
  }

  {
    const NetworkSpec spec = zoo::linear(8, 8, 4);
    const ParamSet params = build_network(spec, seed);
    Batch data = gen_synthetic(4, 8, 40, seed).train;
    const FlowScalingCheck check = check_flow_drift_scaling(spec, params, data, 1e-3, 1000);
    line("gradient-flow drift halving", check.pass(), check.ratio);
    const FlowConservationTrace trace = gradient_flow_conservation(spec, params, data, 1000, 1e-3, 10);
    emit(dir, "flow", format, to_json(trace), flow_csv(trace));
  }

  {
    const NetworkSpec spec = zoo::batchnorm_net();
    const ParamSet params = build_network(spec, seed);
    Tensor x(batch_shape(8, spec.input_shape));
    std::mt19937_64 rng(derive_seed(seed, 8));
    std::normal_distribution<double> normal;
    for (double& v : x.data) v = normal(rng);
    const BatchNormReport bn =
        bn_saliency_zero(spec, params, Mask::ones(spec), Objective::output_sum(x, Mode::Train));
    line("batch-norm saliency (eps term)", bn.pass(), bn.max_residual);
    emit(dir, "batchnorm", format, to_json(bn), batchnorm_csv(bn));
  }
  return ok ? 0 : 1;
}

int run_imp(const Common& c, double rho) {
  ExperimentConfig cfg = load_or_default(c);
  const std::uint64_t seed = c.seed.value_or(cfg.seed);
  SyntheticOptions data_options = cfg.dataset;
  data_options.sample_shape = cfg.network.input_shape;
  const Dataset data = gen_synthetic(data_options);
  const ParamSet params = build_network(cfg.network, derive_seed(seed, 1));
  TrainConfig training = cfg.training;
  training.seed = derive_seed(seed, 4);
  json all = json::array();
  std::string csv;
  for (std::size_t cycles : cfg.imp_cycles) {
    const ImpResult r = imp_toy(cfg.network, params, data, cycles, rho, training);
    json j = to_json(r.report);
    j["test_accuracy"] = r.test_accuracy;
    j["failed"] = r.failed;
    all.push_back(j);
    csv += "# cycles=" + std::to_string(cycles) + "\n" + prune_report_csv(r.report);
    std::printf("imp cycles=%zu rho=%g collapsed=%s test_accuracy=%.4f\n", cycles, rho,
                r.report.collapsed ? "yes" : "no", r.test_accuracy);
  }
  emit(c.out, "imp", format_from_string(c.format), all, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pruning at initialization with conservation checks"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config (JSON)");
    sub->add_option("--network", common.network, "built-in architecture when no config is given");
    sub->add_option("--seed", common.seed, "seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--format", common.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  };

  std::string scorer = "synflow";
  std::string schedule = "exponential";
  double rho = 10.0;
  std::size_t iterations = 100;

  CLI::App* prune_cmd = app.add_subcommand("prune", "prune one network at initialization");
  add_common(prune_cmd);
  prune_cmd->add_option("--scorer", scorer, "random, magnitude, snip, grasp or synflow");
  prune_cmd->add_option("--rho", rho, "compression ratio");
  prune_cmd->add_option("--iterations", iterations, "pruning iterations");
  prune_cmd->add_option("--schedule", schedule)->check(CLI::IsMember({"linear", "exponential"}));

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "accuracy against compression over scorers and seeds");
  add_common(sweep_cmd);

  CLI::App* verify_cmd = app.add_subcommand("verify", "conservation checks");
  add_common(verify_cmd);

  CLI::App* imp_cmd = app.add_subcommand("imp", "iterative magnitude pruning with rewinding");
  add_common(imp_cmd);
  imp_cmd->add_option("--rho", rho, "target compression ratio");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*prune_cmd) return run_prune(common, scorer, rho, iterations, schedule);
    if (*sweep_cmd) return run_sweep_cmd(common);
    if (*verify_cmd) return run_verify(common);
    if (*imp_cmd) return run_imp(common, rho);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
