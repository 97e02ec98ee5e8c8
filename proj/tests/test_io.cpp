#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "support.hpp"

using namespace flowprune;
using namespace flowprune::testing;
namespace fs = std::filesystem;

namespace {

PruneReport sample_report() {
  const NetworkSpec spec = zoo::conv_pool();
  ScoringContext c;
  c.kind = ScorerKind::Synflow;
  PruneReport r = prune(spec, build_network(spec, 1), make_scorer(spec, c), {20.0, 5});
  r.scorer = "synflow";
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "flowprune_tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("doubles") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("network encoding") {
  for (const std::string& name : zoo::names()) {
    CAPTURE(name);
    const NetworkSpec spec = zoo::by_name(name);
    const NetworkSpec back = network_from_json(to_json(spec));
    CHECK(dump(to_json(back)) == dump(to_json(spec)));
    CHECK(dump(to_json(network_from_json(json(name)))) == dump(to_json(spec)));
  }
  CHECK_THROWS(network_from_json(json("no_such_net")));
}

TEST_CASE("prune report round trip") {
  const PruneReport r = sample_report();
  const PruneReport back = prune_report_from_json(json::parse(dump(to_json(r))));
  CHECK(dump(to_json(back)) == dump(to_json(r)));
  CHECK(back.final_mask == r.final_mask);
  const std::string csv = prune_report_csv(r);
  CHECK(csv.rfind("iteration,layer,remaining,total,prune_size,min_cut_size\n", 0) == 0);
}

TEST_CASE("sweep report round trip") {
  ExperimentConfig cfg;
  cfg.network = zoo::dense();
  cfg.dataset.classes = 4;
  cfg.dataset.samples = 120;
  cfg.training.epochs = 1;
  cfg.ratios = {1.0, 4.0};
  cfg.seeds = {0};
  cfg.scorers = {{"synflow", ScorerKind::Synflow, 1, ScheduleKind::Exponential}};
  const SweepReport r = run_sweep(cfg);
  const SweepReport back = sweep_report_from_json(json::parse(dump(to_json(r))));
  CHECK(dump(to_json(back)) == dump(to_json(r)));
  CHECK(sweep_cells_csv(r).rfind("scorer,iterations,ratio,seed,", 0) == 0);
}

TEST_CASE("experiment config") {
  ExperimentConfig cfg;
  cfg.network = zoo::conv();
  cfg.scorers = {{"snip-100", ScorerKind::Snip, 100, ScheduleKind::Linear}};
  cfg.ratios = {1.0, 10.0};
  cfg.training.lr_drops = {3};
  const ExperimentConfig back = experiment_from_json(to_json(cfg));
  CHECK(dump(to_json(back)) == dump(to_json(cfg)));

  json j = to_json(cfg);
  j["learning_rate"] = 0.1;
  CHECK_THROWS_AS(experiment_from_json(j), std::invalid_argument);
  j = to_json(cfg);
  j["ratios"] = json::array({10.0, 1.0});
  CHECK_THROWS(experiment_from_json(j));

  const json minimal = json::parse(R"({"network": "dense", "scorers": ["synflow", {"kind": "snip", "iterations": 10}]})");
  const ExperimentConfig m = experiment_from_json(minimal);
  REQUIRE(m.scorers.size() == 2);
  CHECK(m.scorers[1].label == "snip-10");
}

TEST_CASE("files") {
  const fs::path p = scratch("nested/dir/report.json");
  fs::remove_all(p.parent_path());
  const std::string a = dump(to_json(sample_report()));
  write_file(p, a);
  CHECK(read_file(p) == a);
  write_file(p, dump(to_json(sample_report())));
  CHECK(read_file(p) == a);
  CHECK_THROWS_AS(write_file("/proc/flowprune/report.json", a), std::runtime_error);
}
