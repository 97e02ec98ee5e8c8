#include <doctest.h>

#include <cmath>

#include "support.hpp"

using namespace flowprune;
using namespace flowprune::testing;

namespace {

ScoreMap flat_scores(std::vector<double> values) {
  Mask m;
  m.keep = {std::vector<std::uint8_t>(values.size(), 1)};
  ScoreMap s = ScoreMap::like(m);
  s.values[0] = std::move(values);
  return s;
}

Scorer synflow_scorer(const NetworkSpec& spec) {
  ScoringContext c;
  c.kind = ScorerKind::Synflow;
  return make_scorer(spec, c);
}

}  // namespace

TEST_CASE("select_mask") {
  CHECK(select_mask(flat_scores({1, 2, 3, 4}), 0.5).keep[0] == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(select_mask(flat_scores({4, 1, 3, 2}), 1.0).keep[0] == std::vector<std::uint8_t>{1, 1, 1, 1});
  CHECK(select_mask(flat_scores({2, 2, 2, 2}), 0.5).keep[0] == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(select_mask(flat_scores({-3, 1, -1, 0}), 0.5).keep[0] == std::vector<std::uint8_t>{0, 1, 0, 1});

  SUBCASE("ties across layers go by layer first") {
    Mask m;
    m.keep = {{1, 1}, {}, {1, 1}};
    ScoreMap s = ScoreMap::like(m);
    s.values[0] = {5, 5};
    s.values[2] = {5, 5};
    CHECK(select_top_k(s, 1).keep == std::vector<std::vector<std::uint8_t>>{{0, 0}, {}, {0, 1}});
  }
  SUBCASE("absent entries never come back") {
    ScoreMap s = flat_scores({9, 1, 2});
    s.present[0][0] = 0;
    CHECK(select_mask(s, 1.0).keep[0] == std::vector<std::uint8_t>{0, 1, 1});
  }
}

TEST_CASE("keep_count") {
  CHECK(keep_count(0.5, 7) == 4);
  CHECK(keep_count(1.0, 7) == 7);
  CHECK(keep_count(0.0, 7) == 1);
  CHECK(keep_count(0.0, 0) == 0);
  const NetworkSpec spec = zoo::toy_vgg();
  const std::size_t n = spec.prunable_count();
  CHECK(keep_count(1.0 / max_compression(spec), n) == spec.prunable_layers().size());
}

TEST_CASE("compression schedules") {
  const CompressionSchedule exp{100.0, 2, ScheduleKind::Exponential};
  CHECK(exp.keep_fraction(1) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(exp.keep_fraction(2) == doctest::Approx(0.01).epsilon(1e-14));
  const CompressionSchedule lin{4.0, 3, ScheduleKind::Linear};
  CHECK(lin.keep_fraction(1) == doctest::Approx(0.75));
  CHECK(lin.keep_fraction(3) == doctest::Approx(0.25));
  CHECK(CompressionSchedule{1.0, 5}.keep_fraction(5) == 1.0);
  CHECK_THROWS(CompressionSchedule{0.5, 1}.validate());
  CHECK_THROWS(CompressionSchedule{10.0, 0}.validate());
  CHECK(schedule_kind_from_string("linear") == ScheduleKind::Linear);
}

TEST_CASE("prune loop") {
  const NetworkSpec spec = NetworkBuilder({2}).dense(2, false).dense(1, false).build();
  const ParamSet p = weights_only(spec, {{1, 2, 3, 4}, {1, 1}});

  SUBCASE("synflow hand example keeps one weight per layer") {
    const PruneReport r = prune(spec, p, synflow_scorer(spec), {3.0, 2});
    REQUIRE(r.iterations.size() == 2);
    CHECK(r.iterations[0].target == 4);
    CHECK(r.iterations[1].target == 2);
    CHECK(r.final_mask.keep[0] == std::vector<std::uint8_t>{0, 0, 0, 1});
    CHECK(r.final_mask.keep[1] == std::vector<std::uint8_t>{0, 1});
    CHECK_FALSE(r.collapsed);
  }
  SUBCASE("n = 1 is single-shot selection") {
    const NetworkSpec net = zoo::conv_pool();
    const ParamSet q = build_network(net, 2);
    ScoringContext c;
    c.kind = ScorerKind::Magnitude;
    const PruneReport r = prune(net, q, make_scorer(net, c), {10.0, 1});
    CHECK(r.final_mask == select_mask(score_magnitude(net, q, Mask::ones(net)), 0.1));
  }
  SUBCASE("targets shrink and are met exactly") {
    const NetworkSpec net = zoo::residual();
    const PruneReport r = prune(net, build_network(net, 3), synflow_scorer(net), {50.0, 10});
    std::size_t previous = net.prunable_count();
    for (const IterationRecord& it : r.iterations) {
      std::size_t remaining = 0;
      for (const LayerCount& c : it.layers) remaining += c.remaining;
      CHECK(remaining == it.target);
      CHECK(it.target <= previous);
      previous = it.target;
    }
    CHECK(r.final_mask.remaining() == keep_count(1.0 / 50.0, net.prunable_count()));
  }
  SUBCASE("ensure_survivor") {
    PruneOptions options;
    options.ensure_survivor = true;
    const PruneReport r = prune(spec, p, synflow_scorer(spec), {3.0, 1}, options);
    CHECK_FALSE(r.collapsed);
  }
  SUBCASE("scorer failures name the iteration") {
    const Scorer failing = [](const ParamSet&, const Mask&) -> ScoreMap { throw NumericError("boom"); };
    try {
      prune(spec, p, failing, {3.0, 2});
      FAIL("expected a throw");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("iteration 1") != std::string::npos);
    }
  }
}

TEST_CASE("layer collapse") {
  const NetworkSpec spec = NetworkBuilder({3}).dense(4).dense(2).build();
  Mask m = Mask::ones(spec);
  CHECK_FALSE(detect_layer_collapse(spec, m).collapsed);
  std::fill(m.keep[1].begin(), m.keep[1].end(), 0);
  const CollapseResult c = detect_layer_collapse(spec, m);
  CHECK(c.collapsed);
  CHECK(c.layers == std::vector<std::size_t>{1});
  m.keep[0].assign(12, 0);
  m.keep[0][5] = 1;
  m.keep[1][0] = 1;
  CHECK_FALSE(detect_layer_collapse(spec, m).collapsed);
}

TEST_CASE("prune_cut_ratio") {
  const NetworkSpec spec = NetworkBuilder({2}).dense(2, false).dense(1, false).build();
  const Mask full = Mask::ones(spec);
  ScoreMap s = ScoreMap::like(full);
  s.values[0] = {1, 2, 3, 4};
  s.values[1] = {0.5, 0.5};
  CHECK(prune_cut_ratio(spec, s, full, full) == 0.0);
  Mask cut = full;
  cut.keep[1] = {0, 0};
  CHECK(prune_cut_ratio(spec, s, full, cut) >= 1.0);
}

TEST_CASE("critical compression") {
  SUBCASE("synflow reaches the maximum") {
    const NetworkSpec spec = zoo::conv_pool();
    const std::vector<double> grid = default_ratio_grid(max_compression(spec), 0.5);
    const CriticalCompression cc = critical_compression(spec, build_network(spec, 0), synflow_scorer(spec),
                                                        [](double r) { return synflow_schedule(r); }, grid);
    CHECK(cc.critical == grid.back());
    CHECK(grid.back() == max_compression(spec));
  }
  SUBCASE("single-shot magnitude on a very wide layer") {
    const NetworkSpec spec = zoo::imbalance(1000, 10, 10);
    ScoringContext c;
    c.kind = ScorerKind::Magnitude;
    const std::vector<double> grid = default_ratio_grid(max_compression(spec));
    const CriticalCompression cc = critical_compression(
        spec, build_network(spec, 0), make_scorer(spec, c),
        [](double r) { return CompressionSchedule{r, 1}; }, grid);
    CHECK(cc.critical < max_compression(spec));
  }
  SUBCASE("random pruning kills the small layer") {
    const NetworkSpec spec = NetworkBuilder({100}).dense(10, false).dense(1, false).build();
    std::size_t small_first = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      ScoringContext c;
      c.kind = ScorerKind::Random;
      c.seed = seed;
      const PruneReport r = prune(spec, build_network(spec, seed), make_scorer(spec, c), {500.0, 1});
      small_first += r.collapsed && r.collapsed_layers == std::vector<std::size_t>{1};
    }
    CHECK(small_first >= 19);
  }
}

TEST_CASE("ratio grid") {
  const std::vector<double> g = default_ratio_grid(50.0);
  CHECK(g.front() == 1.0);
  CHECK(g.back() == 50.0);
  CHECK(g[4] == doctest::Approx(10.0).epsilon(1e-14));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
}
