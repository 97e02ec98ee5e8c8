#include <doctest.h>

#include <cmath>

#include "support.hpp"

using namespace flowprune;
using flowprune::testing::weights_only;

TEST_CASE("kaiming init") {
  SUBCASE("fan_in 2 targets unit std") {
    NetworkSpec spec = NetworkBuilder({2}).dense(5000, false).build();
    const ParamSet p = build_network(spec, 3);
    double sq = 0.0;
    for (double v : p.layers[0].weight.data) sq += v * v;
    CHECK(std::sqrt(sq / 10000.0) == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("fan_in 50, 10000 weights") {
    NetworkSpec spec = NetworkBuilder({50}).dense(200).build();
    const ParamSet p = build_network(spec, 11);
    const auto& w = p.layers[0].weight.data;
    REQUIRE(w.size() == 10000);
    double mean = 0.0, sq = 0.0;
    for (double v : w) mean += v;
    mean /= double(w.size());
    for (double v : w) sq += (v - mean) * (v - mean);
    CHECK(std::sqrt(sq / double(w.size())) == doctest::Approx(std::sqrt(2.0 / 50.0)).epsilon(0.05));
  }
  SUBCASE("biases start at zero") {
    for (const auto& [name, spec] : zoo::homogeneous_suite()) {
      const ParamSet p = build_network(spec, 1);
      for (const auto& layer : p.layers)
        for (double b : layer.bias.data) CHECK(b == 0.0);
    }
  }
  SUBCASE("deterministic in the seed") {
    const NetworkSpec spec = zoo::conv_pool();
    CHECK(build_network(spec, 5) == build_network(spec, 5));
    CHECK_FALSE(build_network(spec, 5) == build_network(spec, 6));
  }
}

TEST_CASE("shape inference and wiring errors") {
  const NetworkSpec spec = zoo::conv_pool();
  CHECK(spec.activation_shape(0) == Shape{2, 8, 8});
  CHECK(spec.output_dim() == 4);
  CHECK_NOTHROW(spec.validate());

  CHECK_THROWS_AS(make_network({2, 8, 8}, {LayerSpec{LayerKind::Dense, {}, {}, 4}}), StructuralError);
  CHECK_THROWS_AS(NetworkBuilder({4}).conv2d(2, 3), StructuralError);

  const NetworkSpec res = zoo::residual();
  CHECK(res.residual_edges().size() == 2);
}

TEST_CASE("apply_mask") {
  NetworkSpec spec = NetworkBuilder({3}).dense(1).dense(1).build();
  ParamSet p = weights_only(spec, {{1, -2, 3}, {4}});
  p.layers[0].bias.data = {0.5};
  Mask m = Mask::ones(spec);

  SUBCASE("hadamard") {
    m.keep[0] = {1, 0, 1};
    CHECK(apply_mask(spec, p, m).layers[0].weight.data == std::vector<double>{1, 0, 3});
  }
  SUBCASE("all ones is the identity") { CHECK(apply_mask(spec, p, m) == p); }
  SUBCASE("zeroed layer keeps its bias") {
    m.keep[0] = {0, 0, 0};
    const ParamSet q = apply_mask(spec, p, m);
    CHECK(q.layers[0].weight.data == std::vector<double>{0, 0, 0});
    CHECK(q.layers[0].bias.data == std::vector<double>{0.5});
    CHECK(q.layers[1].weight.data == std::vector<double>{4});
  }
  SUBCASE("incongruent mask") {
    m.keep[0].pop_back();
    CHECK_THROWS_AS(apply_mask(spec, p, m), StructuralError);
  }
}

TEST_CASE("max_compression") {
  CHECK(max_compression(zoo::mlp(std::vector<std::size_t>(11, 10))) == 100.0);
  CHECK(max_compression(NetworkBuilder({7}).dense(1).build()) == 7.0);
  CHECK(max_compression(NetworkBuilder({9}).dense(10, false).dense(1, false).build()) == 50.0);
  CHECK_THROWS_AS(max_compression(NetworkBuilder({4}).relu().build()), DomainError);
}

TEST_CASE("layer_param_counts") {
  const NetworkSpec spec = NetworkBuilder({3}).dense(4).relu().dense(2).build();
  Mask m = Mask::ones(spec);
  auto counts = layer_param_counts(spec, m);
  REQUIRE(counts.size() == 2);
  for (const LayerCount& c : counts) CHECK(c.remaining == c.total);

  std::fill(m.keep[2].begin(), m.keep[2].end(), 0);
  m.keep[0] = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  counts = layer_param_counts(spec, m);
  CHECK(counts[0].fraction() == 0.25);
  CHECK(counts[1].remaining == 0);
}
