#include <doctest.h>

#include <cmath>

#include "support.hpp"

using namespace flowprune;
using namespace flowprune::testing;

namespace {

Objective sum_on_gaussian(const NetworkSpec& spec, std::uint64_t seed, Mode mode = Mode::Eval) {
  return Objective::output_sum(gaussian(batch_shape(4, spec.input_shape), seed), mode);
}

}  // namespace

TEST_CASE("neuron conservation") {
  const NetworkSpec chain = NetworkBuilder({1}).dense(1, false).relu().dense(1, false).build();
  const Objective r = Objective::output_sum(Tensor({1, 1}, {1}));

  SUBCASE("one hidden unit") {
    const ConservationReport rep =
        check_neuron_conservation(chain, weights_only(chain, {{2}, {3}}), Mask::ones(chain), r);
    REQUIRE(rep.units.size() == 1);
    CHECK(rep.units[0].s_in == 6.0);
    CHECK(rep.units[0].s_out == 6.0);
    CHECK(rep.pass());
  }
  SUBCASE("dead unit") {
    const ConservationReport rep =
        check_neuron_conservation(chain, weights_only(chain, {{-2}, {3}}), Mask::ones(chain), r);
    CHECK(rep.units[0].s_in == 0.0);
    CHECK(rep.units[0].s_out == 0.0);
    CHECK(rep.pass());
  }
  SUBCASE("every suite network, both objectives, with biases") {
    for (const auto& [name, spec] : zoo::homogeneous_suite()) {
      CAPTURE(name);
      const ParamSet p = random_params(spec, 21);
      for (const Objective& obj : {sum_on_gaussian(spec, 3), Objective::synflow(spec)}) {
        const ConservationReport rep = check_neuron_conservation(spec, p, Mask::ones(spec), obj);
        CHECK(rep.max_relative_residual <= 1e-8);
        CHECK_FALSE(rep.units.empty());
      }
    }
  }
  SUBCASE("holds under a sparse mask") {
    const NetworkSpec spec = zoo::conv_pool();
    const ParamSet p = random_params(spec, 2);
    Mask m = select_mask(score_random(spec, Mask::ones(spec), 4), 0.3);
    CHECK(check_neuron_conservation(spec, p, m, Objective::synflow(spec)).pass());
  }
  SUBCASE("batch-norm is rejected") {
    const NetworkSpec spec = zoo::batchnorm_net();
    CHECK_THROWS_AS(check_neuron_conservation(spec, build_network(spec, 0), Mask::ones(spec),
                                              sum_on_gaussian(spec, 1)),
                    UnsupportedError);
  }
}

TEST_CASE("network conservation") {
  SUBCASE("synflow hand example") {
    const NetworkSpec spec = NetworkBuilder({2}).dense(2, false).dense(1, false).build();
    const ConservationReport rep = check_network_conservation(
        spec, weights_only(spec, {{1, 2, 3, 4}, {1, 1}}), Mask::ones(spec), Objective::synflow(spec));
    CHECK(rep.output_flux == 10.0);
    REQUIRE(rep.cuts.size() == 2);
    for (const CutConservation& c : rep.cuts) CHECK(c.cut_total == 10.0);
  }
  SUBCASE("zero-bias linear endpoints agree") {
    const NetworkSpec spec = zoo::linear(5, 4, 3);
    const ConservationReport rep =
        check_network_conservation(spec, build_network(spec, 1), Mask::ones(spec), sum_on_gaussian(spec, 2));
    CHECK(rel_err(rep.input_flux, rep.output_flux) <= 1e-12);
    CHECK(rep.bias_total == 0.0);
  }
  SUBCASE("five-layer mlp with biases") {
    const NetworkSpec spec = zoo::mlp({6, 9, 8, 7, 5, 3}, true);
    const ConservationReport rep =
        check_network_conservation(spec, random_params(spec, 5), Mask::ones(spec), sum_on_gaussian(spec, 6));
    REQUIRE(rep.cuts.size() == 5);
    CHECK(rep.bias_total != 0.0);
    for (const CutConservation& c : rep.cuts) {
      CHECK(c.relative_to_output <= 1e-8);
      CHECK(c.relative_to_input <= 1e-8);
    }
  }
  SUBCASE("suite") {
    for (const auto& [name, spec] : zoo::homogeneous_suite()) {
      CAPTURE(name);
      const ParamSet p = random_params(spec, 8);
      for (const Objective& obj : {sum_on_gaussian(spec, 9), Objective::synflow(spec)})
        CHECK(check_network_conservation(spec, p, Mask::ones(spec), obj).max_relative_residual <= 1e-8);
    }
  }
}

TEST_CASE("score-size law") {
  SUBCASE("sizes 100 and 400") {
    const NetworkSpec spec = NetworkBuilder({10}).dense(10, false).relu().dense(40, false).build();
    const ParamSet p = build_network(spec, 3);
    const ScoreMap s = saliency(spec, p, Mask::ones(spec), sum_on_gaussian(spec, 4));
    const ScoreSizeLaw law = layer_score_size_law(spec, s);
    REQUIRE(law.layers.size() == 2);
    CHECK(law.layers[0].average / law.layers[1].average == doctest::Approx(4.0).epsilon(1e-10));
    CHECK(law.pass());
  }
  SUBCASE("synflow hand example") {
    const NetworkSpec spec = NetworkBuilder({2}).dense(2, false).dense(1, false).build();
    const ScoreMap s = score_synflow(spec, weights_only(spec, {{1, 2, 3, 4}, {1, 1}}), Mask::ones(spec));
    const ScoreSizeLaw law = layer_score_size_law(spec, s, "synflow");
    CHECK(law.layers[0].average == 2.5);
    CHECK(law.layers[1].average == 5.0);
    CHECK(law.max_relative_spread == 0.0);
  }
  SUBCASE("single layer") {
    const NetworkSpec spec = NetworkBuilder({3}).dense(2, false).build();
    const ScoreMap s = score_magnitude(spec, build_network(spec, 0), Mask::ones(spec));
    CHECK(layer_score_size_law(spec, s).max_relative_spread == 0.0);
  }
}

TEST_CASE("gradient-flow conservation") {
  const NetworkSpec scalar = zoo::linear(1, 1, 1);
  Batch data;
  data.inputs = Tensor({2, 1}, {1.0, 0.5});
  data.labels = {0, 0};
  data.targets = Tensor({2, 1}, {2.0, 2.0});  // w₂w₁ heads for 2.4
  const ParamSet p = weights_only(scalar, {{0.3}, {1.2}});

  SUBCASE("lr = 0 keeps every series constant") {
    const FlowConservationTrace t = gradient_flow_conservation(scalar, p, data, 50, 0.0);
    CHECK(t.drift() == 0.0);
    for (const auto& series : t.sq_norms)
      for (double v : series) CHECK(v == series.front());
  }
  SUBCASE("scalar drift is first order in the step") {
    const FlowConservationTrace t = gradient_flow_conservation(scalar, p, data, 5000, 1e-3, 500);
    const double w1 = t.sq_norms[0].front(), w1_end = t.sq_norms[0].back();
    CHECK(std::abs(w1_end - w1) > 0.1);  // the weights actually moved
    CHECK(t.drift() < 1e-2 * std::abs(w1_end - w1));
    const FlowScalingCheck c = check_flow_drift_scaling(scalar, p, data, 1e-3, 5000);
    CHECK(c.ratio == doctest::Approx(2.0).epsilon(0.1));
  }
  SUBCASE("two-layer linear net halving") {
    const NetworkSpec spec = zoo::linear(8, 8, 4);
    const Batch batch = gen_synthetic(4, 8, 40, 0).train;
    const FlowScalingCheck c = check_flow_drift_scaling(spec, build_network(spec, 0), batch, 1e-3, 1000);
    CHECK(c.pass());
  }
}

TEST_CASE("batch-norm law") {
  const NetworkSpec spec = zoo::batchnorm_net();
  const ParamSet p = random_params(spec, 4);
  const Mask m = Mask::ones(spec);

  SUBCASE("train mode sums vanish") {
    for (std::uint64_t seed : {1, 2, 3}) {
      const BatchNormReport r = bn_saliency_zero(spec, p, m, sum_on_gaussian(spec, seed, Mode::Train));
      CHECK(r.pass());
      CHECK_FALSE(r.neurons.empty());
    }
    const NetworkSpec exact = zoo::batchnorm_net(0.0);
    const BatchNormReport r =
        bn_saliency_zero(exact, random_params(exact, 4), Mask::ones(exact), sum_on_gaussian(exact, 1, Mode::Train));
    for (const BatchNormNeuron& n : r.neurons) CHECK(std::abs(n.saliency_sum) <= 1e-8 * std::max(n.scale, 1e-30));
  }
  SUBCASE("eval mode with unit buffers does not vanish") {
    const BatchNormReport r = bn_saliency_zero(spec, p, m, sum_on_gaussian(spec, 1, Mode::Eval));
    double largest = 0.0;
    for (const BatchNormNeuron& n : r.neurons) largest = std::max(largest, std::abs(n.saliency_sum) / n.scale);
    CHECK(largest > 1e-3);
  }
  SUBCASE("scaling incoming parameters leaves train-mode output unchanged") {
    const NetworkSpec exact = zoo::batchnorm_net(0.0);
    const ParamSet q = random_params(exact, 4);
    ParamSet scaled = q;
    for (std::size_t l = 0; l + 1 < exact.layers.size(); ++l)
      if (exact.layers[l + 1].kind == LayerKind::BatchNorm) {
        for (double& w : scaled.layers[l].weight.data) w *= 3.7;
        for (double& b : scaled.layers[l].bias.data) b *= 3.7;
      }
    const Tensor x = gaussian(batch_shape(6, exact.input_shape), 7);
    const Tensor a = forward(exact, q, Mask::ones(exact), x, Mode::Train).output();
    const Tensor b = forward(exact, scaled, Mask::ones(exact), x, Mode::Train).output();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(rel_err(a[i], b[i], 1e-12) <= 1e-9);
  }
  SUBCASE("synflow in train mode is negligible next to eval mode") {
    const ParamSet q = build_network(spec, 4);
    const ObjectiveEvaluation ev = evaluate_objective(spec, q, m, Objective::synflow(spec));
    const ObjectiveEvaluation tr = evaluate_objective(spec, q, m, Objective::synflow(spec, Mode::Train));
    CHECK(ev.value > 0.0);
    CHECK(std::abs(tr.value) <= 1e-8 * ev.value);
    SynflowOptions train;
    train.mode = Mode::Train;
    const ScoreMap se = score_synflow(spec, q, m);
    const ScoreMap st = score_synflow(spec, q, m, train);
    for (std::size_t l : spec.prunable_layers()) {
      CHECK(se.layer_total(l) > 0.0);
      CHECK(std::abs(st.layer_total(l)) <= 1e-8 * se.layer_total(l));
    }
  }
}
