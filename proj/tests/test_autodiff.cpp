#include <doctest.h>

#include <cmath>

#include "support.hpp"

using namespace flowprune;
using namespace flowprune::testing;

namespace {

std::vector<double> flatten(const GradientSet& g, const ParamSet& like) {
  std::vector<double> out;
  ParamSet p = like;
  for_each_trainable(p, g, [&](std::size_t, Tensor&, const Tensor& t) {
    out.insert(out.end(), t.data.begin(), t.data.end());
  });
  return out;
}

// Column j of the Hessian by central differences of the analytic gradient.
std::vector<std::vector<double>> dense_hessian(const ParamSet& params, const GradientFn& grad,
                                               double h = 1e-5) {
  std::vector<std::vector<double>> cols;
  ParamSet p = params;
  const GradientSet shape = grad(params);
  for_each_trainable(p, shape, [&](std::size_t, Tensor& t, const Tensor&) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double saved = t[i];
      t[i] = saved + h;
      const std::vector<double> up = flatten(grad(p), p);
      t[i] = saved - h;
      const std::vector<double> down = flatten(grad(p), p);
      t[i] = saved;
      std::vector<double> col(up.size());
      for (std::size_t k = 0; k < up.size(); ++k) col[k] = (up[k] - down[k]) / (2 * h);
      cols.push_back(col);
    }
  });
  return cols;
}

Batch labelled(const NetworkSpec& spec, std::size_t n, std::uint64_t seed) {
  Batch b;
  b.inputs = gaussian(batch_shape(n, spec.input_shape), seed);
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(int(i % spec.output_dim()));
  return b;
}

}  // namespace

TEST_CASE("forward examples") {
  SUBCASE("identity") {
    const NetworkSpec spec = NetworkBuilder({2}).dense(2, false).build();
    const ParamSet p = weights_only(spec, {{1, 0, 0, 1}});
    const ForwardTrace t = forward(spec, p, Mask::ones(spec), Tensor({1, 2}, {1, 2}), Mode::Eval);
    CHECK(t.output().data == std::vector<double>{1, 2});
  }
  SUBCASE("relu") {
    const NetworkSpec spec = NetworkBuilder({2}).relu().build();
    const ForwardTrace t =
        forward(spec, build_network(spec, 0), Mask::ones(spec), Tensor({1, 2}, {-1, 2}), Mode::Eval);
    CHECK(t.output().data == std::vector<double>{0, 2});
  }
  SUBCASE("two-layer product") {
    const NetworkSpec spec = NetworkBuilder({2}).dense(2, false).dense(1, false).build();
    const std::vector<double> w1{1, 2, 3, 4}, w2{1, 1}, x{1, 1};
    const ParamSet p = weights_only(spec, {w1, w2});
    const ForwardTrace t = forward(spec, p, Mask::ones(spec), Tensor({1, 2}, x), Mode::Eval);
    double y = 0.0;
    for (std::size_t i = 0; i < 2; ++i) y += w2[i] * (w1[2 * i] * x[0] + w1[2 * i + 1] * x[1]);
    CHECK(y == 10.0);
    CHECK(t.output().data == std::vector<double>{y});
  }
  SUBCASE("shape mismatch") {
    const NetworkSpec spec = zoo::dense();
    CHECK_THROWS_AS(forward(spec, build_network(spec, 0), Mask::ones(spec), Tensor({1, 5}), Mode::Eval),
                    StructuralError);
  }
  SUBCASE("eval batch-norm with zero variance") {
    const NetworkSpec spec = zoo::batchnorm_net(0.0);
    ParamSet p = build_network(spec, 0);
    for (auto& layer : p.layers) std::fill(layer.running_var.data.begin(), layer.running_var.data.end(), 0.0);
    CHECK_THROWS_AS(forward(spec, p, Mask::ones(spec), gaussian(batch_shape(2, spec.input_shape), 1), Mode::Eval),
                    NumericError);
  }
}

TEST_CASE("backward examples") {
  SUBCASE("linear derivative") {
    const NetworkSpec spec = NetworkBuilder({1}).dense(1, false).build();
    const ParamSet p = weights_only(spec, {{0.7}});
    const Mask m = Mask::ones(spec);
    const ForwardTrace t = forward(spec, p, m, Tensor({1, 1}, {3}), Mode::Eval);
    const GradientSet g = backward(spec, t, p, m, Tensor({1, 1}, {1}));
    CHECK(g.layers[0].weight[0] == 3.0);
  }
  SUBCASE("dead unit") {
    const NetworkSpec spec = NetworkBuilder({1}).dense(1).relu().dense(1).build();
    ParamSet p = weights_only(spec, {{-2}, {3}});
    p.layers[0].bias.data = {0.5};
    const Mask m = Mask::ones(spec);
    const ForwardTrace t = forward(spec, p, m, Tensor({1, 1}, {1}), Mode::Eval);
    const GradientSet g = backward(spec, t, p, m, Tensor({1, 1}, {1}));
    CHECK(g.layers[0].weight[0] == 0.0);
    CHECK(g.layers[0].bias[0] == 0.0);
    CHECK(g.layers[2].weight[0] == 0.0);
  }
}

TEST_CASE("backward against finite differences") {
  const std::vector<std::pair<std::string, NetworkSpec>> nets{
      {"mlp", zoo::mlp({5, 7, 6, 3}, true)},
      {"conv_pool", zoo::conv_pool()},
      {"residual", zoo::residual(6)},
      {"batchnorm", zoo::batchnorm_net()},
  };
  for (const auto& [name, spec] : nets) {
    CAPTURE(name);
    const ParamSet p = random_params(spec, 4);
    const Mask m = Mask::ones(spec);
    const Batch batch = labelled(spec, 6, 9);
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::Mse}) {
      const LossGradient lg = loss_and_grad(spec, p, m, batch, kind, Mode::Train);
      auto loss = [&](const ParamSet& q) { return loss_and_grad(spec, q, m, batch, kind, Mode::Train).loss; };
      CHECK(max_fd_error(p, lg.grad, loss) <= 1e-6);
    }
  }
}

TEST_CASE("losses") {
  SUBCASE("uniform logits give ln C") {
    for (std::size_t c : {2, 10, 100}) {
      Batch b;
      b.inputs = Tensor({1, 1});
      b.labels = {0};
      CHECK(evaluate_loss(Tensor({1, c}, 0.3), b, LossKind::CrossEntropy).value ==
            doctest::Approx(std::log(double(c))).epsilon(1e-14));
    }
  }
  SUBCASE("perfect mse fit") {
    Batch b;
    b.inputs = Tensor({2, 1});
    b.labels = {1, 0};
    const LossValue v = evaluate_loss(Tensor({2, 2}, {0, 1, 1, 0}), b, LossKind::Mse);
    CHECK(v.value == 0.0);
    CHECK(max_abs(v.output_grad.values()) == 0.0);
  }
  SUBCASE("output gradient against finite differences") {
    Batch b;
    b.inputs = Tensor({3, 1});
    b.labels = {2, 0, 1};
    Tensor y = gaussian({3, 4}, 2);
    for (LossKind kind : {LossKind::CrossEntropy, LossKind::Mse}) {
      const LossValue v = evaluate_loss(y, b, kind);
      for (std::size_t i = 0; i < y.size(); ++i) {
        Tensor up = y, down = y;
        up[i] += 1e-5;
        down[i] -= 1e-5;
        const double fd = (evaluate_loss(up, b, kind).value - evaluate_loss(down, b, kind).value) / 2e-5;
        CHECK(rel_err(fd, v.output_grad[i], 1e-4) <= 1e-6);
      }
    }
  }
  SUBCASE("label out of range") {
    Batch b;
    b.inputs = Tensor({1, 1});
    b.labels = {3};
    CHECK_THROWS_AS(evaluate_loss(Tensor({1, 3}), b, LossKind::CrossEntropy), DomainError);
  }
}

TEST_CASE("hessian-vector products") {
  SUBCASE("quadratic is exact") {
    const NetworkSpec spec = NetworkBuilder({2}).dense(1, false).build();
    const ParamSet p = weights_only(spec, {{1, 1}});
    const GradientFn grad = [](const ParamSet& q) {
      GradientSet g = zeros_like(q);
      g.layers[0].weight.data = {2 * q.layers[0].weight[0], 4 * q.layers[0].weight[1]};
      return g;
    };
    GradientSet v = zeros_like(p);
    v.layers[0].weight.data = {1, 1};
    const GradientSet hv = hvp(p, grad, v);
    CHECK(hv.layers[0].weight[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(hv.layers[0].weight[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(inf_norm(hvp(p, grad, zeros_like(p))) == 0.0);
  }
  SUBCASE("dense hessian oracle") {
    const NetworkSpec spec = zoo::mlp({3, 5, 2}, true);  // 32 parameters
    const ParamSet p = random_params(spec, 2, 0.3);
    const Mask m = Mask::ones(spec);
    const Batch batch = labelled(spec, 5, 3);
    for (LossKind kind : {LossKind::Mse, LossKind::CrossEntropy}) {
      const GradientFn grad = [&](const ParamSet& q) {
        return loss_and_grad(spec, q, m, batch, kind, Mode::Train).grad;
      };
      const auto H = dense_hessian(p, grad);
      REQUIRE(H.size() <= 50);
      GradientSet v = zeros_like(p);
      std::mt19937_64 rng(7);
      std::normal_distribution<double> normal;
      for (auto& layer : v.layers) {
        for (double& x : layer.weight.data) x = normal(rng);
        for (double& x : layer.bias.data) x = normal(rng);
      }
      const std::vector<double> vf = flatten(v, p);
      const std::vector<double> got = flatten(hvp(p, grad, v), p);
      std::vector<double> want(vf.size(), 0.0);
      for (std::size_t j = 0; j < vf.size(); ++j)
        for (std::size_t k = 0; k < vf.size(); ++k) want[k] += H[j][k] * vf[j];
      double err = 0.0, scale = 0.0;
      for (std::size_t k = 0; k < want.size(); ++k) {
        err = std::max(err, std::abs(got[k] - want[k]));
        scale = std::max(scale, std::abs(want[k]));
      }
      CHECK(err / scale <= 1e-3);
    }
  }
}
