#pragma once

// Small built-in architectures used by the tests, the CLI and example configs.

#include <string>
#include <vector>

#include "flowprune/netgraph.hpp"

namespace flowprune::zoo {

NetworkSpec dense(std::size_t in = 12, bool bias = false);
NetworkSpec dense_bias(std::size_t in = 12);
NetworkSpec conv(bool bias = false);
NetworkSpec conv_pool(bool bias = true);
NetworkSpec residual(std::size_t in = 12);
/// Two dense layers of sizes in·hidden and hidden·classes, e.g. 1000·10 vs 10·10.
NetworkSpec imbalance(std::size_t in = 1000, std::size_t hidden = 10, std::size_t classes = 10);
/// 4 conv + 2 dense layers on (1, 8, 8) inputs, batch-norm after each hidden layer.
NetworkSpec toy_vgg(std::size_t classes = 10);
NetworkSpec batchnorm_net(double eps = 1e-5);
/// Bias-free linear chain in → hidden → out (no activation).
NetworkSpec linear(std::size_t in, std::size_t hidden, std::size_t out);
/// Bias-free dense chain with ReLU between layers.
NetworkSpec mlp(const std::vector<std::size_t>& widths, bool bias = false);

/// The homogeneous suite the conservation checks run over.
std::vector<std::pair<std::string, NetworkSpec>> homogeneous_suite();

/// Looks up one of the names above ("dense", "toy_vgg", ...).
NetworkSpec by_name(const std::string& name);
std::vector<std::string> names();

}  // namespace flowprune::zoo
