#include "flowprune/zoo.hpp"

#include <stdexcept>

namespace flowprune::zoo {

NetworkSpec dense(std::size_t in, bool bias) {
  return NetworkBuilder({in}).dense(16, bias).relu().dense(8, bias).relu().dense(4, bias).build();
}

NetworkSpec dense_bias(std::size_t in) { return dense(in, true); }

NetworkSpec conv(bool bias) {
  return NetworkBuilder({2, 6, 6})
      .conv2d(4, 3, 1, 1, bias)
      .relu()
      .conv2d(6, 3, 1, 0, bias)
      .relu()
      .flatten()
      .dense(5, bias)
      .build();
}

NetworkSpec conv_pool(bool bias) {
  return NetworkBuilder({2, 8, 8})
      .conv2d(4, 3, 1, 1, bias)
      .relu()
      .maxpool(2)
      .conv2d(6, 3, 1, 1, bias)
      .relu()
      .maxpool(2)
      .flatten()
      .dense(8, bias)
      .relu()
      .dense(4, bias)
      .build();
}

NetworkSpec residual(std::size_t in) {
  NetworkBuilder b({in});
  b.dense(10).relu();
  const std::size_t skip = b.current_activation();
  b.dense(10).relu().dense(10).residual_add(skip).relu();
  const std::size_t skip2 = b.current_activation();
  b.dense(10).relu().residual_add(skip2).dense(4);
  return b.build();
}

NetworkSpec imbalance(std::size_t in, std::size_t hidden, std::size_t classes) {
  return NetworkBuilder({in}).dense(hidden, false).relu().dense(classes, false).build();
}

NetworkSpec toy_vgg(std::size_t classes) {
  return NetworkBuilder({1, 8, 8})
      .conv2d(8, 3, 1, 1)
      .batchnorm()
      .relu()
      .conv2d(8, 3, 1, 1)
      .batchnorm()
      .relu()
      .maxpool(2)
      .conv2d(16, 3, 1, 1)
      .batchnorm()
      .relu()
      .conv2d(16, 3, 1, 1)
      .batchnorm()
      .relu()
      .maxpool(2)
      .flatten()
      .dense(32)
      .batchnorm()
      .relu()
      .dense(classes)
      .build();
}

NetworkSpec batchnorm_net(double eps) {
  return NetworkBuilder({2, 5, 5})
      .conv2d(4, 3, 1, 1)
      .batchnorm(eps)
      .relu()
      .flatten()
      .dense(6)
      .batchnorm(eps)
      .relu()
      .dense(3)
      .build();
}

NetworkSpec linear(std::size_t in, std::size_t hidden, std::size_t out) {
  return NetworkBuilder({in}).dense(hidden, false).dense(out, false).build();
}

NetworkSpec mlp(const std::vector<std::size_t>& widths, bool bias) {
  if (widths.size() < 2) throw StructuralError("an MLP needs an input width and at least one layer");
  NetworkBuilder b({widths.front()});
  for (std::size_t i = 1; i < widths.size(); ++i) {
    b.dense(widths[i], bias);
    if (i + 1 < widths.size()) b.relu();
  }
  return b.build();
}

std::vector<std::pair<std::string, NetworkSpec>> homogeneous_suite() {
  return {{"dense", dense()},
          {"dense_bias", dense_bias()},
          {"conv", conv()},
          {"conv_pool", conv_pool()},
          {"residual", residual()}};
}

std::vector<std::string> names() {
  return {"dense", "dense_bias", "conv", "conv_pool", "residual", "imbalance", "toy_vgg", "batchnorm"};
}

NetworkSpec by_name(const std::string& name) {
  if (name == "dense") return dense();
  if (name == "dense_bias") return dense_bias();
  if (name == "conv") return conv();
  if (name == "conv_pool") return conv_pool();
  if (name == "residual") return residual();
  if (name == "imbalance") return imbalance();
  if (name == "toy_vgg") return toy_vgg();
  if (name == "batchnorm") return batchnorm_net();
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

}  // namespace flowprune::zoo
