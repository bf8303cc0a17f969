#pragma once

#include <functional>
#include <vector>

#include "ne/netcore.hpp"
#include "ne/rng.hpp"

namespace ne::testing {

// Random small network with random sparse masks (first/last layers dense).
inline MaskedNetwork random_masked_net(Rng& rng, int max_layers = 3,
                                       int max_width = 5) {
  const int n_layers = 1 + static_cast<int>(rng.below(max_layers));
  std::vector<LayerSpec> spec;
  int in_dim = 1 + static_cast<int>(rng.below(max_width));
  for (int i = 0; i < n_layers; ++i) {
    LayerSpec ls;
    ls.fan_in = in_dim;
    ls.fan_out = 1 + static_cast<int>(rng.below(max_width));
    const auto pick = rng.below(3);
    ls.activation = pick == 0 ? Activation::ReLU
                  : pick == 1 ? Activation::Tanh
                              : Activation::Identity;
    ls.force_dense = (i == 0 || i == n_layers - 1);
    in_dim = ls.fan_out;
    spec.push_back(ls);
  }
  if (n_layers == 1) spec[0].force_dense = true;
  MaskedNetwork net = build_network(spec, rng);
  for (auto& layer : net.layers) {
    // general-position biases keep ReLU pre-activations off the exact kink
    for (int r = 0; r < layer.fan_out(); ++r) layer.bias(r) = rng.uniform(-0.3, 0.3);
    if (layer.force_dense) continue;
    for (int r = 0; r < layer.fan_out(); ++r)
      for (int c = 0; c < layer.fan_in(); ++c)
        layer.mask(r, c) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  return net;
}

// Test loss used by the gradient oracle: L = 0.5 * mean(y^2).
inline double quadratic_loss(const Matrix& outputs) {
  return 0.5 * outputs.array().square().mean();
}

inline Matrix quadratic_loss_grad(const Matrix& outputs) {
  return outputs / static_cast<double>(outputs.size());
}

// Central finite difference of the loss w.r.t. one weight coordinate of the
// masked forward function, taken on the effective weight (the coordinate is
// made active at value eff +- h). Independent of backward(): forward only.
inline double fd_weight_grad(MaskedNetwork& net, const Matrix& batch,
                             std::size_t li, int r, int c, double h = 1e-5) {
  MaskedLayer& layer = net.layers[li];
  const double w0 = layer.weights(r, c);
  const double m0 = layer.mask(r, c);
  const double eff = w0 * m0;
  layer.mask(r, c) = 1.0;
  layer.weights(r, c) = eff + h;
  const double lp = quadratic_loss(forward(net, batch).first);
  layer.weights(r, c) = eff - h;
  const double lm = quadratic_loss(forward(net, batch).first);
  layer.weights(r, c) = w0;
  layer.mask(r, c) = m0;
  return (lp - lm) / (2.0 * h);
}

inline double fd_bias_grad(MaskedNetwork& net, const Matrix& batch,
                           std::size_t li, int r, double h = 1e-5) {
  double& b = net.layers[li].bias(r);
  const double b0 = b;
  b = b0 + h;
  const double lp = quadratic_loss(forward(net, batch).first);
  b = b0 - h;
  const double lm = quadratic_loss(forward(net, batch).first);
  b = b0;
  return (lp - lm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-3});
  return std::abs(a - b) / denom;
}

}  // namespace ne::testing
