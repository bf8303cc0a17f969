#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "ne/rng.hpp"

namespace ne {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU, Tanh, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
  }
  return "?";
}

struct LayerSpec {
  int fan_in = 0;
  int fan_out = 0;
  Activation activation = Activation::Identity;
  bool force_dense = false;
};

/// One affine layer with a binary connection mask. The forward pass uses
/// weights ⊙ mask; stored values at mask=0 coordinates are placeholders and
/// never influence computation. Biases are always active.
struct MaskedLayer {
  Matrix weights;     // fan_out x fan_in
  Vector bias;        // fan_out
  Matrix mask;        // fan_out x fan_in, entries exactly 0.0 or 1.0
  double clip_bound = 0.0;  // s_l = 1/sqrt(fan_in)
  Activation activation = Activation::Identity;
  bool force_dense = false;

  int fan_in() const { return static_cast<int>(weights.cols()); }
  int fan_out() const { return static_cast<int>(weights.rows()); }
  long size() const { return static_cast<long>(weights.size()); }
  long active_count() const { return static_cast<long>(mask.sum()); }

  Matrix effective_weights() const { return weights.cwiseProduct(mask); }
};

struct MaskedNetwork {
  std::vector<LayerSpec> spec;
  std::vector<MaskedLayer> layers;

  int input_dim() const { return layers.front().fan_in(); }
  int output_dim() const { return layers.back().fan_out(); }
  std::size_t layer_count() const { return layers.size(); }

  long active_connections() const {
    long n = 0;
    for (const auto& l : layers) n += l.active_count();
    return n;
  }
  long total_connections() const {
    long n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
  double density() const {
    const long total = total_connections();
    return total == 0 ? 0.0 : static_cast<double>(active_connections()) / total;
  }
};

/// Batch intermediates from forward(); rows are batch samples.
struct ForwardCache {
  Matrix input;              // B x fan_in_0
  std::vector<Matrix> pre;   // B x fan_out_l
  std::vector<Matrix> post;  // B x fan_out_l
};

/// Dense parameter gradients: every weight coordinate carries its gradient
/// dL/dw_ij = delta_i * x_j regardless of mask state. Activation gradients
/// are propagated through the masked graph only.
struct FullGradients {
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  Matrix input_grad;  // B x fan_in_0, dL/d(input)
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Per-network Adam moments. Moments of mask=0 coordinates stay exactly zero.
struct AdamState {
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
  long step = 0;
  AdamHyper hyper;
};

inline void validate_spec(const std::vector<LayerSpec>& spec) {
  if (spec.empty()) throw std::invalid_argument("network spec is empty");
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].fan_in < 1 || spec[i].fan_out < 1)
      throw std::invalid_argument("layer " + std::to_string(i) +
                                  ": fan_in and fan_out must be >= 1");
    if (i + 1 < spec.size() && spec[i].fan_out != spec[i + 1].fan_in)
      throw std::invalid_argument(
          "dimension mismatch between layer " + std::to_string(i) + " (fan_out " +
          std::to_string(spec[i].fan_out) + ") and layer " + std::to_string(i + 1) +
          " (fan_in " + std::to_string(spec[i + 1].fan_in) + ")");
  }
  if (!spec.front().force_dense || !spec.back().force_dense)
    throw std::invalid_argument("first and last layers must be force_dense");
}

/// Weights i.i.d. uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero,
/// masks all-ones (the topology module overwrites them), s_l = 1/sqrt(fan_in).
inline MaskedNetwork build_network(const std::vector<LayerSpec>& spec, Rng& rng) {
  validate_spec(spec);
  MaskedNetwork net;
  net.spec = spec;
  net.layers.reserve(spec.size());
  for (const auto& ls : spec) {
    MaskedLayer layer;
    const double s = 1.0 / std::sqrt(static_cast<double>(ls.fan_in));
    layer.weights = Matrix::NullaryExpr(
        ls.fan_out, ls.fan_in, [&]() { return rng.uniform(-s, s); });
    layer.bias = Vector::Zero(ls.fan_out);
    layer.mask = Matrix::Ones(ls.fan_out, ls.fan_in);
    layer.clip_bound = s;
    layer.activation = ls.activation;
    layer.force_dense = ls.force_dense;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline MaskedNetwork build_network(const std::vector<LayerSpec>& spec,
                                   std::uint64_t seed) {
  Rng rng(seed);
  return build_network(spec, rng);
}

inline Matrix apply_activation(Activation a, const Matrix& pre) {
  switch (a) {
    case Activation::ReLU: return pre.cwiseMax(0.0);
    case Activation::Tanh: return pre.array().tanh().matrix();
    case Activation::Identity: return pre;
  }
  return pre;
}

/// Each layer computes (weights ⊙ mask)·x + bias, then the activation.
/// Returns outputs together with all cached intermediates.
inline std::pair<Matrix, ForwardCache> forward(const MaskedNetwork& net,
                                               const Matrix& batch) {
  if (batch.cols() != net.input_dim())
    throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols()) +
                                " does not match input dim " +
                                std::to_string(net.input_dim()));
  ForwardCache cache;
  cache.input = batch;
  cache.pre.reserve(net.layer_count());
  cache.post.reserve(net.layer_count());
  const Matrix* x = &cache.input;
  for (const auto& layer : net.layers) {
    Matrix pre = (*x) * layer.effective_weights().transpose();
    pre.rowwise() += layer.bias.transpose();
    cache.pre.push_back(std::move(pre));
    cache.post.push_back(apply_activation(layer.activation, cache.pre.back()));
    x = &cache.post.back();
  }
  return {cache.post.back(), std::move(cache)};
}

inline Matrix activation_grad(Activation a, const Matrix& pre, const Matrix& post) {
  switch (a) {
    case Activation::ReLU:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::Tanh:
      return (1.0 - post.array().square()).matrix();
    case Activation::Identity:
      return Matrix::Ones(pre.rows(), pre.cols());
  }
  return Matrix::Ones(pre.rows(), pre.cols());
}

/// Backpropagation mirroring the masked forward graph for activation
/// gradients while recording dense parameter gradients (mask ignored on the
/// parameter side). output_grad is dL/d(output), one row per batch sample.
inline FullGradients backward(const MaskedNetwork& net, const ForwardCache& cache,
                              const Matrix& output_grad) {
  const auto n_layers = net.layer_count();
  if (cache.post.size() != n_layers || cache.pre.size() != n_layers)
    throw std::invalid_argument("backward: cache does not match network");
  if (output_grad.rows() != cache.input.rows() ||
      output_grad.cols() != net.output_dim())
    throw std::invalid_argument("backward: output_grad shape mismatch (stale cache?)");

  FullGradients grads;
  grads.weight_grads.resize(n_layers);
  grads.bias_grads.resize(n_layers);

  // delta = dL/d(pre-activation) of the current layer
  Matrix delta = output_grad.cwiseProduct(activation_grad(
      net.layers.back().activation, cache.pre.back(), cache.post.back()));
  for (std::size_t li = n_layers; li-- > 0;) {
    const MaskedLayer& layer = net.layers[li];
    const Matrix& x = (li == 0) ? cache.input : cache.post[li - 1];
    grads.weight_grads[li] = delta.transpose() * x;  // dense by contract
    grads.bias_grads[li] = delta.colwise().sum().transpose();
    Matrix x_grad = delta * layer.effective_weights();
    if (li == 0) {
      grads.input_grad = std::move(x_grad);
    } else {
      delta = x_grad.cwiseProduct(activation_grad(
          net.layers[li - 1].activation, cache.pre[li - 1], cache.post[li - 1]));
    }
  }
  return grads;
}

/// Clamp every active weight into [-kappa*s_l, +kappa*s_l]. Stored values at
/// mask=0 coordinates and biases are left untouched.
inline void clip_weights(MaskedLayer& layer, double kappa) {
  if (kappa <= 0.0) throw std::invalid_argument("clip_weights: kappa must be > 0");
  const double bound = kappa * layer.clip_bound;
  const Matrix clamped = layer.weights.cwiseMax(-bound).cwiseMin(bound);
  layer.weights =
      layer.mask.cwiseProduct(clamped) +
      (Matrix::Ones(layer.mask.rows(), layer.mask.cols()) - layer.mask)
          .cwiseProduct(layer.weights);
}

inline AdamState make_adam_state(const MaskedNetwork& net, const AdamHyper& hyper) {
  AdamState st;
  st.hyper = hyper;
  st.m_w.reserve(net.layer_count());
  for (const auto& l : net.layers) {
    st.m_w.push_back(Matrix::Zero(l.fan_out(), l.fan_in()));
    st.v_w.push_back(Matrix::Zero(l.fan_out(), l.fan_in()));
    st.m_b.push_back(Vector::Zero(l.fan_out()));
    st.v_b.push_back(Vector::Zero(l.fan_out()));
  }
  return st;
}

/// One Adam step restricted to active coordinates; biases always update.
/// Masked-out coordinates keep their stored weights and zero moments.
/// Every layer is clipped afterwards.
inline void adam_update(MaskedNetwork& net, const FullGradients& grads,
                        AdamState& st, double kappa) {
  if (grads.weight_grads.size() != net.layer_count() ||
      st.m_w.size() != net.layer_count())
    throw std::invalid_argument("adam_update: shape mismatch");
  st.step += 1;
  const AdamHyper& h = st.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    MaskedLayer& layer = net.layers[li];
    const Matrix g = grads.weight_grads[li].cwiseProduct(layer.mask);
    st.m_w[li] = h.beta1 * st.m_w[li] + (1.0 - h.beta1) * g;
    st.v_w[li] = h.beta2 * st.v_w[li] + (1.0 - h.beta2) * g.cwiseProduct(g);
    const Matrix step_w =
        (st.m_w[li] / bc1).cwiseQuotient(((st.v_w[li] / bc2).cwiseSqrt().array() + h.eps).matrix());
    layer.weights -= h.lr * step_w.cwiseProduct(layer.mask);

    const Vector& gb = grads.bias_grads[li];
    st.m_b[li] = h.beta1 * st.m_b[li] + (1.0 - h.beta1) * gb;
    st.v_b[li] = h.beta2 * st.v_b[li] + (1.0 - h.beta2) * gb.cwiseProduct(gb);
    layer.bias -= h.lr * (st.m_b[li] / bc1)
                      .cwiseQuotient(((st.v_b[li] / bc2).cwiseSqrt().array() + h.eps).matrix());
    clip_weights(layer, kappa);
  }
}

/// target <- (1-rho)*target + rho*online on active coordinates; biases always.
/// rho = 1 copies online exactly; identical nets are an exact fixed point.
inline void polyak(MaskedNetwork& target, const MaskedNetwork& online, double rho) {
  if (target.layer_count() != online.layer_count())
    throw std::invalid_argument("polyak: spec mismatch");
  if (!(rho > 0.0 && rho <= 1.0))
    throw std::invalid_argument("polyak: rho must be in (0, 1]");
  for (std::size_t li = 0; li < target.layer_count(); ++li) {
    MaskedLayer& t = target.layers[li];
    const MaskedLayer& o = online.layers[li];
    if (t.fan_in() != o.fan_in() || t.fan_out() != o.fan_out())
      throw std::invalid_argument("polyak: spec mismatch at layer " + std::to_string(li));
    if (rho == 1.0) {
      t.weights = o.mask.cwiseProduct(o.weights) +
                  (Matrix::Ones(o.mask.rows(), o.mask.cols()) - o.mask)
                      .cwiseProduct(t.weights);
      t.bias = o.bias;
    } else {
      // additive form keeps identical nets bit-exactly unchanged
      t.weights += rho * (o.weights - t.weights).cwiseProduct(o.mask);
      t.bias += rho * (o.bias - t.bias);
    }
  }
}

}  // namespace ne
