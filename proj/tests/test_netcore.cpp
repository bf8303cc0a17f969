#include "ne/netcore.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace ne;
using ne::testing::fd_bias_grad;
using ne::testing::fd_weight_grad;
using ne::testing::quadratic_loss_grad;
using ne::testing::random_masked_net;
using ne::testing::rel_err;

namespace {

MaskedNetwork single_layer(const Matrix& w, const Matrix& mask, const Vector& b,
                           Activation act) {
  MaskedNetwork net;
  MaskedLayer layer;
  layer.weights = w;
  layer.mask = mask;
  layer.bias = b;
  layer.activation = act;
  layer.force_dense = false;
  layer.clip_bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
  net.layers.push_back(layer);
  net.spec.push_back({static_cast<int>(w.cols()), static_cast<int>(w.rows()), act, false});
  return net;
}

}  // namespace

TEST(BuildNetwork, CountsAndInit) {
  std::vector<LayerSpec> spec{{2, 3, Activation::ReLU, true},
                              {3, 1, Activation::Identity, true}};
  MaskedNetwork net = build_network(spec, 0);
  ASSERT_EQ(net.layer_count(), 2u);
  EXPECT_EQ(net.total_connections(), 9);  // 3x2 + 1x3 weights
  EXPECT_EQ(net.layers[0].bias.size() + net.layers[1].bias.size(), 4);
  EXPECT_EQ(net.active_connections(), 9);  // masks all ones
  for (const auto& l : net.layers) {
    EXPECT_TRUE((l.mask.array() == 1.0).all());
    EXPECT_TRUE((l.bias.array() == 0.0).all());
    const double s = 1.0 / std::sqrt(static_cast<double>(l.fan_in()));
    EXPECT_DOUBLE_EQ(l.clip_bound, s);
    EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), s);
  }
}

TEST(BuildNetwork, ClipBoundUsesFanIn) {
  std::vector<LayerSpec> spec{{4, 2, Activation::ReLU, true},
                              {2, 1, Activation::Identity, true}};
  MaskedNetwork net = build_network(spec, 1);
  EXPECT_DOUBLE_EQ(net.layers[0].clip_bound, 0.5);  // 1/sqrt(4)
}

TEST(BuildNetwork, DimensionMismatchThrows) {
  std::vector<LayerSpec> spec{{2, 3, Activation::ReLU, true},
                              {4, 1, Activation::Identity, true}};
  EXPECT_THROW(build_network(spec, 0), std::invalid_argument);
  EXPECT_THROW(build_network({}, 0), std::invalid_argument);
  std::vector<LayerSpec> sparse_ends{{2, 3, Activation::ReLU, false},
                                     {3, 1, Activation::Identity, true}};
  EXPECT_THROW(build_network(sparse_ends, 0), std::invalid_argument);
}

TEST(Forward, MaskedColumnRemoved) {
  Matrix w(1, 2);
  w << 1, 2;
  Matrix m(1, 2);
  m << 1, 0;
  Vector b = Vector::Zero(1);
  MaskedNetwork net = single_layer(w, m, b, Activation::Identity);
  Matrix x(1, 2);
  x << 3, 5;
  const auto [y, cache] = forward(net, x);
  EXPECT_DOUBLE_EQ(y(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(cache.pre[0](0, 0), 3.0);
}

TEST(Forward, Activations) {
  Matrix w = Matrix::Identity(2, 2);
  Matrix m = Matrix::Ones(2, 2);
  MaskedNetwork relu = single_layer(w, m, Vector::Zero(2), Activation::ReLU);
  Matrix x(1, 2);
  x << -1, 2;
  EXPECT_DOUBLE_EQ(forward(relu, x).first(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(forward(relu, x).first(0, 1), 2.0);

  Matrix w1(1, 1), m1(1, 1);
  w1 << 1;
  m1 << 1;
  MaskedNetwork tanh_net = single_layer(w1, m1, Vector::Zero(1), Activation::Tanh);
  Matrix x0(1, 1);
  x0 << 0;
  EXPECT_DOUBLE_EQ(forward(tanh_net, x0).first(0, 0), 0.0);
}

TEST(Forward, ShapeMismatchThrows) {
  MaskedNetwork net = build_network(
      {{2, 3, Activation::ReLU, true}, {3, 1, Activation::Identity, true}}, 0);
  Matrix bad(1, 3);
  bad.setZero();
  EXPECT_THROW(forward(net, bad), std::invalid_argument);
}

TEST(Backward, MaskedCoordinateStillReportsGradient) {
  // y = w*x with w masked out; L = y so dL/dw = x = 2 reported despite mask=0.
  Matrix w(1, 1), m(1, 1);
  w << 5;  // stored value, inert
  m << 0;
  MaskedNetwork net = single_layer(w, m, Vector::Zero(1), Activation::Identity);
  Matrix x(1, 1);
  x << 2;
  const auto [y, cache] = forward(net, x);
  EXPECT_DOUBLE_EQ(y(0, 0), 0.0);
  Matrix og(1, 1);
  og << 1;  // L = y
  FullGradients g = backward(net, cache, og);
  EXPECT_DOUBLE_EQ(g.weight_grads[0](0, 0), 2.0);
}

TEST(Backward, ZeroOutputGradGivesZeroGradients) {
  ne::Rng rng(11);
  MaskedNetwork net = random_masked_net(rng);
  Matrix batch = Matrix::NullaryExpr(4, net.input_dim(),
                                     [&]() { return rng.uniform(-1, 1); });
  const auto [y, cache] = forward(net, batch);
  FullGradients g = backward(net, cache, Matrix::Zero(y.rows(), y.cols()));
  for (std::size_t li = 0; li < net.layer_count(); ++li) {
    EXPECT_EQ(g.weight_grads[li].cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(g.bias_grads[li].cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(g.input_grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, StaleCacheThrows) {
  MaskedNetwork net = build_network(
      {{2, 3, Activation::ReLU, true}, {3, 1, Activation::Identity, true}}, 0);
  Matrix batch = Matrix::Ones(4, 2);
  const auto [y, cache] = forward(net, batch);
  Matrix og = Matrix::Ones(3, 1);  // wrong batch size
  EXPECT_THROW(backward(net, cache, og), std::invalid_argument);
}

TEST(Backward, MatchesFiniteDifferences) {
  // Spot version of acceptance criterion 1 (50-network sweep lives there).
  ne::Rng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    MaskedNetwork net = random_masked_net(rng);
    Matrix batch = Matrix::NullaryExpr(4, net.input_dim(),
                                       [&]() { return rng.uniform(-1.5, 1.5); });
    const auto [y, cache] = forward(net, batch);
    FullGradients g = backward(net, cache, quadratic_loss_grad(y));
    for (std::size_t li = 0; li < net.layer_count(); ++li) {
      for (int r = 0; r < net.layers[li].fan_out(); ++r) {
        for (int c = 0; c < net.layers[li].fan_in(); ++c) {
          const double fd = fd_weight_grad(net, batch, li, r, c);
          ASSERT_LE(rel_err(g.weight_grads[li](r, c), fd), 1e-4)
              << "trial " << trial << " layer " << li << " (" << r << "," << c << ")";
        }
        const double fdb = fd_bias_grad(net, batch, li, r);
        ASSERT_LE(rel_err(g.bias_grads[li](r), fdb), 1e-4);
      }
    }
  }
}

TEST(Backward, InputGradMatchesFiniteDifferences) {
  ne::Rng rng(77);
  MaskedNetwork net = random_masked_net(rng);
  Matrix batch = Matrix::NullaryExpr(3, net.input_dim(),
                                     [&]() { return rng.uniform(-1, 1); });
  const auto [y, cache] = forward(net, batch);
  FullGradients g = backward(net, cache, quadratic_loss_grad(y));
  const double h = 1e-5;
  for (int r = 0; r < batch.rows(); ++r) {
    for (int c = 0; c < batch.cols(); ++c) {
      Matrix bp = batch, bm = batch;
      bp(r, c) += h;
      bm(r, c) -= h;
      const double fd = (ne::testing::quadratic_loss(forward(net, bp).first) -
                         ne::testing::quadratic_loss(forward(net, bm).first)) /
                        (2 * h);
      ASSERT_LE(rel_err(g.input_grad(r, c), fd), 1e-4);
    }
  }
}

TEST(Adam, ZeroGradLeavesWeightsUnchanged) {
  MaskedNetwork net = build_network(
      {{2, 3, Activation::ReLU, true}, {3, 1, Activation::Identity, true}}, 3);
  AdamState st = make_adam_state(net, {});
  const Matrix w0 = net.layers[0].weights;
  FullGradients g;
  for (const auto& l : net.layers) {
    g.weight_grads.push_back(Matrix::Zero(l.fan_out(), l.fan_in()));
    g.bias_grads.push_back(Vector::Zero(l.fan_out()));
  }
  adam_update(net, g, st, 3.0);
  EXPECT_TRUE(net.layers[0].weights.isApprox(w0, 0.0));
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, MaskedCoordinateIgnoresHugeGradient) {
  Matrix w(1, 2), m(1, 2);
  w << 0.1, 0.2;
  m << 1, 0;
  MaskedNetwork net = single_layer(w, m, Vector::Zero(1), Activation::Identity);
  AdamState st = make_adam_state(net, {.lr = 0.1});
  FullGradients g;
  g.weight_grads.push_back((Matrix(1, 2) << 0.0, 1e9).finished());
  g.bias_grads.push_back(Vector::Zero(1));
  adam_update(net, g, st, 3.0);
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 1), 0.2);  // untouched
  EXPECT_DOUBLE_EQ(st.m_w[0](0, 1), 0.0);              // moments stay zero
  EXPECT_DOUBLE_EQ(st.v_w[0](0, 1), 0.0);
}

TEST(Adam, FirstStepDeltaIsLearningRate) {
  Matrix w(1, 1), m(1, 1);
  w << 0.0;
  m << 1;
  MaskedNetwork net = single_layer(w, m, Vector::Zero(1), Activation::Identity);
  net.layers[0].clip_bound = 100.0;  // keep clipping out of the way
  AdamState st = make_adam_state(net, {.lr = 0.1, .beta1 = 0.9, .beta2 = 0.999});
  FullGradients g;
  g.weight_grads.push_back((Matrix(1, 1) << 1.0).finished());
  g.bias_grads.push_back(Vector::Zero(1));
  adam_update(net, g, st, 3.0);
  // bias-corrected first step has magnitude lr/(1+eps') ~ lr
  EXPECT_NEAR(net.layers[0].weights(0, 0), -0.1, 1e-6);
}

TEST(Clip, ClampsActiveOnly) {
  Matrix w(1, 2), m(1, 2);
  w << 2.0, 9.0;
  m << 1, 0;
  MaskedNetwork net = single_layer(w, m, Vector::Zero(1), Activation::Identity);
  net.layers[0].clip_bound = 0.5;
  clip_weights(net.layers[0], 3.0);
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 0), 1.5);  // clamp to kappa*s
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 1), 9.0);  // masked stored value kept

  net.layers[0].weights(0, 0) = -0.1;
  clip_weights(net.layers[0], 3.0);
  EXPECT_DOUBLE_EQ(net.layers[0].weights(0, 0), -0.1);  // inside range
}

TEST(Clip, InvariantHoldsAfterAdamUpdates) {
  ne::Rng rng(5);
  MaskedNetwork net = random_masked_net(rng);
  AdamState st = make_adam_state(net, {.lr = 0.05});
  const double kappa = 3.0;
  for (int it = 0; it < 50; ++it) {
    Matrix batch = Matrix::NullaryExpr(4, net.input_dim(),
                                       [&]() { return rng.uniform(-2, 2); });
    const auto [y, cache] = forward(net, batch);
    FullGradients g = backward(net, cache, quadratic_loss_grad(y));
    adam_update(net, g, st, kappa);
    for (const auto& l : net.layers) {
      const double bound = kappa * l.clip_bound + 1e-15;
      const double max_active =
          l.weights.cwiseProduct(l.mask).cwiseAbs().maxCoeff();
      ASSERT_LE(max_active, bound);
    }
  }
}

TEST(Polyak, RhoOneCopiesOnline) {
  ne::Rng rng(8);
  MaskedNetwork online = random_masked_net(rng);
  MaskedNetwork target = online;
  for (auto& l : target.layers) l.weights.setZero();
  polyak(target, online, 1.0);
  for (std::size_t li = 0; li < online.layer_count(); ++li) {
    EXPECT_TRUE(target.layers[li].effective_weights() ==
                online.layers[li].effective_weights());
    EXPECT_TRUE(target.layers[li].bias == online.layers[li].bias);
  }
}

TEST(Polyak, ConvexStep) {
  Matrix w(1, 1), m(1, 1);
  w << 1.0;
  m << 1;
  MaskedNetwork online = single_layer(w, m, Vector::Zero(1), Activation::Identity);
  MaskedNetwork target = online;
  target.layers[0].weights(0, 0) = 0.0;
  polyak(target, online, 0.005);
  EXPECT_DOUBLE_EQ(target.layers[0].weights(0, 0), 0.005);
}

TEST(Polyak, IdenticalNetsFixedPointBitExact) {
  ne::Rng rng(13);
  MaskedNetwork online = random_masked_net(rng);
  MaskedNetwork target = online;
  polyak(target, online, 0.005);
  for (std::size_t li = 0; li < online.layer_count(); ++li) {
    EXPECT_TRUE(target.layers[li].weights == online.layers[li].weights);
    EXPECT_TRUE(target.layers[li].bias == online.layers[li].bias);
  }
}

TEST(Polyak, SpecMismatchThrows) {
  MaskedNetwork a = build_network(
      {{2, 3, Activation::ReLU, true}, {3, 1, Activation::Identity, true}}, 0);
  MaskedNetwork b = build_network(
      {{2, 4, Activation::ReLU, true}, {4, 1, Activation::Identity, true}}, 0);
  EXPECT_THROW(polyak(a, b, 0.5), std::invalid_argument);
  MaskedNetwork c = a;
  EXPECT_THROW(polyak(a, c, 0.0), std::invalid_argument);
  EXPECT_THROW(polyak(a, c, 1.5), std::invalid_argument);
}

TEST(MaskedForward, InvariantToStoredValuesAtMaskedCoords) {
  ne::Rng rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    MaskedNetwork net = random_masked_net(rng);
    Matrix batch = Matrix::NullaryExpr(5, net.input_dim(),
                                       [&]() { return rng.uniform(-3, 3); });
    const Matrix y0 = forward(net, batch).first;
    for (auto& l : net.layers)
      for (int r = 0; r < l.fan_out(); ++r)
        for (int c = 0; c < l.fan_in(); ++c)
          if (l.mask(r, c) == 0.0) l.weights(r, c) = rng.uniform(-1e6, 1e6);
    const Matrix y1 = forward(net, batch).first;
    ASSERT_TRUE(y0 == y1) << "outputs changed bit-wise on trial " << trial;
  }
}

TEST(Determinism, SameSeedSameNetworkAfterUpdates) {
  auto run = []() {
    ne::Rng rng(99);
    MaskedNetwork net = random_masked_net(rng);
    AdamState st = make_adam_state(net, {.lr = 0.01});
    for (int it = 0; it < 25; ++it) {
      Matrix batch = Matrix::NullaryExpr(4, net.input_dim(),
                                         [&]() { return rng.uniform(-1, 1); });
      const auto [y, cache] = forward(net, batch);
      adam_update(net, backward(net, cache, quadratic_loss_grad(y)), st, 3.0);
    }
    return net;
  };
  MaskedNetwork a = run(), b = run();
  for (std::size_t li = 0; li < a.layer_count(); ++li) {
    EXPECT_TRUE(a.layers[li].weights == b.layers[li].weights);
    EXPECT_TRUE(a.layers[li].bias == b.layers[li].bias);
    EXPECT_TRUE(a.layers[li].mask == b.layers[li].mask);
  }
}
