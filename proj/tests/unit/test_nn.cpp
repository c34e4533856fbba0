#include "doctest.h"

#include <stdexcept>
#include "oracles.hpp"

#include "corl/nn/mlp.hpp"

using namespace corl;
using namespace corl::nn;
using MlpD = BasicMlp<double>;
using GradD = BasicGradientSet<double>;

namespace {

Layer<double> layer(Eigen::MatrixXd w, Eigen::VectorXd b, Activation act) { return {std::move(w), std::move(b), act}; }

LossEval<double> half_square(const Eigen::MatrixXd& out) {
  LossEval<double> e;
  e.per_sample = (out.array().square() * 0.5).colwise().sum().transpose();
  e.output_grad = out;
  return e;
}

MlpD random_net(std::uint64_t seed, std::vector<int> dims, Activation out = Activation::Identity, double scale = 1) {
  Rng rng(seed);
  return MlpD::random(dims, Activation::Relu, out, scale, rng);
}

}  // namespace

TEST_CASE("forward: ReLU clamps negatives") {
  const MlpD net({layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::Relu)});
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd(Eigen::Vector2d(-1, 2)));
  CHECK(y(0) == 0.0);
  CHECK(y(1) == 2.0);
}

TEST_CASE("forward: all-zero parameters give the zero vector") {
  MlpD net = random_net(3, {4, 8, 8, 3});
  std::vector<double> zeros(net.parameter_count(), 0.0);
  net.assign(zeros);
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd(Eigen::VectorXd::Random(4)));
  CHECK(y.isZero(0.0));
}

TEST_CASE("forward: stacked identity layers accumulate biases") {
  const MlpD net({layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(2), Activation::Identity),
                  layer(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Ones(2), Activation::Identity)});
  const Eigen::VectorXd y = net.forward(Eigen::VectorXd(Eigen::Vector2d(0, 0)));
  CHECK(y(0) == 2.0);
  CHECK(y(1) == 2.0);
}

TEST_CASE("forward: dimension mismatch raises ShapeError") {
  const MlpD net = random_net(1, {3, 4, 2});
  CHECK_THROWS_AS(net.forward(Eigen::VectorXd(Eigen::VectorXd::Zero(2))), ShapeError);
  std::vector<Layer<double>> bad{layer(Eigen::MatrixXd::Zero(3, 2), Eigen::VectorXd::Zero(3), Activation::Relu),
                                 layer(Eigen::MatrixXd::Zero(1, 4), Eigen::VectorXd::Zero(1), Activation::Relu)};
  CHECK_THROWS_AS(MlpD{bad}, ShapeError);
}

TEST_CASE("forward matches an independent implementation and is deterministic") {
  const MlpD net = random_net(11, {5, 16, 16, 3}, Activation::TanhScaled, 1.7);
  Rng rng(4);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(5, 7);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  const Eigen::MatrixXd y1 = net.forward(x);
  CHECK((y1 - oracle::forward(net, x)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(net.forward(x) == y1);
  CHECK(net.parameter_count() == 5 * 16 + 16 + 16 * 16 + 16 + 16 * 3 + 3);
}

TEST_CASE("gradient of (w x)^2 / 2 at w=2, x=3 is 18") {
  const MlpD net({layer(Eigen::MatrixXd::Constant(1, 1, 2.0), Eigen::VectorXd::Zero(1), Activation::Identity)});
  const auto r = compute_gradients<double>(net, Eigen::MatrixXd::Constant(1, 1, 3.0), half_square);
  CHECK(r.loss == doctest::Approx(18.0));
  CHECK(r.grads.weight[0](0, 0) == doctest::Approx(18.0));
}

TEST_CASE("identically zero loss gives an all-zero gradient set") {
  const MlpD net = random_net(2, {3, 6, 2});
  const auto r = compute_gradients<double>(net, Eigen::MatrixXd::Random(3, 5), [](const Eigen::MatrixXd& out) {
    return LossEval<double>{Eigen::VectorXd::Zero(out.cols()), Eigen::MatrixXd::Zero(out.rows(), out.cols())};
  });
  CHECK(r.loss == 0.0);
  CHECK(r.grads.flatten().isZero(0.0));
}

TEST_CASE("MSE gradient on a random 2-layer net matches central differences") {
  const MlpD net = random_net(21, {4, 16, 3});
  Rng rng(5);
  std::normal_distribution<double> n;
  Eigen::MatrixXd x(4, 8), y(3, 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = n(rng);
  const auto loss = [&](const Eigen::MatrixXd& out) { return mse_loss<double>(out, y); };
  const auto r = compute_gradients<double>(net, x, loss);
  const Eigen::VectorXd fd = oracle::fd_gradient(net, [&](const MlpD& m) {
    return (oracle::forward(m, x) - y).squaredNorm() / (2.0 * 8);
  }, 1e-5);
  CHECK(oracle::max_relative_error(r.grads.flatten(), fd) < 1e-4);
  CHECK(r.loss == doctest::Approx((oracle::forward(net, x) - y).squaredNorm() / 16.0).epsilon(1e-12));
}

TEST_CASE("tanh-scaled output layer and input gradients match central differences") {
  const MlpD net = random_net(8, {3, 12, 12, 2}, Activation::TanhScaled, 2.0);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(2, 4);
  Tape<double> tape;
  net.forward(x, tape);
  auto g = GradD::zeros_like(net);
  const Eigen::MatrixXd dx = net.backward(tape, w, g);
  const Eigen::VectorXd fd = oracle::fd_gradient(net, [&](const MlpD& m) {
    return (oracle::forward(m, x).array() * w.array()).sum();
  });
  CHECK(oracle::max_relative_error(g.flatten(), fd) < 1e-4);

  const double h = 1e-6;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd up = x, down = x;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double num = ((oracle::forward(net, up) - oracle::forward(net, down)).array() * w.array()).sum() / (2 * h);
    CHECK(std::abs(num - dx.data()[i]) < 1e-6);
  }
  CHECK(net.input_gradient(tape, w) == dx);
}

TEST_CASE("non-finite loss is reported with the offending column") {
  const MlpD net = random_net(2, {2, 4, 1});
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(2, 5);
  x(0, 3) = std::numeric_limits<double>::infinity();
  try {
    compute_gradients<double>(net, x, half_square);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() == 3);
  }
}

TEST_CASE("adam: first step moves by lr against the gradient sign") {
  MlpD net({layer(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), Activation::Identity)});
  auto state = BasicAdamState<double>::for_net(net);
  auto g = GradD::zeros_like(net);
  g.weight[0](0, 0) = 2.0;
  adam_step(net, g, state, 0.001);
  CHECK(state.t == 1);
  CHECK(std::abs(net.layers()[0].weight(0, 0) + 0.001) < 1e-6);
  CHECK(net.layers()[0].bias(0) == 0.0);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  MlpD net = random_net(4, {3, 5, 2});
  const MlpD before = net;
  auto state = BasicAdamState<double>::for_net(net);
  adam_step(net, GradD::zeros_like(net), state, 0.01);
  CHECK(net == before);
}

TEST_CASE("adam: two steps on g = theta match a hand-rolled reference") {
  MlpD net({layer(Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::VectorXd::Constant(1, 1.0), Activation::Identity)});
  auto state = BasicAdamState<double>::for_net(net);
  oracle::Adam ref;
  Eigen::VectorXd theta = Eigen::VectorXd::Ones(2);
  for (int k = 0; k < 2; ++k) {
    auto g = GradD::zeros_like(net);
    g.weight[0](0, 0) = net.layers()[0].weight(0, 0);
    g.bias[0](0) = net.layers()[0].bias(0);
    adam_step(net, g, state, 0.001);
    theta = ref.step(theta, theta, 0.001);
  }
  CHECK(state.t == 2);
  CHECK(std::abs(net.layers()[0].weight(0, 0) - theta(0)) < 1e-12);
  CHECK(std::abs(net.layers()[0].bias(0) - theta(1)) < 1e-12);
  CHECK((state.v.flatten().array() >= 0).all());
}

TEST_CASE("adam: incongruent gradients are rejected") {
  MlpD net = random_net(4, {3, 5, 2});
  auto state = BasicAdamState<double>::for_net(net);
  const MlpD other = random_net(4, {3, 6, 2});
  CHECK_THROWS_AS(adam_step(net, GradD::zeros_like(other), state, 0.01), ShapeError);
}

TEST_CASE("soft_update endpoints and midpoint") {
  const MlpD online = random_net(1, {3, 4, 2});
  MlpD target = random_net(2, {3, 4, 2});
  const MlpD original = target;

  MlpD t0 = target;
  soft_update(t0, online, 0.0);
  CHECK(t0 == original);
  soft_update(target, online, 1.0);
  CHECK(target == online);

  MlpD zero = online, one = online;
  zero.assign(std::vector<double>(online.parameter_count(), 0.0));
  one.assign(std::vector<double>(online.parameter_count(), 1.0));
  soft_update(zero, one, 0.5);
  for (double p : zero.flatten()) CHECK(p == 0.5);

  CHECK_THROWS_AS(soft_update(target, online, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(soft_update(target, online, -0.1), std::invalid_argument);
}

TEST_CASE("flatten/assign round-trip, casts and concat") {
  const MlpD a = random_net(7, {3, 5});
  const MlpD b = random_net(8, {5, 4, 2}, Activation::TanhScaled, 1.5);
  MlpD copy = a;
  copy.assign(a.flatten());
  CHECK(copy == a);
  const Mlp f = b.cast<float>();
  CHECK(f.cast<double>().flatten().size() == b.flatten().size());

  const MlpD ab = concat(a, b);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 6);
  CHECK((ab.forward(x) - b.forward(a.forward(x))).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ab.output_scale() == 1.5);
  CHECK_THROWS_AS(concat(b, a), ShapeError);
}

TEST_CASE("gradient sets: arithmetic and flatten order") {
  const MlpD net = random_net(3, {2, 3, 1});
  auto g = GradD::zeros_like(net);
  CHECK(g.congruent_with(net));
  CHECK(g.size() == net.parameter_count());
  Eigen::VectorXd flat = Eigen::VectorXd::LinSpaced(static_cast<Eigen::Index>(g.size()), 1, 13);
  g.assign(flat);
  CHECK(g.flatten() == flat);
  CHECK(g.squared_norm() == doctest::Approx(flat.squaredNorm()));
  auto h = g;
  h += g;
  h *= 0.5;
  CHECK(h.flatten() == flat);
  CHECK(g.all_finite());
}
