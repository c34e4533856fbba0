#include "corl/nn/mlp.hpp"

#include <cmath>
#include <string>

namespace corl::nn {

template <typename T>
BasicMlp<T>::BasicMlp(std::vector<Layer<T>> layers, T output_scale)
    : layers_(std::move(layers)), output_scale_(output_scale) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.weight.rows()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias length does not match weight rows");
    }
    if (i > 0 && layers_[i - 1].out() != l.in()) {
      throw ShapeError("layer " + std::to_string(i) + ": input dim " + std::to_string(l.in()) +
                       " does not chain with previous output dim " +
                       std::to_string(layers_[i - 1].out()));
    }
  }
}

template <typename T>
BasicMlp<T> BasicMlp<T>::random(std::span<const int> dims, Activation hidden, Activation output,
                                T output_scale, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
  std::vector<Layer<T>> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const int in = dims[i];
    const int out = dims[i + 1];
    if (in <= 0 || out <= 0) throw ShapeError("layer dims must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Layer<T> l;
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = static_cast<T>(u(rng));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = static_cast<T>(u(rng));
    l.activation = (i + 2 == dims.size()) ? output : hidden;
    layers.push_back(std::move(l));
  }
  return BasicMlp(std::move(layers), output_scale);
}

template <typename T>
int BasicMlp<T>::input_dim() const {
  return layers_.empty() ? 0 : layers_.front().in();
}

template <typename T>
int BasicMlp<T>::output_dim() const {
  return layers_.empty() ? 0 : layers_.back().out();
}

template <typename T>
std::size_t BasicMlp<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

template <typename T>
void BasicMlp<T>::check_input(long rows) const {
  if (layers_.empty()) throw ShapeError("forward on an empty network");
  if (rows != input_dim()) {
    throw ShapeError("input has " + std::to_string(rows) + " rows, network expects " +
                     std::to_string(input_dim()));
  }
}

template <typename T>
Mat<T> BasicMlp<T>::activate(const Layer<T>& layer, Mat<T> z) const {
  switch (layer.activation) {
    case Activation::Identity:
      return z;
    case Activation::Relu:
      return z.cwiseMax(T(0));
    case Activation::TanhScaled:
      return output_scale_ * z.array().tanh().matrix();
  }
  return z;
}

template <typename T>
Vec<T> BasicMlp<T>::forward(const Vec<T>& input) const {
  return forward(Mat<T>(input)).col(0);
}

template <typename T>
Mat<T> BasicMlp<T>::forward(const Mat<T>& batch) const {
  check_input(batch.rows());
  Mat<T> x = batch;
  for (const auto& l : layers_) {
    Mat<T> z = l.weight * x;
    z.colwise() += l.bias;
    x = activate(l, std::move(z));
  }
  return x;
}

template <typename T>
Mat<T> BasicMlp<T>::forward(const Mat<T>& batch, Tape<T>& tape) const {
  check_input(batch.rows());
  tape.inputs.resize(layers_.size());
  tape.outputs.resize(layers_.size());
  const Mat<T>* x = &batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    tape.inputs[i] = *x;
    Mat<T> z = l.weight * (*x);
    z.colwise() += l.bias;
    tape.outputs[i] = activate(l, std::move(z));
    x = &tape.outputs[i];
  }
  return tape.outputs.back();
}

template <typename T>
Mat<T> BasicMlp<T>::hidden_features(const Mat<T>& batch) const {
  check_input(batch.rows());
  if (layers_.size() < 2) throw ShapeError("network has no hidden layer");
  Mat<T> x = batch;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    const auto& l = layers_[i];
    Mat<T> z = l.weight * x;
    z.colwise() += l.bias;
    x = activate(l, std::move(z));
  }
  return x;
}

template <typename T>
Mat<T> BasicMlp<T>::backward(const Tape<T>& tape, const Mat<T>& output_grad,
                             BasicGradientSet<T>& grads) const {
  if (!grads.congruent_with(*this)) throw ShapeError("gradient set is not congruent with network");
  return backprop(tape, output_grad, &grads);
}

template <typename T>
Mat<T> BasicMlp<T>::input_gradient(const Tape<T>& tape, const Mat<T>& output_grad) const {
  return backprop(tape, output_grad, nullptr);
}

template <typename T>
Mat<T> BasicMlp<T>::backprop(const Tape<T>& tape, const Mat<T>& output_grad,
                             BasicGradientSet<T>* grads) const {
  if (tape.outputs.size() != layers_.size()) throw ShapeError("tape does not match network depth");
  if (output_grad.rows() != output_dim() || output_grad.cols() != tape.outputs.back().cols()) {
    throw ShapeError("output gradient shape does not match the taped output");
  }
  Mat<T> delta = output_grad;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    const auto& y = tape.outputs[k];
    switch (l.activation) {
      case Activation::Identity:
        break;
      case Activation::Relu:
        delta = (y.array() > T(0)).select(delta, T(0));
        break;
      case Activation::TanhScaled: {
        // y = s*tanh(z)  =>  dy/dz = s * (1 - (y/s)^2)
        const T s = output_scale_;
        delta = (delta.array() * (s - y.array().square() / s)).matrix();
        break;
      }
    }
    if (grads) {
      grads->weight[k].noalias() += delta * tape.inputs[k].transpose();
      grads->bias[k] += delta.rowwise().sum();
    }
    delta = l.weight.transpose() * delta;
  }
  return delta;
}

template <typename T>
std::vector<T> BasicMlp<T>::flatten() const {
  std::vector<T> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

template <typename T>
void BasicMlp<T>::assign(std::span<const T> params) {
  if (params.size() != parameter_count()) throw ShapeError("parameter vector length mismatch");
  auto it = params.begin();
  for (auto& l : layers_) {
    std::copy_n(it, l.weight.size(), l.weight.data());
    it += l.weight.size();
    std::copy_n(it, l.bias.size(), l.bias.data());
    it += l.bias.size();
  }
}

template <typename T>
bool BasicMlp<T>::operator==(const BasicMlp& other) const {
  if (layers_.size() != other.layers_.size() || output_scale_ != other.output_scale_) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
        a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

template <typename T>
BasicMlp<T> concat(const BasicMlp<T>& first, const BasicMlp<T>& second) {
  if (first.output_dim() != second.input_dim()) throw ShapeError("concat: dims do not chain");
  std::vector<Layer<T>> layers = first.layers();
  layers.insert(layers.end(), second.layers().begin(), second.layers().end());
  return BasicMlp<T>(std::move(layers), second.output_scale());
}

// ---------------------------------------------------------------------------

template <typename T>
BasicGradientSet<T> BasicGradientSet<T>::zeros_like(const BasicMlp<T>& net) {
  BasicGradientSet g;
  for (const auto& l : net.layers()) {
    g.weight.push_back(Mat<T>::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Vec<T>::Zero(l.bias.size()));
  }
  return g;
}

template <typename T>
void BasicGradientSet<T>::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

template <typename T>
bool BasicGradientSet<T>::congruent_with(const BasicMlp<T>& net) const {
  const auto& layers = net.layers();
  if (weight.size() != layers.size() || bias.size() != layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (weight[i].rows() != layers[i].weight.rows() || weight[i].cols() != layers[i].weight.cols() ||
        bias[i].size() != layers[i].bias.size()) {
      return false;
    }
  }
  return true;
}

template <typename T>
bool BasicGradientSet<T>::all_finite() const {
  for (const auto& w : weight)
    if (!w.allFinite()) return false;
  for (const auto& b : bias)
    if (!b.allFinite()) return false;
  return true;
}

template <typename T>
std::size_t BasicGradientSet<T>::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) n += weight[i].size() + bias[i].size();
  return n;
}

template <typename T>
double BasicGradientSet<T>::dot(const BasicGradientSet& other) const {
  if (weight.size() != other.weight.size()) throw ShapeError("gradient sets are not congruent");
  double s = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    s += (weight[i].template cast<double>().array() * other.weight[i].template cast<double>().array()).sum();
    s += (bias[i].template cast<double>().array() * other.bias[i].template cast<double>().array()).sum();
  }
  return s;
}

template <typename T>
BasicGradientSet<T>& BasicGradientSet<T>::operator+=(const BasicGradientSet& other) {
  if (weight.size() != other.weight.size()) throw ShapeError("gradient sets are not congruent");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
  return *this;
}

template <typename T>
BasicGradientSet<T>& BasicGradientSet<T>::operator*=(T factor) {
  for (auto& w : weight) w *= factor;
  for (auto& b : bias) b *= factor;
  return *this;
}

template <typename T>
Eigen::VectorXd BasicGradientSet<T>::flatten() const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(size()));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    for (Eigen::Index j = 0; j < weight[i].size(); ++j) out(k++) = static_cast<double>(weight[i].data()[j]);
    for (Eigen::Index j = 0; j < bias[i].size(); ++j) out(k++) = static_cast<double>(bias[i](j));
  }
  return out;
}

template <typename T>
void BasicGradientSet<T>::assign(const Eigen::Ref<const Eigen::VectorXd>& flat) {
  if (static_cast<std::size_t>(flat.size()) != size()) throw ShapeError("flat gradient length mismatch");
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    for (Eigen::Index j = 0; j < weight[i].size(); ++j) weight[i].data()[j] = static_cast<T>(flat(k++));
    for (Eigen::Index j = 0; j < bias[i].size(); ++j) bias[i](j) = static_cast<T>(flat(k++));
  }
}

// ---------------------------------------------------------------------------

template <typename T>
GradientResult<T> compute_gradients(const BasicMlp<T>& net, const Mat<T>& inputs, const LossFn<T>& loss) {
  Tape<T> tape;
  const Mat<T> out = net.forward(inputs, tape);
  LossEval<T> eval = loss(out);
  if (eval.per_sample.size() != out.cols()) throw ShapeError("loss must report one value per batch column");
  for (Eigen::Index i = 0; i < eval.per_sample.size(); ++i) {
    if (!std::isfinite(eval.per_sample(i)) || !eval.output_grad.col(i).allFinite()) {
      throw NonFiniteError("non-finite loss", static_cast<long>(i));
    }
  }
  GradientResult<T> result;
  result.loss = eval.per_sample.sum();
  result.grads = BasicGradientSet<T>::zeros_like(net);
  net.backward(tape, eval.output_grad, result.grads);
  return result;
}

template <typename T>
void adam_step(BasicMlp<T>& net, const BasicGradientSet<T>& grads, BasicAdamState<T>& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (!grads.congruent_with(net) || !state.m.congruent_with(net) || !state.v.congruent_with(net)) {
    throw ShapeError("adam_step: parameters, gradients and moments are not congruent");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(state.eps);

  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseProduct(g);
    param.array() -= step * m.array() / ((v.array() * inv_bc2).sqrt() + eps);
  };
  for (std::size_t i = 0; i < net.layers().size(); ++i) {
    auto& l = net.layers()[i];
    update(l.weight, grads.weight[i], state.m.weight[i], state.v.weight[i]);
    update(l.bias, grads.bias[i], state.m.bias[i], state.v.bias[i]);
  }
}

template <typename T>
void soft_update(BasicMlp<T>& target, const BasicMlp<T>& online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0, 1]");
  if (target.layers().size() != online.layers().size()) throw ShapeError("soft_update: depth mismatch");
  const T a = static_cast<T>(tau);
  const T b = static_cast<T>(1.0 - tau);
  for (std::size_t i = 0; i < target.layers().size(); ++i) {
    auto& t = target.layers()[i];
    const auto& o = online.layers()[i];
    if (t.weight.rows() != o.weight.rows() || t.weight.cols() != o.weight.cols()) {
      throw ShapeError("soft_update: layer shape mismatch");
    }
    t.weight = a * o.weight + b * t.weight;
    t.bias = a * o.bias + b * t.bias;
  }
}

template <typename T>
LossEval<T> mse_loss(const Mat<T>& outputs, const Mat<T>& targets) {
  if (outputs.rows() != targets.rows() || outputs.cols() != targets.cols()) {
    throw ShapeError("mse_loss: output and target shapes differ");
  }
  const double inv_b = 1.0 / static_cast<double>(outputs.cols());
  const Mat<T> diff = outputs - targets;
  LossEval<T> eval;
  eval.per_sample = 0.5 * inv_b * diff.template cast<double>().colwise().squaredNorm().transpose();
  eval.output_grad = diff * static_cast<T>(inv_b);
  return eval;
}

template class BasicMlp<float>;
template class BasicMlp<double>;
template class BasicGradientSet<float>;
template class BasicGradientSet<double>;

#define CORL_INSTANTIATE(T)                                                                        \
  template BasicMlp<T> concat(const BasicMlp<T>&, const BasicMlp<T>&);                             \
  template GradientResult<T> compute_gradients(const BasicMlp<T>&, const Mat<T>&, const LossFn<T>&); \
  template void adam_step(BasicMlp<T>&, const BasicGradientSet<T>&, BasicAdamState<T>&, double);   \
  template void soft_update(BasicMlp<T>&, const BasicMlp<T>&, double);                             \
  template LossEval<T> mse_loss(const Mat<T>&, const Mat<T>&);

CORL_INSTANTIATE(float)
CORL_INSTANTIATE(double)

#undef CORL_INSTANTIATE

}  // namespace corl::nn
