#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "corl/error.hpp"
#include "corl/random.hpp"

namespace corl::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Training precision. Tests that need finite-difference headroom instantiate
// the double variants directly.
using Real = float;
using MatR = Mat<Real>;
using VecR = Vec<Real>;

enum class Activation : std::uint8_t {
  Identity = 0,
  Relu = 1,
  TanhScaled = 2,  // scale * tanh(z), scale taken from the owning network
};

template <typename T>
struct Layer {
  Mat<T> weight;  // out x in
  Vec<T> bias;    // out
  Activation activation = Activation::Identity;

  int in() const { return static_cast<int>(weight.cols()); }
  int out() const { return static_cast<int>(weight.rows()); }
};

// Activations recorded by a taped forward pass. inputs[l] feeds layer l;
// outputs[l] is layer l's post-activation value.
template <typename T>
struct Tape {
  std::vector<Mat<T>> inputs;
  std::vector<Mat<T>> outputs;
};

template <typename T>
class BasicGradientSet;

// Fully connected feed-forward network. Batches are column-major: one sample
// per column.
template <typename T>
class BasicMlp {
 public:
  BasicMlp() = default;
  explicit BasicMlp(std::vector<Layer<T>> layers, T output_scale = T(1));

  // dims = {in, hidden..., out}. Weights and biases ~ U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  static BasicMlp random(std::span<const int> dims, Activation hidden, Activation output,
                         T output_scale, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  int layer_count() const { return static_cast<int>(layers_.size()); }
  std::size_t parameter_count() const;
  T output_scale() const { return output_scale_; }
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer<T>>& layers() const { return layers_; }
  std::vector<Layer<T>>& layers() { return layers_; }

  Vec<T> forward(const Vec<T>& input) const;
  Mat<T> forward(const Mat<T>& batch) const;
  Mat<T> forward(const Mat<T>& batch, Tape<T>& tape) const;

  // Post-activation values of the last hidden layer (input to the output layer).
  Mat<T> hidden_features(const Mat<T>& batch) const;

  // Accumulates parameter gradients of sum(output_grad .* output) into grads
  // and returns the gradient with respect to the network input.
  Mat<T> backward(const Tape<T>& tape, const Mat<T>& output_grad, BasicGradientSet<T>& grads) const;

  // Gradient with respect to the input only; parameters are treated as constants.
  Mat<T> input_gradient(const Tape<T>& tape, const Mat<T>& output_grad) const;

  // Parameter order: for each layer, weight (column-major) then bias.
  std::vector<T> flatten() const;
  void assign(std::span<const T> params);

  template <typename U>
  BasicMlp<U> cast() const {
    std::vector<Layer<U>> out;
    out.reserve(layers_.size());
    for (const auto& l : layers_) {
      out.push_back({l.weight.template cast<U>(), l.bias.template cast<U>(), l.activation});
    }
    return BasicMlp<U>(std::move(out), static_cast<U>(output_scale_));
  }

  bool operator==(const BasicMlp& other) const;

 private:
  void check_input(long rows) const;
  Mat<T> activate(const Layer<T>& layer, Mat<T> z) const;
  Mat<T> backprop(const Tape<T>& tape, const Mat<T>& output_grad, BasicGradientSet<T>* grads) const;

  std::vector<Layer<T>> layers_;
  T output_scale_ = T(1);
};

// Sequential composition: first's output feeds second's input.
template <typename T>
BasicMlp<T> concat(const BasicMlp<T>& first, const BasicMlp<T>& second);

template <typename T>
class BasicGradientSet {
 public:
  BasicGradientSet() = default;
  static BasicGradientSet zeros_like(const BasicMlp<T>& net);

  std::vector<Mat<T>> weight;
  std::vector<Vec<T>> bias;

  void set_zero();
  bool congruent_with(const BasicMlp<T>& net) const;
  bool all_finite() const;
  std::size_t size() const;
  double dot(const BasicGradientSet& other) const;
  double squared_norm() const { return dot(*this); }

  BasicGradientSet& operator+=(const BasicGradientSet& other);
  BasicGradientSet& operator*=(T factor);

  // Same order as BasicMlp::flatten.
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::Ref<const Eigen::VectorXd>& flat);
};

template <typename T>
struct BasicAdamState {
  BasicGradientSet<T> m;
  BasicGradientSet<T> v;
  std::int64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static BasicAdamState for_net(const BasicMlp<T>& net) {
    BasicAdamState s;
    s.m = BasicGradientSet<T>::zeros_like(net);
    s.v = BasicGradientSet<T>::zeros_like(net);
    return s;
  }
};

// Result of evaluating a loss on a batch of network outputs. per_sample holds
// each column's contribution (already weighted, so the loss is its sum);
// output_grad is d loss / d output.
template <typename T>
struct LossEval {
  Eigen::VectorXd per_sample;
  Mat<T> output_grad;
};

template <typename T>
struct GradientResult {
  double loss = 0.0;
  BasicGradientSet<T> grads;
};

template <typename T>
using LossFn = std::function<LossEval<T>(const Mat<T>& outputs)>;

// Throws NonFiniteError naming the first batch column whose loss is not finite.
template <typename T>
GradientResult<T> compute_gradients(const BasicMlp<T>& net, const Mat<T>& inputs, const LossFn<T>& loss);

// Bias-corrected Adam. Increments state.t by one.
template <typename T>
void adam_step(BasicMlp<T>& net, const BasicGradientSet<T>& grads, BasicAdamState<T>& state, double lr);

// target <- tau * online + (1 - tau) * target
template <typename T>
void soft_update(BasicMlp<T>& target, const BasicMlp<T>& online, double tau);

// Half mean squared error over columns: sum_i ||out_i - target_i||^2 / (2B).
template <typename T>
LossEval<T> mse_loss(const Mat<T>& outputs, const Mat<T>& targets);

using Mlp = BasicMlp<Real>;
using GradientSet = BasicGradientSet<Real>;
using AdamState = BasicAdamState<Real>;

extern template class BasicMlp<float>;
extern template class BasicMlp<double>;
extern template class BasicGradientSet<float>;
extern template class BasicGradientSet<double>;

}  // namespace corl::nn
