#pragma once

#include "isac/types.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace isac::marl {

enum class Activation { Relu, Tanh, Linear };

template <typename Scalar>
struct DenseLayer {
  MatrixT<Scalar> weights;  // out x in
  VectorT<Scalar> bias;     // out
};

/// Fully connected network: ReLU on hidden layers, configurable output activation.
/// Batches are column-major (one sample per column).
template <typename Scalar = Real>
class Mlp {
 public:
  using Mat = MatrixT<Scalar>;
  using Vec = VectorT<Scalar>;

  struct Cache {
    std::vector<Mat> inputs;  // input to each layer
    std::vector<Mat> pre;     // pre-activation of each layer
    Mat output;
    const Mlp* owner = nullptr;
    std::uint64_t generation = 0;
  };

  struct Gradients {
    std::vector<DenseLayer<Scalar>> layers;
    Mat input;

    Scalar squared_norm() const {
      Scalar s = 0;
      for (const auto& l : layers) s += l.weights.squaredNorm() + l.bias.squaredNorm();
      return s;
    }
    void scale(Scalar c) {
      for (auto& l : layers) {
        l.weights *= c;
        l.bias *= c;
      }
    }
  };

  Mlp() = default;

  /// Uniform(+-1/sqrt(fan_in)) hidden weights, Uniform(+-final_scale) output weights, zero biases.
  Mlp(const std::vector<Index>& sizes, Activation output, Rng& rng, Scalar final_scale = Scalar(3e-3))
      : output_(output) {
    if (sizes.size() < 2) throw InvalidInput("Mlp: need at least input and output sizes");
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const bool last = i + 2 == sizes.size();
      const Scalar bound = last ? final_scale : Scalar(1) / std::sqrt(static_cast<Scalar>(sizes[i]));
      std::uniform_real_distribution<Scalar> u(-bound, bound);
      DenseLayer<Scalar> layer{Mat(sizes[i + 1], sizes[i]), Vec::Zero(sizes[i + 1])};
      for (Index c = 0; c < layer.weights.cols(); ++c)
        for (Index r = 0; r < layer.weights.rows(); ++r) layer.weights(r, c) = u(rng);
      layers_.push_back(std::move(layer));
    }
  }

  static Mlp zeros(const std::vector<Index>& sizes, Activation output) {
    Mlp m;
    m.output_ = output;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
      m.layers_.push_back({Mat::Zero(sizes[i + 1], sizes[i]), Vec::Zero(sizes[i + 1])});
    return m;
  }

  Index input_dim() const { return layers_.empty() ? 0 : layers_.front().weights.cols(); }
  Index output_dim() const { return layers_.empty() ? 0 : layers_.back().weights.rows(); }
  Activation output_activation() const { return output_; }
  const std::vector<DenseLayer<Scalar>>& layers() const { return layers_; }
  std::uint64_t generation() const { return generation_; }

  /// Mutable access bumps the generation so older caches are refused by backward().
  std::vector<DenseLayer<Scalar>>& mutable_layers() {
    ++generation_;
    return layers_;
  }

  Mat forward(const Mat& x) const {
    Cache scratch;
    return forward(x, scratch);
  }

  Mat forward(const Mat& x, Cache& cache) const {
    if (x.rows() != input_dim())
      throw InvalidInput("Mlp::forward: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(input_dim()));
    cache.inputs.clear();
    cache.pre.clear();
    Mat h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      cache.inputs.push_back(h);
      Mat z = layers_[l].weights * h;
      z.colwise() += layers_[l].bias;
      cache.pre.push_back(z);
      h = activate(z, l + 1 == layers_.size() ? output_ : Activation::Relu);
    }
    cache.output = h;
    cache.owner = this;
    cache.generation = generation_;
    return h;
  }

  Vec forward_one(const Vec& x) const { return forward(Mat(x)).col(0); }

  /// Reverse-mode gradients of sum(grad_out .* output) with respect to parameters and input.
  Gradients backward(const Cache& cache, const Mat& grad_out) const {
    if (cache.owner != this || cache.generation != generation_ || cache.pre.size() != layers_.size())
      throw InvalidInput("Mlp::backward: cache does not match the current parameters");
    if (grad_out.rows() != output_dim() || grad_out.cols() != cache.output.cols())
      throw InvalidInput("Mlp::backward: output gradient has the wrong shape");
    Gradients g;
    g.layers.resize(layers_.size());
    Mat delta = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Activation act = i + 1 == layers_.size() ? output_ : Activation::Relu;
      delta = delta.cwiseProduct(derivative(cache.pre[i], act));
      g.layers[i].weights = delta * cache.inputs[i].transpose();
      g.layers[i].bias = delta.rowwise().sum();
      delta = layers_[i].weights.transpose() * delta;
    }
    g.input = std::move(delta);
    return g;
  }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
  }

  Vec parameters() const {
    Vec p(parameter_count());
    Index pos = 0;
    for (const auto& l : layers_) {
      p.segment(pos, l.weights.size()) = l.weights.reshaped();
      pos += l.weights.size();
      p.segment(pos, l.bias.size()) = l.bias;
      pos += l.bias.size();
    }
    return p;
  }

  void set_parameters(const Vec& p) {
    if (p.size() != parameter_count()) throw InvalidInput("Mlp::set_parameters: size mismatch");
    Index pos = 0;
    for (auto& l : mutable_layers()) {
      l.weights.reshaped() = p.segment(pos, l.weights.size());
      pos += l.weights.size();
      l.bias = p.segment(pos, l.bias.size());
      pos += l.bias.size();
    }
  }

  bool same_shape(const Mlp& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      if (layers_[i].weights.rows() != other.layers_[i].weights.rows() ||
          layers_[i].weights.cols() != other.layers_[i].weights.cols())
        return false;
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

 private:
  static Mat activate(const Mat& z, Activation a) {
    switch (a) {
      case Activation::Relu: return z.cwiseMax(Scalar(0));
      case Activation::Tanh: return z.array().tanh().matrix();
      case Activation::Linear: return z;
    }
    return z;
  }

  static Mat derivative(const Mat& z, Activation a) {
    switch (a) {
      case Activation::Relu: return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
      case Activation::Tanh: return (Scalar(1) - z.array().tanh().square()).matrix();
      case Activation::Linear: return Mat::Ones(z.rows(), z.cols());
    }
    return Mat::Ones(z.rows(), z.cols());
  }

  std::vector<DenseLayer<Scalar>> layers_;
  Activation output_ = Activation::Linear;
  std::uint64_t generation_ = 0;
};

/// Adam with bias correction, one moment pair per parameter tensor.
template <typename Scalar = Real>
class Adam {
 public:
  explicit Adam(Scalar lr = Scalar(1e-3), Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
                Scalar eps = Scalar(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Descends along `grads`.
  void step(Mlp<Scalar>& net, const typename Mlp<Scalar>::Gradients& grads) {
    auto& layers = net.mutable_layers();
    if (m_.empty()) {
      for (const auto& l : layers) {
        m_.push_back({MatrixT<Scalar>::Zero(l.weights.rows(), l.weights.cols()), VectorT<Scalar>::Zero(l.bias.size())});
        v_.push_back(m_.back());
      }
    }
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    for (std::size_t i = 0; i < layers.size(); ++i) {
      update(layers[i].weights, grads.layers[i].weights, m_[i].weights, v_[i].weights, c1, c2);
      update(layers[i].bias, grads.layers[i].bias, m_[i].bias, v_[i].bias, c1, c2);
    }
  }

  Scalar learning_rate() const { return lr_; }
  std::uint64_t steps() const { return t_; }

 private:
  template <typename P, typename G>
  void update(P& param, const G& grad, P& m, P& v, Scalar c1, Scalar c2) {
    m = beta1_ * m + (Scalar(1) - beta1_) * grad;
    v = beta2_ * v + (Scalar(1) - beta2_) * grad.cwiseAbs2();
    param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  Scalar lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<DenseLayer<Scalar>> m_, v_;
};

/// target <- rate * main + (1 - rate) * target, parameter by parameter.
template <typename Scalar>
void soft_update(const Mlp<Scalar>& main, Mlp<Scalar>& target, Scalar rate) {
  if (!main.same_shape(target)) throw InvalidInput("soft_update: network shapes differ");
  if (!(rate > Scalar(0)) || rate > Scalar(1)) throw InvalidInput("soft_update: rate must lie in (0, 1]");
  auto& t = target.mutable_layers();
  const auto& m = main.layers();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i].weights = rate * m[i].weights + (Scalar(1) - rate) * t[i].weights;
    t[i].bias = rate * m[i].bias + (Scalar(1) - rate) * t[i].bias;
  }
}

}  // namespace isac::marl
