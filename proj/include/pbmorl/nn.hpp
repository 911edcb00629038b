/**
 * @file nn.hpp
 * @brief Minimal dense feedforward network (tanh hidden layers, linear head)
 *        with exact reverse-mode gradients, plus an Adam optimizer.
 *
 * Parameters live in one flat vector: for each layer, the row-major weight
 * matrix (out x in) followed by the bias.
 */
#pragma once

#include <cmath>
#include <vector>

#include "pbmorl/core.hpp"

namespace pbmorl {

class Mlp {
 public:
  struct Tape {
    std::vector<Vector> hidden;  // post-activation output of each hidden layer
  };

  Mlp() = default;

  /// sizes = {input, hidden..., output}
  explicit Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw Error(Errc::ConfigError, "network needs at least input and output sizes");
    for (auto s : sizes_) {
      if (s == 0) throw Error(Errc::ConfigError, "network layer width must be positive");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      weight_offset_.push_back(offset);
      offset += sizes_[l] * sizes_[l + 1];
      bias_offset_.push_back(offset);
      offset += sizes_[l + 1];
    }
    params_.assign(offset, 0.0);
  }

  [[nodiscard]] const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  [[nodiscard]] std::size_t input_size() const noexcept { return sizes_.front(); }
  [[nodiscard]] std::size_t output_size() const noexcept { return sizes_.back(); }
  [[nodiscard]] std::size_t layer_count() const noexcept { return sizes_.size() - 1; }
  [[nodiscard]] std::size_t parameter_count() const noexcept { return params_.size(); }
  [[nodiscard]] std::span<double> parameters() noexcept { return params_; }
  [[nodiscard]] std::span<const double> parameters() const noexcept { return params_; }

  /// Glorot-uniform weights, zero biases; optionally a zero output layer.
  void initialize(Rng& rng, bool zero_output = false) {
    for (std::size_t l = 0; l < layer_count(); ++l) {
      const double fan_in = static_cast<double>(sizes_[l]);
      const double fan_out = static_cast<double>(sizes_[l + 1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      const bool zero = zero_output && l + 1 == layer_count();
      for (std::size_t i = 0; i < sizes_[l] * sizes_[l + 1]; ++i) params_[weight_offset_[l] + i] = zero ? 0.0 : dist(rng);
      for (std::size_t i = 0; i < sizes_[l + 1]; ++i) params_[bias_offset_[l] + i] = 0.0;
    }
  }

  Vector forward(const Features& x, Tape* tape = nullptr) const {
    check_input(x);
    Vector current = first_layer(x);
    if (tape) tape->hidden.clear();
    for (std::size_t l = 1; l < layer_count(); ++l) {
      for (auto& v : current) v = std::tanh(v);
      if (tape) tape->hidden.push_back(current);
      current = dense_layer(l, current);
    }
    return current;
  }

  /**
   * @brief Accumulates d(output . grad_out)/d(params) into `grad`.
   *
   * `tape` must come from forward() on the same input and parameters.
   */
  void backward(const Features& x, const Tape& tape, std::span<const double> grad_out, std::span<double> grad) const {
    if (grad.size() != params_.size()) throw Error(Errc::DimensionMismatch, "gradient buffer size");
    if (grad_out.size() != output_size()) throw Error(Errc::DimensionMismatch, "output gradient size");
    Vector delta(grad_out.begin(), grad_out.end());
    for (std::size_t l = layer_count(); l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      double* gw = grad.data() + weight_offset_[l];
      double* gb = grad.data() + bias_offset_[l];
      for (std::size_t o = 0; o < out; ++o) gb[o] += delta[o];
      if (l == 0) {
        for (std::size_t o = 0; o < out; ++o) {
          const double d = delta[o];
          if (d == 0.0) continue;
          double* row = gw + o * in;
          for (auto h : x.hot) row[h] += d;
          for (std::size_t j = 0; j < x.dense.size(); ++j) row[x.dense_offset + j] += d * x.dense[j];
        }
        break;
      }
      const Vector& input = tape.hidden[l - 1];
      const double* w = params_.data() + weight_offset_[l];
      Vector prev(in, 0.0);
      for (std::size_t o = 0; o < out; ++o) {
        const double d = delta[o];
        if (d == 0.0) continue;
        double* grow = gw + o * in;
        const double* wrow = w + o * in;
        for (std::size_t i = 0; i < in; ++i) {
          grow[i] += d * input[i];
          prev[i] += d * wrow[i];
        }
      }
      for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - input[i] * input[i];
      delta = std::move(prev);
    }
  }

 private:
  void check_input(const Features& x) const {
    if (x.dim != input_size() || x.dense_offset + x.dense.size() > input_size()) {
      throw Error(Errc::EncodingError, "input width " + std::to_string(x.dim) + " for a network expecting " +
                                           std::to_string(input_size()));
    }
    for (auto h : x.hot) {
      if (h >= input_size()) throw Error(Errc::EncodingError, "one-hot index out of range");
    }
  }

  [[nodiscard]] Vector first_layer(const Features& x) const {
    const std::size_t in = sizes_[0];
    const std::size_t out = sizes_[1];
    const double* w = params_.data() + weight_offset_[0];
    Vector z(params_.begin() + static_cast<std::ptrdiff_t>(bias_offset_[0]),
             params_.begin() + static_cast<std::ptrdiff_t>(bias_offset_[0] + out));
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = 0.0;
      for (auto h : x.hot) acc += row[h];
      for (std::size_t j = 0; j < x.dense.size(); ++j) acc += row[x.dense_offset + j] * x.dense[j];
      z[o] += acc;
    }
    return z;
  }

  [[nodiscard]] Vector dense_layer(std::size_t l, const Vector& input) const {
    const std::size_t in = sizes_[l];
    const std::size_t out = sizes_[l + 1];
    const double* w = params_.data() + weight_offset_[l];
    const double* b = params_.data() + bias_offset_[l];
    Vector z(out);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * input[i];
      z[o] = acc;
    }
    return z;
  }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> weight_offset_;
  std::vector<std::size_t> bias_offset_;
  Vector params_;
};

class Adam {
 public:
  Adam() = default;
  Adam(std::size_t size, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) throw Error(Errc::DimensionMismatch, "Adam step");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
  }

  [[nodiscard]] double learning_rate() const noexcept { return lr_; }
  [[nodiscard]] std::uint64_t steps() const noexcept { return t_; }

 private:
  double lr_ = 3e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::uint64_t t_ = 0;
  Vector m_;
  Vector v_;
};

}  // namespace pbmorl
