#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "erp/error.hpp"
#include "erp/rng.hpp"
#include "erp/types.hpp"

namespace erp {

// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    require(data.size() == r * c, ErrorCode::dimension, "matrix data does not match shape");
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// Valid (unpadded) cross-correlation of x with kernel plus a scalar bias:
//   out(r, c) = bias + sum_{i,j} x(r + i, c + j) * kernel(i, j)
// Output shape is (x.rows - kernel.rows + 1) x (x.cols - kernel.cols + 1).
inline Matrix conv2d_valid(const Matrix& x, const Matrix& kernel, double bias) {
  require(kernel.rows >= 1 && kernel.cols >= 1, ErrorCode::dimension, "empty kernel");
  require(kernel.rows <= x.rows && kernel.cols <= x.cols, ErrorCode::dimension,
          "kernel larger than input");
  Matrix out(x.rows - kernel.rows + 1, x.cols - kernel.cols + 1);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      double acc = bias;
      for (std::size_t i = 0; i < kernel.rows; ++i) {
        const double* xrow = x.data.data() + (r + i) * x.cols + c;
        const double* krow = kernel.data.data() + i * kernel.cols;
        for (std::size_t j = 0; j < kernel.cols; ++j) acc += xrow[j] * krow[j];
      }
      out(r, c) = acc;
    }
  }
  return out;
}

inline double relu(double z) { return z > 0.0 ? z : 0.0; }

inline Matrix relu(Matrix z) {
  for (double& v : z.data) v = relu(v);
  return z;
}

// Kept inside the open interval: large |z| would otherwise round to 0 or 1.
inline double sigmoid(double z) {
  constexpr double hi = 1.0 - 0x1p-53;
  if (z >= 0.0) return std::min(1.0 / (1.0 + std::exp(-z)), hi);
  const double e = std::exp(z);
  return std::max(e / (1.0 + e), std::numeric_limits<double>::denorm_min());
}

inline constexpr double kLossEpsilon = 1e-12;

// Binary cross-entropy of a predicted target probability against a label.
inline double bce_loss(double probability, Label label) {
  const double p = std::clamp(probability, kLossEpsilon, 1.0 - kLossEpsilon);
  return label == Label::target ? -std::log(p) : -std::log(1.0 - p);
}

// The same loss evaluated from the logit, log(1 + exp(-z)) for targets and
// log(1 + exp(z)) otherwise, without forming 1 - p. Agrees with bce_loss
// wherever the clamp is inactive (|z| < ~27.6); used for training and
// derivative checks because its derivative is exactly p - t everywhere.
inline double bce_loss_from_logit(double logit, Label label) {
  const double z = label == Label::target ? -logit : logit;
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Hidden-layer nonlinearity. `identity` exists for derivative checks on a
// linear network; trained models use relu.
enum class Activation : std::uint32_t { relu = 0, identity = 1 };

// Parameter tensors in canonical (serialization) order.
enum class Tensor : std::size_t {
  spatial_weights,
  spatial_bias,
  temporal1_weights,
  temporal1_bias,
  temporal2_weights,
  temporal2_bias,
  fc_weights,
  fc_bias,
};

inline constexpr std::size_t kTensorCount = 8;

// Spatial conv (kernels span all channels, one time step) -> act ->
// temporal conv over all spatial maps -> act -> max-pool -> temporal conv ->
// act -> max-pool -> fully connected to one logit -> sigmoid.
struct Architecture {
  std::size_t n_channels = 0;
  std::size_t n_samples = 0;
  std::size_t spatial_kernels = 8;
  std::size_t temporal1_kernels = 16;
  std::size_t temporal1_length = 11;
  std::size_t pool1_width = 2;
  std::size_t temporal2_kernels = 16;
  std::size_t temporal2_length = 11;
  std::size_t pool2_width = 2;
  Activation activation = Activation::relu;

  static Architecture standard(std::size_t channels, std::size_t samples) {
    Architecture arch;
    arch.n_channels = channels;
    arch.n_samples = samples;
    return arch;
  }

  // Reduced temporal stages that fit 20-sample inputs; used for gradient checks.
  static Architecture compact(std::size_t channels, std::size_t samples) {
    Architecture arch = standard(channels, samples);
    arch.spatial_kernels = 4;
    arch.temporal1_kernels = 4;
    arch.temporal1_length = 5;
    arch.temporal2_kernels = 4;
    arch.temporal2_length = 3;
    return arch;
  }

  std::size_t temporal1_out() const { return n_samples - temporal1_length + 1; }
  std::size_t pool1_out() const { return temporal1_out() / pool1_width; }
  std::size_t temporal2_out() const { return pool1_out() - temporal2_length + 1; }
  std::size_t pool2_out() const { return temporal2_out() / pool2_width; }
  std::size_t fc_inputs() const { return temporal2_kernels * pool2_out(); }

  std::array<std::size_t, kTensorCount> tensor_sizes() const {
    return {spatial_kernels * n_channels,
            spatial_kernels,
            temporal1_kernels * spatial_kernels * temporal1_length,
            temporal1_kernels,
            temporal2_kernels * temporal1_kernels * temporal2_length,
            temporal2_kernels,
            fc_inputs(),
            1};
  }

  std::size_t tensor_offset(Tensor tensor) const {
    const auto sizes = tensor_sizes();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(tensor); ++i) offset += sizes[i];
    return offset;
  }

  std::size_t parameter_count() const {
    std::size_t total = 0;
    for (std::size_t s : tensor_sizes()) total += s;
    return total;
  }

  void validate() const {
    require(n_channels >= 1, ErrorCode::dimension, "architecture needs at least one channel");
    require(spatial_kernels >= 1 && temporal1_kernels >= 1 && temporal2_kernels >= 1,
            ErrorCode::dimension, "kernel counts must be positive");
    require(temporal1_length >= 1 && temporal2_length >= 1 && pool1_width >= 1 &&
                pool2_width >= 1,
            ErrorCode::dimension, "kernel lengths and pool widths must be positive");
    require(activation == Activation::relu || activation == Activation::identity,
            ErrorCode::malformed, "unknown activation");
    const bool fits = n_samples >= temporal1_length && pool1_out() >= temporal2_length &&
                      pool2_out() >= 1;
    require(fits, ErrorCode::dimension,
            "n_samples=" + std::to_string(n_samples) +
                " too small: two conv+pool stages must leave at least one time point");
  }

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Flat parameter-shaped buffer laid out in canonical tensor order.
struct ParameterBuffer {
  Architecture arch;
  std::vector<double> values;

  ParameterBuffer() = default;
  explicit ParameterBuffer(const Architecture& a) : arch(a), values(a.parameter_count(), 0.0) {}

  std::span<double> tensor(Tensor t) {
    return {values.data() + arch.tensor_offset(t), arch.tensor_sizes()[static_cast<std::size_t>(t)]};
  }
  std::span<const double> tensor(Tensor t) const {
    return {values.data() + arch.tensor_offset(t), arch.tensor_sizes()[static_cast<std::size_t>(t)]};
  }

  friend bool operator==(const ParameterBuffer&, const ParameterBuffer&) = default;
};

struct Network : ParameterBuffer {
  using ParameterBuffer::ParameterBuffer;

  double& spatial_weight(std::size_t k, std::size_t c) {
    return tensor(Tensor::spatial_weights)[k * arch.n_channels + c];
  }
  double& temporal1_weight(std::size_t k, std::size_t m, std::size_t j) {
    return tensor(Tensor::temporal1_weights)[(k * arch.spatial_kernels + m) * arch.temporal1_length + j];
  }
  double& temporal2_weight(std::size_t k, std::size_t m, std::size_t j) {
    return tensor(Tensor::temporal2_weights)[(k * arch.temporal1_kernels + m) * arch.temporal2_length + j];
  }
  double& fc_bias() { return tensor(Tensor::fc_bias)[0]; }
};

struct Gradients : ParameterBuffer {
  using ParameterBuffer::ParameterBuffer;

  Gradients& operator+=(const Gradients& other) {
    require(arch == other.arch, ErrorCode::dimension, "gradient shapes differ");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
    return *this;
  }

  Gradients& operator*=(double factor) {
    for (double& v : values) v *= factor;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

namespace detail {

inline std::uint64_t fingerprint(const ParameterBuffer& params) {
  std::uint64_t hash = 0xCBF29CE484222325ULL;
  for (double v : params.values) {
    hash ^= std::bit_cast<std::uint64_t>(v);
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

inline double activate(Activation act, double z) { return act == Activation::relu ? relu(z) : z; }

inline double activation_slope(Activation act, double z) {
  return act == Activation::identity || z > 0.0 ? 1.0 : 0.0;
}

inline Matrix activate(Activation act, Matrix z) {
  for (double& v : z.data) v = activate(act, v);
  return z;
}

// Non-overlapping max-pool along columns; argmax holds the winning column.
inline Matrix max_pool(const Matrix& x, std::size_t width, std::vector<std::size_t>& argmax) {
  Matrix out(x.rows, x.cols / width);
  argmax.assign(out.rows * out.cols, 0);
  for (std::size_t r = 0; r < out.rows; ++r) {
    for (std::size_t c = 0; c < out.cols; ++c) {
      std::size_t best = c * width;
      for (std::size_t j = 1; j < width; ++j)
        if (x(r, c * width + j) > x(r, best)) best = c * width + j;
      out(r, c) = x(r, best);
      argmax[r * out.cols + c] = best;
    }
  }
  return out;
}

// Applies a bank of full-height kernels: kernel k has shape in.rows x length
// and produces output row k.
inline Matrix conv_bank(const Matrix& in, std::span<const double> weights,
                        std::span<const double> bias, std::size_t length) {
  const std::size_t n_kernels = bias.size();
  Matrix out(n_kernels, in.cols - length + 1);
  for (std::size_t k = 0; k < n_kernels; ++k) {
    Matrix kernel(in.rows, length,
                  std::vector<double>(weights.begin() + static_cast<std::ptrdiff_t>(k * in.rows * length),
                                      weights.begin() + static_cast<std::ptrdiff_t>((k + 1) * in.rows * length)));
    const Matrix row = conv2d_valid(in, kernel, bias[k]);
    std::copy(row.data.begin(), row.data.end(), out.row(k).begin());
  }
  return out;
}

// Backward of conv_bank given upstream gradient of its output.
inline void conv_bank_backward(const Matrix& in, std::span<const double> weights, std::size_t length,
                               const Matrix& d_out, std::span<double> d_weights,
                               std::span<double> d_bias, Matrix* d_in) {
  for (std::size_t k = 0; k < d_out.rows; ++k) {
    double bias_acc = 0.0;
    for (std::size_t t = 0; t < d_out.cols; ++t) bias_acc += d_out(k, t);
    d_bias[k] += bias_acc;
    for (std::size_t m = 0; m < in.rows; ++m) {
      const std::size_t base = (k * in.rows + m) * length;
      for (std::size_t j = 0; j < length; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < d_out.cols; ++t) acc += d_out(k, t) * in(m, t + j);
        d_weights[base + j] += acc;
        if (d_in != nullptr) {
          const double w = weights[base + j];
          for (std::size_t t = 0; t < d_out.cols; ++t) (*d_in)(m, t + j) += d_out(k, t) * w;
        }
      }
    }
  }
}

inline Matrix pool_backward(const Matrix& d_pooled, const std::vector<std::size_t>& argmax,
                            std::size_t rows, std::size_t cols) {
  Matrix d(rows, cols);
  for (std::size_t r = 0; r < d_pooled.rows; ++r)
    for (std::size_t c = 0; c < d_pooled.cols; ++c)
      d(r, argmax[r * d_pooled.cols + c]) += d_pooled(r, c);
  return d;
}

inline Matrix activation_backward(Activation act, const Matrix& pre, Matrix d_act) {
  for (std::size_t i = 0; i < d_act.data.size(); ++i)
    d_act.data[i] *= activation_slope(act, pre.data[i]);
  return d_act;
}

}  // namespace detail

// Everything backward() needs from a forward pass.
struct ForwardCache {
  Architecture arch;
  std::uint64_t parameter_fingerprint = 0;
  Matrix input;           // channels x samples
  Matrix spatial_pre;     // spatial_kernels x samples
  Matrix spatial_act;
  Matrix temporal1_pre;   // temporal1_kernels x temporal1_out
  Matrix temporal1_act;
  Matrix pool1;           // temporal1_kernels x pool1_out
  std::vector<std::size_t> pool1_argmax;
  Matrix temporal2_pre;   // temporal2_kernels x temporal2_out
  Matrix temporal2_act;
  Matrix pool2;           // temporal2_kernels x pool2_out
  std::vector<std::size_t> pool2_argmax;
  double logit = 0.0;
  double probability = 0.5;
};

inline Matrix epoch_matrix(const EpochSet& set, std::size_t e) {
  const auto values = set.epoch(e);
  return Matrix(set.n_channels, set.n_samples, std::vector<double>(values.begin(), values.end()));
}

inline ForwardCache forward(const Network& net, const Matrix& epoch) {
  const Architecture& a = net.arch;
  require(epoch.rows == a.n_channels && epoch.cols == a.n_samples, ErrorCode::dimension,
          "epoch is " + std::to_string(epoch.rows) + "x" + std::to_string(epoch.cols) +
              ", network expects " + std::to_string(a.n_channels) + "x" +
              std::to_string(a.n_samples));
  require(net.values.size() == a.parameter_count(), ErrorCode::dimension,
          "parameter count does not match architecture");

  ForwardCache cache;
  cache.arch = a;
  cache.parameter_fingerprint = detail::fingerprint(net);
  cache.input = epoch;

  // Spatial layer: kernel k is n_channels x 1, collapsing channels.
  cache.spatial_pre = Matrix(a.spatial_kernels, a.n_samples);
  const auto sw = net.tensor(Tensor::spatial_weights);
  const auto sb = net.tensor(Tensor::spatial_bias);
  for (std::size_t k = 0; k < a.spatial_kernels; ++k) {
    Matrix kernel(a.n_channels, 1,
                  std::vector<double>(sw.begin() + static_cast<std::ptrdiff_t>(k * a.n_channels),
                                      sw.begin() + static_cast<std::ptrdiff_t>((k + 1) * a.n_channels)));
    const Matrix map = conv2d_valid(epoch, kernel, sb[k]);
    std::copy(map.data.begin(), map.data.end(), cache.spatial_pre.row(k).begin());
  }
  cache.spatial_act = detail::activate(a.activation, cache.spatial_pre);

  cache.temporal1_pre = detail::conv_bank(cache.spatial_act, net.tensor(Tensor::temporal1_weights),
                                          net.tensor(Tensor::temporal1_bias), a.temporal1_length);
  cache.temporal1_act = detail::activate(a.activation, cache.temporal1_pre);
  cache.pool1 = detail::max_pool(cache.temporal1_act, a.pool1_width, cache.pool1_argmax);

  cache.temporal2_pre = detail::conv_bank(cache.pool1, net.tensor(Tensor::temporal2_weights),
                                          net.tensor(Tensor::temporal2_bias), a.temporal2_length);
  cache.temporal2_act = detail::activate(a.activation, cache.temporal2_pre);
  cache.pool2 = detail::max_pool(cache.temporal2_act, a.pool2_width, cache.pool2_argmax);

  const auto fw = net.tensor(Tensor::fc_weights);
  double logit = net.tensor(Tensor::fc_bias)[0];
  for (std::size_t i = 0; i < fw.size(); ++i) logit += fw[i] * cache.pool2.data[i];
  cache.logit = logit;
  cache.probability = sigmoid(logit);
  return cache;
}

inline double predict(const Network& net, const Matrix& epoch) {
  return forward(net, epoch).probability;
}

// Exact gradient of bce_loss(forward(net, input), label) for every parameter.
inline Gradients backward(const Network& net, const ForwardCache& cache, Label label) {
  const Architecture& a = net.arch;
  require(cache.arch == a && cache.parameter_fingerprint == detail::fingerprint(net),
          ErrorCode::stale_cache, "forward cache does not belong to this network state");

  Gradients grads(a);
  const double target = label == Label::target ? 1.0 : 0.0;
  const double d_logit = cache.probability - target;

  auto g_fw = grads.tensor(Tensor::fc_weights);
  const auto fw = net.tensor(Tensor::fc_weights);
  Matrix d_pool2(cache.pool2.rows, cache.pool2.cols);
  for (std::size_t i = 0; i < g_fw.size(); ++i) {
    g_fw[i] = d_logit * cache.pool2.data[i];
    d_pool2.data[i] = d_logit * fw[i];
  }
  grads.tensor(Tensor::fc_bias)[0] = d_logit;

  Matrix d_t2 = detail::activation_backward(
      a.activation, cache.temporal2_pre,
      detail::pool_backward(d_pool2, cache.pool2_argmax, cache.temporal2_act.rows,
                            cache.temporal2_act.cols));
  Matrix d_pool1(cache.pool1.rows, cache.pool1.cols);
  detail::conv_bank_backward(cache.pool1, net.tensor(Tensor::temporal2_weights), a.temporal2_length,
                             d_t2, grads.tensor(Tensor::temporal2_weights),
                             grads.tensor(Tensor::temporal2_bias), &d_pool1);

  Matrix d_t1 = detail::activation_backward(
      a.activation, cache.temporal1_pre,
      detail::pool_backward(d_pool1, cache.pool1_argmax, cache.temporal1_act.rows,
                            cache.temporal1_act.cols));
  Matrix d_spatial_act(cache.spatial_act.rows, cache.spatial_act.cols);
  detail::conv_bank_backward(cache.spatial_act, net.tensor(Tensor::temporal1_weights),
                             a.temporal1_length, d_t1, grads.tensor(Tensor::temporal1_weights),
                             grads.tensor(Tensor::temporal1_bias), &d_spatial_act);

  const Matrix d_spatial =
      detail::activation_backward(a.activation, cache.spatial_pre, std::move(d_spatial_act));
  detail::conv_bank_backward(cache.input, net.tensor(Tensor::spatial_weights), 1,
                             d_spatial, grads.tensor(Tensor::spatial_weights),
                             grads.tensor(Tensor::spatial_bias), nullptr);
  return grads;
}

// p <- p - lr * g for every parameter.
inline Network sgd_step(Network net, const Gradients& grads, double learning_rate) {
  require(net.arch == grads.arch && net.values.size() == grads.values.size(), ErrorCode::dimension,
          "gradient shape does not match network");
  require(grads.all_finite(), ErrorCode::non_finite, "non-finite gradient");
  for (std::size_t i = 0; i < net.values.size(); ++i)
    net.values[i] -= learning_rate * grads.values[i];
  return net;
}

// Weights ~ Normal(0, sqrt(2 / fan_in)) per layer, biases zero. Draws come
// from one SplitMix64 stream seeded with `seed`, in canonical tensor order.
inline Network init_network(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Network net(arch);
  SplitMix64 rng(seed);
  const auto fill = [&](Tensor t, std::size_t fan_in) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& w : net.tensor(t)) w = rng.normal(0.0, stddev);
  };
  fill(Tensor::spatial_weights, arch.n_channels);
  fill(Tensor::temporal1_weights, arch.spatial_kernels * arch.temporal1_length);
  fill(Tensor::temporal2_weights, arch.temporal1_kernels * arch.temporal2_length);
  fill(Tensor::fc_weights, arch.fc_inputs());
  return net;
}

inline Network init_network(std::size_t n_channels, std::size_t n_samples, std::uint64_t seed) {
  return init_network(Architecture::standard(n_channels, n_samples), seed);
}

struct BatchResult {
  Gradients gradients;  // mean over the batch
  double mean_loss = 0.0;
};

// Mean loss and mean gradient over `indices`, summed in the given order.
inline BatchResult batch_gradients(const Network& net, const EpochSet& set,
                                   std::span<const std::size_t> indices) {
  require(!indices.empty(), ErrorCode::invariant, "empty batch");
  BatchResult result{Gradients(net.arch), 0.0};
  for (std::size_t idx : indices) {
    require(idx < set.n_epochs, ErrorCode::out_of_range, "batch index beyond epoch set");
    const ForwardCache cache = forward(net, epoch_matrix(set, idx));
    result.mean_loss += bce_loss_from_logit(cache.logit, set.labels[idx]);
    result.gradients += backward(net, cache, set.labels[idx]);
  }
  const double scale = 1.0 / static_cast<double>(indices.size());
  result.gradients *= scale;
  result.mean_loss *= scale;
  return result;
}

struct FiniteDiffReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Relative error floor: gradients below this magnitude are compared in
// absolute terms, where round-off of the central difference (~1e-10)
// would otherwise dominate.
inline constexpr double kGradientScaleFloor = 1e-3;

inline double gradient_relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kGradientScaleFloor});
  return std::abs(analytic - numeric) / scale;
}

// Compares backward() with central differences over every parameter.
inline FiniteDiffReport finite_diff_check(const Network& net, const Matrix& epoch, Label label,
                                          double step) {
  const Gradients analytic = backward(net, forward(net, epoch), label);
  FiniteDiffReport report;
  Network probe = net;
  for (std::size_t i = 0; i < net.values.size(); ++i) {
    const double original = net.values[i];
    probe.values[i] = original + step;
    const double up = bce_loss_from_logit(forward(probe, epoch).logit, label);
    probe.values[i] = original - step;
    const double down = bce_loss_from_logit(forward(probe, epoch).logit, label);
    probe.values[i] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double err = gradient_relative_error(analytic.values[i], numeric);
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = err;
      report.worst_parameter = i;
      report.worst_analytic = analytic.values[i];
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace erp
