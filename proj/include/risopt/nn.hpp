#pragma once

// Fully convolutional image-to-image network: stacked same-padded, stride-1
// 2-D convolutions with tanh activations and optional inverted dropout.
//
// Feature maps are held channel-major (C x H*W) so that each convolution is a
// single GEMM against an im2col expansion of its input.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "risopt/error.hpp"
#include "risopt/tensor.hpp"

namespace risopt::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

enum class Mode { train, eval };

struct ConvSpec {
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
};

struct ConvLayer {
  ConvSpec spec;
  Tensor weight;  // [out, in, kh, kw]
  Tensor bias;    // [out]
};

struct DropoutLayer {
  double rate = 0.2;
};

using Layer = std::variant<ConvLayer, DropoutLayer>;

/// Builder entry: a conv (kernel, out_channels) or a dropout (rate).
struct LayerSpec {
  enum class Kind { conv, dropout } kind;
  std::size_t kernel = 3;
  std::size_t out_channels = 1;
  double rate = 0.0;

  static LayerSpec conv(std::size_t k, std::size_t out) { return {Kind::conv, k, out, 0.0}; }
  static LayerSpec dropout(double r) { return {Kind::dropout, 0, 0, r}; }
};

struct Model {
  std::size_t in_channels = 2;
  std::vector<Layer> layers;

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (auto& l : layers)
      if (auto* c = std::get_if<ConvLayer>(&l)) {
        out.push_back(&c->weight);
        out.push_back(&c->bias);
      }
    return out;
  }
  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (const auto& l : layers)
      if (const auto* c = std::get_if<ConvLayer>(&l)) {
        out.push_back(&c->weight);
        out.push_back(&c->bias);
      }
    return out;
  }
  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : parameters()) n += t->size();
    return n;
  }
  std::size_t largest_kernel() const {
    std::size_t k = 1;
    for (const auto& l : layers)
      if (const auto* c = std::get_if<ConvLayer>(&l)) k = std::max({k, c->spec.kernel_h, c->spec.kernel_w});
    return k;
  }
};

/// Gradient tensors in the order of Model::parameters().
using Gradients = std::vector<Tensor>;

namespace detail {

// SplitMix64 finaliser; derives independent stream seeds.
inline std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Rows: (c, ky, kx) in weight order; columns: output pixels.
inline void im2col(const Matrix& in, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw, Matrix& col) {
  const std::size_t channels = static_cast<std::size_t>(in.rows());
  const long ph = static_cast<long>(kh / 2);
  const long pw = static_cast<long>(kw / 2);
  col.setZero(static_cast<Eigen::Index>(channels * kh * kw), static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < channels; ++c) {
    const double* src = in.data() + c * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* dst = col.data() + ((c * kh + ky) * kw + kx) * h * w;
        const long oy = static_cast<long>(ky) - ph;
        const long ox = static_cast<long>(kx) - pw;
        for (long y = 0; y < static_cast<long>(h); ++y) {
          const long sy = y + oy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const long x0 = std::max(0L, -ox);
          const long x1 = std::min(static_cast<long>(w), static_cast<long>(w) - ox);
          for (long x = x0; x < x1; ++x) dst[y * static_cast<long>(w) + x] = src[sy * static_cast<long>(w) + x + ox];
        }
      }
    }
  }
}

inline void col2im(const Matrix& col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh,
                   std::size_t kw, Matrix& out) {
  const long ph = static_cast<long>(kh / 2);
  const long pw = static_cast<long>(kw / 2);
  out.setZero(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(h * w));
  for (std::size_t c = 0; c < channels; ++c) {
    double* dst = out.data() + c * h * w;
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* src = col.data() + ((c * kh + ky) * kw + kx) * h * w;
        const long oy = static_cast<long>(ky) - ph;
        const long ox = static_cast<long>(kx) - pw;
        for (long y = 0; y < static_cast<long>(h); ++y) {
          const long sy = y + oy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const long x0 = std::max(0L, -ox);
          const long x1 = std::min(static_cast<long>(w), static_cast<long>(w) - ox);
          for (long x = x0; x < x1; ++x) dst[sy * static_cast<long>(w) + x + ox] += src[y * static_cast<long>(w) + x];
        }
      }
    }
  }
}

struct LayerCache {
  Matrix input;   // conv: input activations; dropout: unused
  Matrix output;  // conv: tanh output
  Matrix mask;    // dropout: scaled keep mask (train mode only)
};

struct ForwardCache {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<LayerCache> layers;
  Matrix output;
};

inline Matrix to_channel_major(const Tensor& input, std::size_t in_channels) {
  if (input.rank() != 3 || input.dim(2) != in_channels)
    throw DimensionError("model input must be H x W x " + std::to_string(in_channels) + ", got " +
                         shape_string(input.shape()));
  const std::size_t hw = input.dim(0) * input.dim(1);
  Matrix x(static_cast<Eigen::Index>(in_channels), static_cast<Eigen::Index>(hw));
  for (std::size_t p = 0; p < hw; ++p)
    for (std::size_t c = 0; c < in_channels; ++c) x(c, p) = input[p * in_channels + c];
  return x;
}

inline ForwardCache forward(const Model& model, const Tensor& input, Mode mode, std::uint64_t rng_seed,
                            bool keep_cache) {
  ForwardCache cache;
  cache.h = input.rank() == 3 ? input.dim(0) : 0;
  cache.w = input.rank() == 3 ? input.dim(1) : 0;
  Matrix x = to_channel_major(input, model.in_channels);
  const std::size_t k = model.largest_kernel();
  if (cache.h < k || cache.w < k) throw DimensionError("model input smaller than the largest kernel");

  if (keep_cache) cache.layers.resize(model.layers.size());
  Matrix col;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& layer = model.layers[li];
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const auto& s = conv->spec;
      if (static_cast<std::size_t>(x.rows()) != s.in_channels)
        throw DimensionError("layer " + std::to_string(li) + " expects " + std::to_string(s.in_channels) +
                             " channels, got " + std::to_string(x.rows()));
      im2col(x, cache.h, cache.w, s.kernel_h, s.kernel_w, col);
      ConstMatrixMap wmat(conv->weight.ptr(), static_cast<Eigen::Index>(s.out_channels),
                          static_cast<Eigen::Index>(s.in_channels * s.kernel_h * s.kernel_w));
      Matrix z(static_cast<Eigen::Index>(s.out_channels), col.cols());
      z.noalias() = wmat * col;
      for (std::size_t o = 0; o < s.out_channels; ++o) z.row(static_cast<Eigen::Index>(o)).array() += conv->bias[o];
      z = z.array().tanh().matrix();
      if (keep_cache) {
        cache.layers[li].input = std::move(x);
        cache.layers[li].output = z;
      }
      x = std::move(z);
    } else {
      const double rate = std::get<DropoutLayer>(layer).rate;
      if (mode == Mode::train && rate > 0.0) {
        std::mt19937_64 rng(mix(rng_seed ^ mix(li + 1)));
        const double scale = 1.0 / (1.0 - rate);
        Matrix mask(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = uniform01(rng) >= rate ? scale : 0.0;
        x = x.cwiseProduct(mask);
        if (keep_cache) cache.layers[li].mask = std::move(mask);
      }
    }
  }
  if (x.rows() != 1) throw DimensionError("model must end in a single output channel");
  cache.output = std::move(x);
  return cache;
}

inline Tensor to_image(const Matrix& out, std::size_t h, std::size_t w) {
  return Tensor({h, w}, std::vector<double>(out.data(), out.data() + out.size()));
}

}  // namespace detail

/// Glorot-uniform weights, zero biases.
inline Model make_model(std::size_t in_channels, const std::vector<LayerSpec>& specs, std::uint64_t seed) {
  Model model;
  model.in_channels = in_channels;
  std::mt19937_64 rng(detail::mix(seed));
  std::size_t channels = in_channels;
  for (const auto& s : specs) {
    if (s.kind == LayerSpec::Kind::dropout) {
      require(s.rate >= 0.0 && s.rate < 1.0, "dropout rate must lie in [0, 1)");
      model.layers.emplace_back(DropoutLayer{s.rate});
      continue;
    }
    require(s.kernel % 2 == 1, "same padding needs odd kernel sizes");
    ConvLayer c;
    c.spec = {s.kernel, s.kernel, channels, s.out_channels};
    c.weight = Tensor({s.out_channels, channels, s.kernel, s.kernel});
    c.bias = Tensor({s.out_channels});
    const double fan_in = static_cast<double>(channels * s.kernel * s.kernel);
    const double fan_out = static_cast<double>(s.out_channels * s.kernel * s.kernel);
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& v : c.weight.values()) v = (2.0 * detail::uniform01(rng) - 1.0) * limit;
    model.layers.emplace_back(std::move(c));
    channels = s.out_channels;
  }
  return model;
}

/// Layer chain 2 -> 4 -> 16 -> 32 -> drop -> 128 -> 64 -> 8 -> drop -> 4 -> 1.
inline std::vector<LayerSpec> reference_architecture(double dropout_rate = 0.2) {
  return {LayerSpec::conv(3, 4),   LayerSpec::conv(3, 16), LayerSpec::conv(3, 32), LayerSpec::dropout(dropout_rate),
          LayerSpec::conv(5, 128), LayerSpec::conv(5, 64), LayerSpec::conv(3, 8),  LayerSpec::dropout(dropout_rate),
          LayerSpec::conv(3, 4),   LayerSpec::conv(3, 1)};
}

inline Model make_reference_model(std::uint64_t seed) { return make_model(2, reference_architecture(), seed); }

/// Runs the network on an H x W x C input; returns the H x W output map.
inline Tensor model_forward(const Model& model, const Tensor& input, Mode mode, std::uint64_t rng_seed = 0) {
  auto cache = detail::forward(model, input, mode, rng_seed, false);
  return detail::to_image(cache.output, cache.h, cache.w);
}

inline double mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) throw DimensionError("mse_loss: shape mismatch");
  if (pred.size() == 0) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

struct BackwardResult {
  double loss = 0.0;
  Gradients grads;
};

/// Gradient of mse_loss(model_forward(input), target) with respect to every
/// parameter. The same seed reproduces the forward pass's dropout masks.
inline BackwardResult model_backward(const Model& model, const Tensor& input, const Tensor& target, Mode mode,
                                     std::uint64_t rng_seed = 0) {
  auto cache = detail::forward(model, input, mode, rng_seed, true);
  const std::size_t h = cache.h;
  const std::size_t w = cache.w;
  if (target.shape() != std::vector<std::size_t>{h, w}) throw DimensionError("model_backward: target shape mismatch");

  BackwardResult out;
  const double inv_count = 1.0 / static_cast<double>(h * w);
  Matrix grad(1, static_cast<Eigen::Index>(h * w));
  for (std::size_t p = 0; p < h * w; ++p) {
    const double d = cache.output(0, static_cast<Eigen::Index>(p)) - target[p];
    out.loss += d * d;
    grad(0, static_cast<Eigen::Index>(p)) = 2.0 * d * inv_count;
  }
  out.loss *= inv_count;

  // Gradients are produced back to front, then reversed into parameter order.
  std::vector<Tensor> reversed;
  Matrix col;
  Matrix dcol;
  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    auto& lc = cache.layers[li];
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const auto& s = conv->spec;
      Matrix dz = grad.cwiseProduct((1.0 - lc.output.array().square()).matrix());
      detail::im2col(lc.input, h, w, s.kernel_h, s.kernel_w, col);

      Tensor dw(conv->weight.shape());
      MatrixMap dw_map(dw.ptr(), static_cast<Eigen::Index>(s.out_channels), col.rows());
      dw_map.noalias() = dz * col.transpose();
      Tensor db(conv->bias.shape());
      for (std::size_t o = 0; o < s.out_channels; ++o) db[o] = dz.row(static_cast<Eigen::Index>(o)).sum();

      if (li > 0) {
        ConstMatrixMap wmat(conv->weight.ptr(), static_cast<Eigen::Index>(s.out_channels), col.rows());
        dcol.noalias() = wmat.transpose() * dz;
        detail::col2im(dcol, s.in_channels, h, w, s.kernel_h, s.kernel_w, grad);
      }
      reversed.push_back(std::move(db));
      reversed.push_back(std::move(dw));
    } else if (lc.mask.size() > 0) {
      grad = grad.cwiseProduct(lc.mask);
    }
  }
  out.grads.assign(std::make_move_iterator(reversed.rbegin()), std::make_move_iterator(reversed.rend()));
  return out;
}

}  // namespace risopt::nn
