#pragma once

// Minimal NHWC layers with explicit forward/backward passes. Every layer
// caches what its backward pass needs from the most recent forward call.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "naturamap/tensor.hpp"

namespace naturamap::nn {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<Matrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const Matrix<T>>;

enum class Mode { kTrain, kEval };

// A named tensor. Trainable parameters carry a gradient of the same shape;
// buffers (batch-norm running statistics) leave it empty.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

template <typename T>
using ParamRefs = std::vector<Parameter<T>*>;

inline void require_rank4(const Shape& s, const char* who) {
  if (s.size() != 4) {
    throw ShapeError(std::string(who) + " expects N x H x W x C input, got " +
                     shape_to_string(s));
  }
}

template <typename T>
Parameter<T> make_param(std::string name, Shape shape, T fill = T{0}) {
  Parameter<T> p{std::move(name), Tensor<T>(shape, fill), Tensor<T>(shape)};
  return p;
}

template <typename T>
Parameter<T> make_buffer(std::string name, Shape shape, T fill) {
  return Parameter<T>{std::move(name), Tensor<T>(std::move(shape), fill), {}};
}

// ---------------------------------------------------------------------------
// k x k convolution, stride 1, zero "same" padding (k odd).
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in, std::size_t out,
         std::size_t kernel)
      : weight(make_param<T>(name + ".weight", {kernel * kernel * in, out})),
        bias(make_param<T>(name + ".bias", {out})),
        in_(in),
        out_(out),
        k_(kernel) {}

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t kernel() const { return k_; }

  Tensor<T> forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "conv2d");
    if (x.dim(3) != in_) {
      throw ShapeError(weight.name + ": expected " + std::to_string(in_) +
                       " input channels, got " + shape_to_string(x.shape()));
    }
    input_ = x;
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2);
    Tensor<T> y({N, H, W, out_});
    ConstMatrixMap<T> w(weight.value.data(), k_ * k_ * in_, out_);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.value.data(),
                                                            out_);
    for (std::size_t n = 0; n < N; ++n) {
      const T* cols = columns(x, n);
      ConstMatrixMap<T> c(cols, H * W, k_ * k_ * in_);
      MatrixMap<T> out(y.data() + n * H * W * out_, H * W, out_);
      out.noalias() = c * w;
      out.rowwise() += b;
    }
    return y;
  }

  // Accumulates parameter gradients; returns dL/dx when requested.
  Tensor<T> backward(const Tensor<T>& dy, bool want_input_grad = true) {
    const std::size_t N = input_.dim(0), H = input_.dim(1), W = input_.dim(2);
    const std::size_t K = k_ * k_ * in_;
    MatrixMap<T> dw(weight.grad.data(), K, out_);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bias.grad.data(), out_);
    ConstMatrixMap<T> w(weight.value.data(), K, out_);
    Tensor<T> dx;
    if (want_input_grad) dx = Tensor<T>(input_.shape());
    Matrix<T> dcols;
    for (std::size_t n = 0; n < N; ++n) {
      ConstMatrixMap<T> g(dy.data() + n * H * W * out_, H * W, out_);
      const T* cols = columns(input_, n);
      ConstMatrixMap<T> c(cols, H * W, K);
      dw.noalias() += c.transpose() * g;
      db += g.colwise().sum();
      if (want_input_grad) {
        dcols.noalias() = g * w.transpose();
        scatter_columns(dcols.data(), dx, n);
      }
    }
    return dx;
  }

  void parameters(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  // Row (y, x) holds the k x k x C neighbourhood, ordered (dy, dx, c).
  const T* columns(const Tensor<T>& x, std::size_t n) {
    const std::size_t H = x.dim(1), W = x.dim(2), C = in_;
    const T* src = x.data() + n * H * W * C;
    if (k_ == 1) return src;
    const std::size_t K = k_ * k_ * C;
    scratch_.assign(H * W * K, T{0});
    const long r = static_cast<long>(k_ / 2);
    for (std::size_t yy = 0; yy < H; ++yy) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        T* row = scratch_.data() + (yy * W + xx) * K;
        for (long dy = -r; dy <= r; ++dy) {
          const long sy = static_cast<long>(yy) + dy;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          for (long dx = -r; dx <= r; ++dx) {
            const long sx = static_cast<long>(xx) + dx;
            if (sx < 0 || sx >= static_cast<long>(W)) continue;
            const T* p = src + (static_cast<std::size_t>(sy) * W +
                                static_cast<std::size_t>(sx)) * C;
            std::copy(p, p + C,
                      row + (static_cast<std::size_t>(dy + r) * k_ +
                             static_cast<std::size_t>(dx + r)) * C);
          }
        }
      }
    }
    return scratch_.data();
  }

  void scatter_columns(const T* dcols, Tensor<T>& dx, std::size_t n) const {
    const std::size_t H = dx.dim(1), W = dx.dim(2), C = in_;
    T* dst = dx.data() + n * H * W * C;
    const std::size_t K = k_ * k_ * C;
    const long r = static_cast<long>(k_ / 2);
    for (std::size_t yy = 0; yy < H; ++yy) {
      for (std::size_t xx = 0; xx < W; ++xx) {
        const T* row = dcols + (yy * W + xx) * K;
        for (long dy = -r; dy <= r; ++dy) {
          const long sy = static_cast<long>(yy) + dy;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          for (long dx = -r; dx <= r; ++dx) {
            const long sx = static_cast<long>(xx) + dx;
            if (sx < 0 || sx >= static_cast<long>(W)) continue;
            T* p = dst + (static_cast<std::size_t>(sy) * W +
                          static_cast<std::size_t>(sx)) * C;
            const T* g = row + (static_cast<std::size_t>(dy + r) * k_ +
                                static_cast<std::size_t>(dx + r)) * C;
            for (std::size_t c = 0; c < C; ++c) p[c] += g[c];
          }
        }
      }
    }
  }

  std::size_t in_ = 0, out_ = 0, k_ = 1;
  Tensor<T> input_;
  AlignedVector<T> scratch_;
};

// ---------------------------------------------------------------------------
// 2 x 2 transposed convolution with stride 2 (exact spatial doubling).
template <typename T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(const std::string& name, std::size_t in, std::size_t out)
      : weight(make_param<T>(name + ".weight", {in, 4 * out})),
        bias(make_param<T>(name + ".bias", {out})),
        in_(in),
        out_(out) {}

  std::size_t in_channels() const { return in_; }

  Tensor<T> forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "conv_transpose");
    if (x.dim(3) != in_) {
      throw ShapeError(weight.name + ": expected " + std::to_string(in_) +
                       " input channels, got " + shape_to_string(x.shape()));
    }
    input_ = x;
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2);
    ConstMatrixMap<T> xm(x.data(), N * H * W, in_);
    ConstMatrixMap<T> w(weight.value.data(), in_, 4 * out_);
    Matrix<T> blocks = xm * w;
    Tensor<T> y({N, 2 * H, 2 * W, out_});
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          const T* blk = blocks.data() + ((n * H + i) * W + j) * 4 * out_;
          for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t oy = 2 * i + q / 2, ox = 2 * j + q % 2;
            T* dst = y.data() + ((n * 2 * H + oy) * 2 * W + ox) * out_;
            for (std::size_t c = 0; c < out_; ++c) {
              dst[c] = blk[q * out_ + c] + bias.value[c];
            }
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t N = input_.dim(0), H = input_.dim(1), W = input_.dim(2);
    Matrix<T> gblocks(N * H * W, 4 * out_);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < H; ++i) {
        for (std::size_t j = 0; j < W; ++j) {
          T* blk = gblocks.data() + ((n * H + i) * W + j) * 4 * out_;
          for (std::size_t q = 0; q < 4; ++q) {
            const std::size_t oy = 2 * i + q / 2, ox = 2 * j + q % 2;
            const T* src = dy.data() + ((n * 2 * H + oy) * 2 * W + ox) * out_;
            for (std::size_t c = 0; c < out_; ++c) {
              blk[q * out_ + c] = src[c];
              bias.grad[c] += src[c];
            }
          }
        }
      }
    }
    ConstMatrixMap<T> xm(input_.data(), N * H * W, in_);
    MatrixMap<T> dw(weight.grad.data(), in_, 4 * out_);
    dw.noalias() += xm.transpose() * gblocks;
    ConstMatrixMap<T> w(weight.value.data(), in_, 4 * out_);
    Tensor<T> dx(input_.shape());
    MatrixMap<T> dxm(dx.data(), N * H * W, in_);
    dxm.noalias() = gblocks * w.transpose();
    return dx;
  }

  void parameters(ParamRefs<T>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Per-channel batch normalization over N x H x W.
template <typename T>
class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, std::size_t channels)
      : gamma(make_param<T>(name + ".gamma", {channels}, T{1})),
        beta(make_param<T>(name + ".beta", {channels})),
        running_mean(make_buffer<T>(name + ".running_mean", {channels}, T{0})),
        running_var(make_buffer<T>(name + ".running_var", {channels}, T{1})),
        c_(channels) {}

  // Train mode normalizes with batch statistics and updates the running
  // estimates; eval mode is a fixed affine map of the running estimates.
  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    require_rank4(x.shape(), "batch_norm");
    if (x.dim(3) != c_) throw ShapeError(gamma.name + ": channel mismatch");
    mode_ = mode;
    const std::size_t M = x.size() / c_;
    std::vector<double> mean(c_, 0.0), var(c_, 0.0);
    if (mode == Mode::kTrain) {
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t c = 0; c < c_; ++c) mean[c] += x[i * c_ + c];
      }
      for (auto& m : mean) m /= static_cast<double>(M);
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t c = 0; c < c_; ++c) {
          const double d = x[i * c_ + c] - mean[c];
          var[c] += d * d;
        }
      }
      for (auto& v : var) v /= static_cast<double>(M);
      const double unbias =
          M > 1 ? static_cast<double>(M) / static_cast<double>(M - 1) : 1.0;
      for (std::size_t c = 0; c < c_; ++c) {
        running_mean.value[c] = static_cast<T>(
            (1.0 - kMomentum) * running_mean.value[c] + kMomentum * mean[c]);
        running_var.value[c] = static_cast<T>((1.0 - kMomentum) * running_var.value[c] +
                                              kMomentum * var[c] * unbias);
      }
    } else {
      for (std::size_t c = 0; c < c_; ++c) {
        mean[c] = running_mean.value[c];
        var[c] = running_var.value[c];
      }
    }
    inv_std_.resize(c_);
    std::vector<T> scale(c_), shift(c_);
    for (std::size_t c = 0; c < c_; ++c) {
      inv_std_[c] = static_cast<T>(1.0 / std::sqrt(var[c] + kEps));
      scale[c] = gamma.value[c] * inv_std_[c];
      shift[c] = beta.value[c] - static_cast<T>(mean[c]) * scale[c];
    }
    xhat_ = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t c = 0; c < c_; ++c) {
        const std::size_t k = i * c_ + c;
        xhat_[k] = (x[k] - static_cast<T>(mean[c])) * inv_std_[c];
        y[k] = x[k] * scale[c] + shift[c];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    const std::size_t M = dy.size() / c_;
    std::vector<double> sum_dy(c_, 0.0), sum_dy_xhat(c_, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t c = 0; c < c_; ++c) {
        const std::size_t k = i * c_ + c;
        sum_dy[c] += dy[k];
        sum_dy_xhat[c] += dy[k] * xhat_[k];
      }
    }
    for (std::size_t c = 0; c < c_; ++c) {
      gamma.grad[c] += static_cast<T>(sum_dy_xhat[c]);
      beta.grad[c] += static_cast<T>(sum_dy[c]);
    }
    Tensor<T> dx(dy.shape());
    if (mode_ == Mode::kEval) {
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t c = 0; c < c_; ++c) {
          const std::size_t k = i * c_ + c;
          dx[k] = dy[k] * gamma.value[c] * inv_std_[c];
        }
      }
      return dx;
    }
    const T inv_m = static_cast<T>(1.0 / static_cast<double>(M));
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t c = 0; c < c_; ++c) {
        const std::size_t k = i * c_ + c;
        dx[k] = gamma.value[c] * inv_std_[c] * inv_m *
                (static_cast<T>(M) * dy[k] - static_cast<T>(sum_dy[c]) -
                 xhat_[k] * static_cast<T>(sum_dy_xhat[c]));
      }
    }
    return dx;
  }

  void parameters(ParamRefs<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void buffers(ParamRefs<T>& out) {
    out.push_back(&running_mean);
    out.push_back(&running_var);
  }

  Parameter<T> gamma, beta, running_mean, running_var;

 private:
  std::size_t c_ = 0;
  Mode mode_ = Mode::kTrain;
  std::vector<T> inv_std_;
  Tensor<T> xhat_;
};

// ---------------------------------------------------------------------------
template <typename T>
class ReLU {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = v > T{0} ? v : T{0};
    output_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      if (!(output_[i] > T{0})) dx[i] = T{0};
    }
    return dx;
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> y = x;
    for (auto& v : y.values()) v = T{1} / (T{1} + std::exp(-v));
    output_ = y;
    return y;
  }
  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] *= output_[i] * (T{1} - output_[i]);
    }
    return dx;
  }

 private:
  Tensor<T> output_;
};

// 2 x 2 max pooling, stride 2. Odd trailing rows/columns are dropped.
template <typename T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "max_pool");
    in_shape_ = x.shape();
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const std::size_t Ho = H / 2, Wo = W / 2;
    if (Ho == 0 || Wo == 0) {
      throw ShapeError("max_pool input too small: " + shape_to_string(x.shape()));
    }
    Tensor<T> y({N, Ho, Wo, C});
    argmax_.assign(y.size(), 0);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < Ho; ++i) {
        for (std::size_t j = 0; j < Wo; ++j) {
          for (std::size_t c = 0; c < C; ++c) {
            std::size_t best = ((n * H + 2 * i) * W + 2 * j) * C + c;
            for (std::size_t q = 1; q < 4; ++q) {
              const std::size_t k =
                  ((n * H + 2 * i + q / 2) * W + 2 * j + q % 2) * C + c;
              if (x[k] > x[best]) best = k;
            }
            const std::size_t o = ((n * Ho + i) * Wo + j) * C + c;
            y[o] = x[best];
            argmax_[o] = best;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

// Nearest-neighbour 2x upsampling.
template <typename T>
class Upsample2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    require_rank4(x.shape(), "upsample");
    in_shape_ = x.shape();
    const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    Tensor<T> y({N, 2 * H, 2 * W, C});
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < 2 * H; ++i) {
        for (std::size_t j = 0; j < 2 * W; ++j) {
          const T* src = x.data() + ((n * H + i / 2) * W + j / 2) * C;
          std::copy(src, src + C, y.data() + ((n * 2 * H + i) * 2 * W + j) * C);
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) const {
    Tensor<T> dx(in_shape_);
    const std::size_t N = in_shape_[0], H = in_shape_[1], W = in_shape_[2],
                      C = in_shape_[3];
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t i = 0; i < 2 * H; ++i) {
        for (std::size_t j = 0; j < 2 * W; ++j) {
          const T* g = dy.data() + ((n * 2 * H + i) * 2 * W + j) * C;
          T* dst = dx.data() + ((n * H + i / 2) * W + j / 2) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += g[c];
        }
      }
    }
    return dx;
  }

 private:
  Shape in_shape_;
};

// Channel-wise concatenation of N x H x W x C_i tensors with equal N, H, W.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  const Shape& s0 = parts.front()->shape();
  std::size_t C = 0;
  for (const auto* p : parts) {
    require_rank4(p->shape(), "concat");
    if (p->dim(0) != s0[0] || p->dim(1) != s0[1] || p->dim(2) != s0[2]) {
      throw ShapeError("concat spatial mismatch: " + shape_to_string(s0) +
                       " vs " + shape_to_string(p->shape()));
    }
    C += p->dim(3);
  }
  const std::size_t M = s0[0] * s0[1] * s0[2];
  Tensor<T> y({s0[0], s0[1], s0[2], C});
  std::size_t off = 0;
  for (const auto* p : parts) {
    const std::size_t c = p->dim(3);
    for (std::size_t i = 0; i < M; ++i) {
      std::copy(p->data() + i * c, p->data() + (i + 1) * c,
                y.data() + i * C + off);
    }
    off += c;
  }
  return y;
}

// Inverse of concat_channels for gradients.
template <typename T>
std::vector<Tensor<T>> split_channels(const Tensor<T>& g,
                                      const std::vector<std::size_t>& widths) {
  const std::size_t C = g.dim(3);
  const std::size_t M = g.size() / C;
  std::vector<Tensor<T>> out;
  std::size_t off = 0;
  for (std::size_t c : widths) {
    Tensor<T> part({g.dim(0), g.dim(1), g.dim(2), c});
    for (std::size_t i = 0; i < M; ++i) {
      std::copy(g.data() + i * C + off, g.data() + i * C + off + c,
                part.data() + i * c);
    }
    out.push_back(std::move(part));
    off += c;
  }
  return out;
}

}  // namespace naturamap::nn
