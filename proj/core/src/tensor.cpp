#include "smokenet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "smokenet/errors.hpp"

namespace smokenet {

Shape::Shape(std::initializer_list<std::size_t> extents) : extents_(extents) {
  validate();
}

Shape::Shape(std::vector<std::size_t> extents) : extents_(std::move(extents)) {
  validate();
}

void Shape::validate() const {
  if (extents_.empty() || extents_.size() > 4) {
    throw ContractError("tensor rank must be 1..4, got " +
                        std::to_string(extents_.size()));
  }
  for (std::size_t e : extents_) {
    if (e == 0) throw ContractError("tensor extents must be >= 1: " + str());
  }
}

std::size_t Shape::elements() const {
  if (extents_.empty()) return 0;
  return std::accumulate(extents_.begin(), extents_.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < extents_.size(); ++i) {
    if (i) os << ',';
    os << extents_[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(shape_.elements(), fill) {
  if (shape_.rank() == 0) throw ContractError("tensor needs a shape");
}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (shape_.rank() == 0) throw ContractError("tensor needs a shape");
  if (data_.size() != shape_.elements()) {
    throw ContractError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_.str());
  }
}

float Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
  return data_[(c * shape_[1] + h) * shape_[2] + w];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape.elements() != data_.size()) {
    throw ContractError("cannot reshape " + shape_.str() + " to " +
                        shape.str());
  }
  return Tensor(std::move(shape), data_);
}

void ConvParams::validate() const {
  if (weights.rank() != 4 || weights.dim(2) != weights.dim(3)) {
    throw ContractError("conv weights must be (out, in, k, k), got " +
                        weights.shape().str());
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ContractError("conv bias " + bias.shape().str() +
                        " does not match out_channels " +
                        std::to_string(weights.dim(0)));
  }
  if (stride < 1) throw ContractError("conv stride must be >= 1");
}

void DenseParams::validate() const {
  if (weights.rank() != 2) {
    throw ContractError("dense weights must be (out, in), got " +
                        weights.shape().str());
  }
  if (bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
    throw ContractError("dense bias " + bias.shape().str() +
                        " does not match out_dim " +
                        std::to_string(weights.dim(0)));
  }
}

std::size_t conv_output_extent(std::size_t input, std::size_t kernel,
                               std::size_t stride, std::size_t padding) {
  const std::size_t padded = input + 2 * padding;
  if (stride == 0 || padded < kernel) {
    throw ContractError("convolution output extent < 1 (input " +
                        std::to_string(input) + ", kernel " +
                        std::to_string(kernel) + ", padding " +
                        std::to_string(padding) + ")");
  }
  return (padded - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

ConvGeometry geometry_for(const Tensor& input, const ConvParams& params) {
  params.validate();
  if (input.rank() != 3) {
    throw ContractError("conv2d expects a (C,H,W) input, got " +
                        input.shape().str());
  }
  if (input.dim(0) != params.in_channels()) {
    throw ContractError("conv2d input " + input.shape().str() +
                        " has " + std::to_string(input.dim(0)) +
                        " channels but kernel " + params.weights.shape().str() +
                        " expects " + std::to_string(params.in_channels()));
  }
  ConvGeometry g{input.dim(0), input.dim(1),   input.dim(2), params.kernel(),
                 params.stride, params.padding, 0,            0};
  g.out_h = conv_output_extent(g.height, g.kernel, g.stride, g.padding);
  g.out_w = conv_output_extent(g.width, g.kernel, g.stride, g.padding);
  return g;
}

// Rows are (channel, ky, kx), columns are output positions.
std::vector<float> im2col(std::span<const float> in, const ConvGeometry& g) {
  const std::size_t positions = g.positions();
  std::vector<float> col(g.patch() * positions, 0.0f);
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* plane = in.data() + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        float* row = col.data() +
                     ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const float* src = plane + static_cast<std::size_t>(iy) * g.width;
          float* dst = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[ox] = src[ix];
            }
          }
        }
      }
    }
  }
  return col;
}

void col2im(std::span<const float> col, const ConvGeometry& g,
            std::span<float> out) {
  const std::size_t positions = g.positions();
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* plane = out.data() + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const float* row = col.data() +
                           ((c * g.kernel + ky) * g.kernel + kx) * positions;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          float* dst = plane + static_cast<std::size_t>(iy) * g.width;
          const float* src = row + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

// C[m x n] += A[m x k] * B[k x n], all row-major.
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k,
                     const float* a, const float* b, float* c) {
  constexpr std::size_t kColBlock = 256;
  for (std::size_t n0 = 0; n0 < n; n0 += kColBlock) {
    const std::size_t nb = std::min(kColBlock, n - n0);
    std::size_t m0 = 0;
    for (; m0 + 4 <= m; m0 += 4) {
      float* __restrict c0 = c + (m0 + 0) * n + n0;
      float* __restrict c1 = c + (m0 + 1) * n + n0;
      float* __restrict c2 = c + (m0 + 2) * n + n0;
      float* __restrict c3 = c + (m0 + 3) * n + n0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const float* __restrict brow = b + kk * n + n0;
        const float a0 = a[(m0 + 0) * k + kk];
        const float a1 = a[(m0 + 1) * k + kk];
        const float a2 = a[(m0 + 2) * k + kk];
        const float a3 = a[(m0 + 3) * k + kk];
        for (std::size_t j = 0; j < nb; ++j) {
          const float bj = brow[j];
          c0[j] += a0 * bj;
          c1[j] += a1 * bj;
          c2[j] += a2 * bj;
          c3[j] += a3 * bj;
        }
      }
    }
    for (; m0 < m; ++m0) {
      float* __restrict crow = c + m0 * n + n0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const float* __restrict brow = b + kk * n + n0;
        const float av = a[m0 * k + kk];
        for (std::size_t j = 0; j < nb; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

std::vector<float> transpose(std::span<const float> src, std::size_t rows,
                             std::size_t cols) {
  std::vector<float> dst(src.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
  return dst;
}

void require_rank1(const Tensor& t, const char* op) {
  if (t.rank() != 1) {
    throw ContractError(std::string(op) + " expects a rank-1 tensor, got " +
                        t.shape().str());
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const ConvParams& params) {
  const ConvGeometry g = geometry_for(input, params);
  const std::size_t oc = params.out_channels();
  const std::size_t positions = g.positions();

  Tensor out(Shape{oc, g.out_h, g.out_w});
  auto o = out.data();
  for (std::size_t c = 0; c < oc; ++c) {
    std::fill_n(o.begin() + static_cast<std::ptrdiff_t>(c * positions),
                positions, params.bias[c]);
  }
  const bool pointwise = g.kernel == 1 && g.stride == 1 && g.padding == 0;
  if (pointwise) {
    gemm_accumulate(oc, positions, g.patch(), params.weights.data().data(),
                    input.data().data(), o.data());
  } else {
    const std::vector<float> col = im2col(input.data(), g);
    gemm_accumulate(oc, positions, g.patch(), params.weights.data().data(),
                    col.data(), o.data());
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (float& v : out.data()) v = v > 0.0f ? v : 0.0f;
  return out;
}

Tensor flatten(const Tensor& input) {
  return input.reshaped(Shape{input.size()});
}

Tensor dense(const Tensor& input, const DenseParams& params) {
  params.validate();
  require_rank1(input, "dense");
  if (input.size() != params.in_dim()) {
    throw ContractError("dense input length " + std::to_string(input.size()) +
                        " does not match in_dim " +
                        std::to_string(params.in_dim()));
  }
  const std::size_t in_dim = params.in_dim();
  Tensor out(Shape{params.out_dim()});
  const float* x = input.data().data();
  for (std::size_t i = 0; i < params.out_dim(); ++i) {
    const float* w = params.weights.data().data() + i * in_dim;
    // Four partial sums let the compiler vectorize the reduction.
    float s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    std::size_t j = 0;
    for (; j + 4 <= in_dim; j += 4) {
      s0 += w[j] * x[j];
      s1 += w[j + 1] * x[j + 1];
      s2 += w[j + 2] * x[j + 2];
      s3 += w[j + 3] * x[j + 3];
    }
    for (; j < in_dim; ++j) s0 += w[j] * x[j];
    out[i] = (s0 + s1) + (s2 + s3) + params.bias[i];
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  require_rank1(logits, "softmax");
  const auto in = logits.data();
  const float peak = *std::max_element(in.begin(), in.end());
  std::vector<double> e(in.size());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    e[i] = std::exp(static_cast<double>(in[i]) - peak);
    total += e[i];
  }
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = static_cast<float>(e[i] / total);
  }
  return out;
}

ConvGrad conv2d_grad(const Tensor& input, const ConvParams& params,
                     const Tensor& upstream) {
  const ConvGeometry g = geometry_for(input, params);
  const std::size_t oc = params.out_channels();
  const std::size_t positions = g.positions();
  const Shape expected{oc, g.out_h, g.out_w};
  if (upstream.shape() != expected) {
    throw ContractError("conv2d_grad upstream " + upstream.shape().str() +
                        " does not match output " + expected.str());
  }

  const std::vector<float> col = im2col(input.data(), g);
  const std::size_t patch = g.patch();

  ConvGrad grad{Tensor(input.shape()), Tensor(params.weights.shape()),
                Tensor(params.bias.shape())};

  const float* up = upstream.data().data();
  for (std::size_t c = 0; c < oc; ++c) {
    double s = 0.0;
    for (std::size_t p = 0; p < positions; ++p) s += up[c * positions + p];
    grad.bias[c] = static_cast<float>(s);
  }

  const std::vector<float> col_t = transpose(col, patch, positions);
  gemm_accumulate(oc, patch, positions, up, col_t.data(),
                  grad.weights.data().data());

  const std::vector<float> w_t =
      transpose(params.weights.data(), oc, patch);
  std::vector<float> dcol(patch * positions, 0.0f);
  gemm_accumulate(patch, positions, oc, w_t.data(), up, dcol.data());
  col2im(dcol, g, grad.input.data());
  return grad;
}

DenseGrad dense_grad(const Tensor& input, const DenseParams& params,
                     const Tensor& upstream) {
  params.validate();
  require_rank1(input, "dense_grad");
  require_rank1(upstream, "dense_grad");
  if (input.size() != params.in_dim()) {
    throw ContractError("dense_grad input length " +
                        std::to_string(input.size()) +
                        " does not match in_dim " +
                        std::to_string(params.in_dim()));
  }
  if (upstream.size() != params.out_dim()) {
    throw ContractError("dense_grad upstream length " +
                        std::to_string(upstream.size()) +
                        " does not match out_dim " +
                        std::to_string(params.out_dim()));
  }
  const std::size_t in_dim = params.in_dim();
  DenseGrad grad{Tensor(input.shape()), Tensor(params.weights.shape()),
                 upstream};
  const float* x = input.data().data();
  float* gx = grad.input.data().data();
  for (std::size_t i = 0; i < params.out_dim(); ++i) {
    const float g = upstream[i];
    const float* w = params.weights.data().data() + i * in_dim;
    float* gw = grad.weights.data().data() + i * in_dim;
    for (std::size_t j = 0; j < in_dim; ++j) {
      gw[j] = g * x[j];
      gx[j] += g * w[j];
    }
  }
  return grad;
}

Tensor relu_grad(const Tensor& input, const Tensor& upstream) {
  if (input.shape() != upstream.shape()) {
    throw ContractError("relu_grad input " + input.shape().str() +
                        " does not match upstream " + upstream.shape().str());
  }
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = input[i] > 0.0f ? upstream[i] : 0.0f;
  }
  return out;
}

LossGrad softmax_cross_entropy_grad(const Tensor& logits,
                                    std::size_t true_class) {
  require_rank1(logits, "softmax_cross_entropy_grad");
  if (true_class >= logits.size()) {
    throw ContractError("class index " + std::to_string(true_class) +
                        " out of range for " + std::to_string(logits.size()) +
                        " logits");
  }
  const auto in = logits.data();
  const double peak = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (float v : in) total += std::exp(static_cast<double>(v) - peak);
  const double log_total = std::log(total);

  LossGrad out{0.0f, Tensor(logits.shape())};
  out.loss = static_cast<float>(log_total + peak - in[true_class]);
  for (std::size_t i = 0; i < in.size(); ++i) {
    const double p = std::exp(static_cast<double>(in[i]) - peak - log_total);
    out.logits[i] = static_cast<float>(p - (i == true_class ? 1.0 : 0.0));
  }
  return out;
}

}  // namespace smokenet
