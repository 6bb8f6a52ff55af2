#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace smokenet {

// Extents of a rank-1..4 tensor. All extents must be >= 1.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> extents);
  explicit Shape(std::vector<std::size_t> extents);

  std::size_t rank() const { return extents_.size(); }
  std::size_t operator[](std::size_t axis) const { return extents_.at(axis); }
  std::size_t elements() const;
  const std::vector<std::size_t>& extents() const { return extents_; }

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  void validate() const;
  std::vector<std::size_t> extents_;
};

// Dense float32 tensor, row-major. Images are (C, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.rank(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }
  std::size_t size() const { return data_.size(); }

  std::span<const float> data() const { return data_; }
  std::span<float> data() { return data_; }
  const std::vector<float>& values() const { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  float at(std::size_t c, std::size_t h, std::size_t w) const;

  // Same values, new extents; element count must match.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

struct ConvParams {
  Tensor weights;  // (out_channels, in_channels, k, k)
  Tensor bias;     // (out_channels)
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_channels() const { return weights.dim(0); }
  std::size_t in_channels() const { return weights.dim(1); }
  std::size_t kernel() const { return weights.dim(2); }

  // Throws ContractError if the fields are inconsistent.
  void validate() const;

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

struct DenseParams {
  Tensor weights;  // (out_dim, in_dim)
  Tensor bias;     // (out_dim)

  std::size_t out_dim() const { return weights.dim(0); }
  std::size_t in_dim() const { return weights.dim(1); }

  void validate() const;

  friend bool operator==(const DenseParams&, const DenseParams&) = default;
};

// Output extent of a convolution along one axis; throws ContractError when < 1.
std::size_t conv_output_extent(std::size_t input, std::size_t kernel,
                               std::size_t stride, std::size_t padding);

// Cross-correlation plus bias. Input (C, H, W), output (out_channels, H', W').
Tensor conv2d(const Tensor& input, const ConvParams& params);
Tensor relu(const Tensor& input);
Tensor flatten(const Tensor& input);
Tensor dense(const Tensor& input, const DenseParams& params);
// Numerically stable (max-subtracted) softmax over a rank-1 tensor.
Tensor softmax(const Tensor& logits);

struct ConvGrad {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

struct DenseGrad {
  Tensor input;
  Tensor weights;
  Tensor bias;
};

struct LossGrad {
  float loss = 0.0f;  // -log softmax(logits)[true_class]
  Tensor logits;      // softmax(logits) - onehot(true_class)
};

ConvGrad conv2d_grad(const Tensor& input, const ConvParams& params,
                     const Tensor& upstream);
DenseGrad dense_grad(const Tensor& input, const DenseParams& params,
                     const Tensor& upstream);
// The gradient passes where the forward input was strictly positive.
Tensor relu_grad(const Tensor& input, const Tensor& upstream);
LossGrad softmax_cross_entropy_grad(const Tensor& logits,
                                    std::size_t true_class);

}  // namespace smokenet
