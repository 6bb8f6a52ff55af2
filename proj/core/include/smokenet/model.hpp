#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smokenet/tensor.hpp"

namespace smokenet {

inline constexpr std::size_t kBackboneLayers = 5;
inline constexpr std::size_t kNeckLayers = 2;
inline constexpr std::size_t kConvLayers = kBackboneLayers + kNeckLayers;

// Class index 0 is "smoking", 1 is "not_smoking".
std::string class_label(std::size_t class_id);

/// Layer-by-layer description of the classifier.
///
/// Five stride-2 backbone convolutions take a (3, S, S) image down to
/// (backbone_channels[4], S/32, S/32); two stride-1 neck convolutions keep
/// the spatial extent; the head flattens and applies fc(hidden_dim) + ReLU,
/// then fc(num_classes) and softmax. With defaults the flatten length is
/// 20 * 20 * 1024 = 409600.
struct ModelConfig {
  std::uint32_t input_size = 640;
  std::uint32_t input_channels = 3;
  std::array<std::uint32_t, kBackboneLayers> backbone_channels{64, 128, 256,
                                                               512, 1024};
  std::array<std::uint32_t, kNeckLayers> neck_channels{1024, 1024};
  std::uint32_t hidden_dim = 128;
  std::uint32_t num_classes = 2;
  std::uint32_t kernel = 3;
  std::uint32_t stride_backbone = 2;
  std::uint32_t stride_neck = 1;

  // 64x64 input, channels 8..128; flatten length 512.
  static ModelConfig compact(std::uint32_t input_size = 64);

  // Throws ContractError describing the first violated invariant.
  void validate() const;

  std::size_t feature_size() const { return input_size / 32; }
  std::size_t flatten_length() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct ClassScores {
  std::vector<float> probabilities;
  std::size_t predicted_class = 0;

  float confidence() const { return probabilities.at(predicted_class); }
  std::string label() const { return class_label(predicted_class); }

  friend bool operator==(const ClassScores&, const ClassScores&) = default;
};

ClassScores scores_from_logits(const Tensor& logits);

// Shapes observed during a forward pass, in evaluation order.
struct ForwardTrace {
  std::vector<Shape> conv_outputs;  // 5 backbone then 2 neck
  std::size_t flatten_length = 0;
  Shape hidden;
  Shape logits;
};

struct LabeledImage {
  Tensor image;  // (3, S, S), values in [0, 1]
  std::size_t label = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

using TrainLog = std::vector<EpochStats>;

class ProposedModel {
 public:
  ProposedModel(ModelConfig config, std::array<ConvParams, kConvLayers> convs,
                DenseParams fc1, DenseParams fc2);

  const ModelConfig& config() const { return config_; }
  const std::array<ConvParams, kConvLayers>& convs() const { return convs_; }
  const DenseParams& fc1() const { return fc1_; }
  const DenseParams& fc2() const { return fc2_; }

  // Parameter tensors in module order: conv1.w, conv1.b, ..., conv7.b,
  // fc1.w, fc1.b, fc2.w, fc2.b.
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> parameters();
  std::size_t parameter_count() const;

  // Throws ContractError naming expected and actual shapes.
  void check_input(const Tensor& image) const;

  Tensor logits(const Tensor& image, ForwardTrace* trace = nullptr) const;
  ClassScores forward(const Tensor& image) const;

  friend bool operator==(const ProposedModel&, const ProposedModel&) = default;

 private:
  ModelConfig config_;
  std::array<ConvParams, kConvLayers> convs_;
  DenseParams fc1_;
  DenseParams fc2_;
};

// Every parameter zero; shapes fully determined by config.
ProposedModel allocate(const ModelConfig& config);

// He-scaled normal weights, zero biases; bit-identical for equal inputs.
ProposedModel build(const ModelConfig& config, std::uint64_t seed);

struct Gradients {
  float loss = 0.0f;
  Tensor logits;
  std::vector<Tensor> parameters;  // same order as ProposedModel::parameters
};

// Cross-entropy loss of one labeled image and its gradient w.r.t. every
// parameter.
Gradients loss_gradients(const ProposedModel& model, const Tensor& image,
                         std::size_t label);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Plain per-sample gradient descent on cross-entropy.
///
/// Epoch loss and accuracy are measured on each sample just before its
/// update. Sample order is reshuffled every epoch from `cfg.seed` when
/// `cfg.shuffle` is set.
TrainLog fit(ProposedModel& model, std::span<const LabeledImage> dataset,
             const TrainConfig& cfg, const EpochCallback& on_epoch = {});

void save_weights(const ProposedModel& model,
                  const std::filesystem::path& path);
// Reads only the header of a weights file.
ModelConfig read_weights_config(const std::filesystem::path& path);
ProposedModel load_weights(const std::filesystem::path& path,
                           const ModelConfig& config);

}  // namespace smokenet
