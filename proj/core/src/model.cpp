#include "smokenet/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "smokenet/errors.hpp"

namespace smokenet {

std::string class_label(std::size_t class_id) {
  switch (class_id) {
    case 0:
      return "smoking";
    case 1:
      return "not_smoking";
    default:
      return "class_" + std::to_string(class_id);
  }
}

ModelConfig ModelConfig::compact(std::uint32_t input_size) {
  ModelConfig c;
  c.input_size = input_size;
  c.backbone_channels = {8, 16, 32, 64, 128};
  c.neck_channels = {128, 128};
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw ContractError("invalid model config: " + what);
  };
  if (input_size == 0 || input_size % 32 != 0) {
    fail("input_size " + std::to_string(input_size) +
         " must be a positive multiple of 32");
  }
  if (input_channels != 3) {
    fail("input_channels must be 3, got " + std::to_string(input_channels));
  }
  for (auto c : backbone_channels) {
    if (c == 0) fail("backbone channel counts must be positive");
  }
  for (auto c : neck_channels) {
    if (c == 0) fail("neck channel counts must be positive");
  }
  if (hidden_dim == 0) fail("hidden_dim must be positive");
  if (num_classes == 0) fail("num_classes must be positive");
  if (kernel == 0 || kernel % 2 == 0) {
    fail("kernel must be odd, got " + std::to_string(kernel));
  }
  if (stride_backbone != 2) {
    fail("stride_backbone must be 2, got " + std::to_string(stride_backbone));
  }
  if (stride_neck != 1) {
    fail("stride_neck must be 1, got " + std::to_string(stride_neck));
  }
}

std::size_t ModelConfig::flatten_length() const {
  const std::size_t s = feature_size();
  return s * s * neck_channels.back();
}

ClassScores scores_from_logits(const Tensor& logits) {
  const Tensor p = softmax(logits);
  ClassScores out;
  out.probabilities = p.values();
  out.predicted_class = static_cast<std::size_t>(
      std::max_element(out.probabilities.begin(), out.probabilities.end()) -
      out.probabilities.begin());
  return out;
}

ProposedModel::ProposedModel(ModelConfig config,
                             std::array<ConvParams, kConvLayers> convs,
                             DenseParams fc1, DenseParams fc2)
    : config_(config),
      convs_(std::move(convs)),
      fc1_(std::move(fc1)),
      fc2_(std::move(fc2)) {
  config_.validate();
  std::size_t in = config_.input_channels;
  const std::size_t pad = config_.kernel / 2;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const ConvParams& p = convs_[i];
    p.validate();
    const std::size_t out = i < kBackboneLayers
                                ? config_.backbone_channels[i]
                                : config_.neck_channels[i - kBackboneLayers];
    const std::size_t stride =
        i < kBackboneLayers ? config_.stride_backbone : config_.stride_neck;
    const Shape expected{out, in, config_.kernel, config_.kernel};
    if (p.weights.shape() != expected || p.stride != stride ||
        p.padding != pad) {
      throw ContractError("conv layer " + std::to_string(i + 1) + " has " +
                          p.weights.shape().str() + " stride " +
                          std::to_string(p.stride) + ", config expects " +
                          expected.str() + " stride " + std::to_string(stride));
    }
    in = out;
  }
  fc1_.validate();
  fc2_.validate();
  if (fc1_.weights.shape() !=
      Shape{config_.hidden_dim, config_.flatten_length()}) {
    throw ContractError("fc1 weights " + fc1_.weights.shape().str() +
                        " do not match config");
  }
  if (fc2_.weights.shape() != Shape{config_.num_classes, config_.hidden_dim}) {
    throw ContractError("fc2 weights " + fc2_.weights.shape().str() +
                        " do not match config");
  }
}

std::vector<const Tensor*> ProposedModel::parameters() const {
  std::vector<const Tensor*> out;
  for (const auto& c : convs_) {
    out.push_back(&c.weights);
    out.push_back(&c.bias);
  }
  out.insert(out.end(), {&fc1_.weights, &fc1_.bias, &fc2_.weights, &fc2_.bias});
  return out;
}

std::vector<Tensor*> ProposedModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& c : convs_) {
    out.push_back(&c.weights);
    out.push_back(&c.bias);
  }
  out.insert(out.end(), {&fc1_.weights, &fc1_.bias, &fc2_.weights, &fc2_.bias});
  return out;
}

std::size_t ProposedModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

void ProposedModel::check_input(const Tensor& image) const {
  const Shape expected{config_.input_channels, config_.input_size,
                       config_.input_size};
  if (image.shape() != expected) {
    throw ContractError("model expects input " + expected.str() + ", got " +
                        image.shape().str());
  }
}

Tensor ProposedModel::logits(const Tensor& image, ForwardTrace* trace) const {
  check_input(image);
  Tensor x = image;
  for (const ConvParams& c : convs_) {
    x = relu(conv2d(x, c));
    if (trace) trace->conv_outputs.push_back(x.shape());
  }
  Tensor flat = flatten(x);
  if (trace) trace->flatten_length = flat.size();
  Tensor hidden = relu(dense(flat, fc1_));
  if (trace) trace->hidden = hidden.shape();
  Tensor out = dense(hidden, fc2_);
  if (trace) trace->logits = out.shape();
  return out;
}

ClassScores ProposedModel::forward(const Tensor& image) const {
  return scores_from_logits(logits(image));
}

ProposedModel allocate(const ModelConfig& config) {
  config.validate();
  const std::size_t k = config.kernel;
  std::array<ConvParams, kConvLayers> convs;
  std::size_t in = config.input_channels;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const bool backbone = i < kBackboneLayers;
    const std::size_t out = backbone
                                ? config.backbone_channels[i]
                                : config.neck_channels[i - kBackboneLayers];
    convs[i].weights = Tensor(Shape{out, in, k, k});
    convs[i].bias = Tensor(Shape{out});
    convs[i].stride = backbone ? config.stride_backbone : config.stride_neck;
    convs[i].padding = k / 2;
    in = out;
  }
  DenseParams fc1{Tensor(Shape{config.hidden_dim, config.flatten_length()}),
                  Tensor(Shape{config.hidden_dim})};
  DenseParams fc2{Tensor(Shape{config.num_classes, config.hidden_dim}),
                  Tensor(Shape{config.num_classes})};
  return ProposedModel(config, std::move(convs), std::move(fc1),
                       std::move(fc2));
}

ProposedModel build(const ModelConfig& config, std::uint64_t seed) {
  ProposedModel model = allocate(config);
  std::mt19937_64 rng(seed);
  auto params = model.parameters();
  // Weights sit at even positions in module order; biases stay zero.
  for (std::size_t p = 0; p < params.size(); p += 2) {
    Tensor& w = *params[p];
    const std::size_t fan_in = w.size() / w.dim(0);
    std::normal_distribution<float> dist(
        0.0f, static_cast<float>(std::sqrt(2.0 / static_cast<double>(fan_in))));
    for (float& v : w.data()) v = dist(rng);
  }
  return model;
}

Gradients loss_gradients(const ProposedModel& model, const Tensor& image,
                         std::size_t label) {
  const ModelConfig& cfg = model.config();
  if (label >= cfg.num_classes) {
    throw ContractError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(cfg.num_classes) + " classes");
  }
  // Forward, keeping each layer's input and pre-activation.
  std::array<Tensor, kConvLayers> conv_in;
  std::array<Tensor, kConvLayers> conv_pre;
  model.check_input(image);
  Tensor x = image;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    conv_in[i] = x;
    conv_pre[i] = conv2d(x, model.convs()[i]);
    x = relu(conv_pre[i]);
  }
  const Shape feature_shape = x.shape();
  const Tensor flat = flatten(x);
  const Tensor hidden_pre = dense(flat, model.fc1());
  const Tensor hidden = relu(hidden_pre);
  const Tensor logits = dense(hidden, model.fc2());

  LossGrad head = softmax_cross_entropy_grad(logits, label);

  Gradients out;
  out.loss = head.loss;
  out.logits = logits;
  out.parameters.resize(2 * kConvLayers + 4);

  DenseGrad g2 = dense_grad(hidden, model.fc2(), head.logits);
  out.parameters[2 * kConvLayers + 2] = std::move(g2.weights);
  out.parameters[2 * kConvLayers + 3] = std::move(g2.bias);

  DenseGrad g1 = dense_grad(flat, model.fc1(), relu_grad(hidden_pre, g2.input));
  out.parameters[2 * kConvLayers + 0] = std::move(g1.weights);
  out.parameters[2 * kConvLayers + 1] = std::move(g1.bias);

  Tensor upstream = g1.input.reshaped(feature_shape);
  for (std::size_t i = kConvLayers; i-- > 0;) {
    ConvGrad g = conv2d_grad(conv_in[i], model.convs()[i],
                             relu_grad(conv_pre[i], upstream));
    out.parameters[2 * i] = std::move(g.weights);
    out.parameters[2 * i + 1] = std::move(g.bias);
    upstream = std::move(g.input);
  }
  return out;
}

TrainLog fit(ProposedModel& model, std::span<const LabeledImage> dataset,
             const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (dataset.empty()) throw ValidationError("fit: dataset is empty");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw ValidationError("fit: learning rate must be finite and >= 0");
  }
  const ModelConfig& mc = model.config();
  const Shape expected{mc.input_channels, mc.input_size, mc.input_size};
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].image.shape() != expected) {
      throw ContractError("fit: sample " + std::to_string(i) + " has shape " +
                          dataset[i].image.shape().str() + ", model expects " +
                          expected.str());
    }
    if (dataset[i].label >= mc.num_classes) {
      throw ContractError("fit: sample " + std::to_string(i) + " label " +
                          std::to_string(dataset[i].label) + " >= " +
                          std::to_string(mc.num_classes) + " classes");
    }
  }

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto lr = static_cast<float>(cfg.learning_rate);

  TrainLog log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t idx : order) {
      const LabeledImage& sample = dataset[idx];
      Gradients g = loss_gradients(model, sample.image, sample.label);
      loss_sum += g.loss;
      if (scores_from_logits(g.logits).predicted_class == sample.label) {
        ++correct;
      }
      if (lr == 0.0f) continue;
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto dst = params[p]->data();
        auto src = g.parameters[p].data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] -= lr * src[j];
      }
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(dataset.size()),
                     static_cast<double>(correct) /
                         static_cast<double>(dataset.size())};
    log.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return log;
}

}  // namespace smokenet
