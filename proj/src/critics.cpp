#include "spsr/critics.hpp"

#include "spsr/checkpoint.hpp"
#include "spsr/error.hpp"

#include <array>
#include <filesystem>

namespace spsr {
namespace {

constexpr double kLeakySlope = 0.2;

void push_norm_lrelu(torch::nn::Sequential& seq, int channels) {
  seq->push_back(torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true)));
  seq->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
}

struct VggLayer {
  const char* name;
  int out_channels;  // 0 marks a 2x2 max pool
};

constexpr std::array<VggLayer, 21> kVgg19 = {{
    {"conv1_1", 64},  {"conv1_2", 64},  {"pool1", 0},
    {"conv2_1", 128}, {"conv2_2", 128}, {"pool2", 0},
    {"conv3_1", 256}, {"conv3_2", 256}, {"conv3_3", 256}, {"conv3_4", 256}, {"pool3", 0},
    {"conv4_1", 512}, {"conv4_2", 512}, {"conv4_3", 512}, {"conv4_4", 512}, {"pool4", 0},
    {"conv5_1", 512}, {"conv5_2", 512}, {"conv5_3", 512}, {"conv5_4", 512}, {"pool5", 0},
}};

}  // namespace

std::string to_string(DiscriminatorKind kind) {
  switch (kind) {
    case DiscriminatorKind::image: return "image";
    case DiscriminatorKind::gradient_map: return "gradient_map";
    case DiscriminatorKind::structure_feature: return "structure_feature";
  }
  return "unknown";
}

int DiscriminatorConfig::num_stages() const {
  int stages = kind == DiscriminatorKind::structure_feature ? 3 : 5;
  while (stages > 1 && (4 << stages) > input_size) --stages;
  return stages;
}

void DiscriminatorConfig::validate() const {
  const int expected = kind == DiscriminatorKind::structure_feature ? 32 : 3;
  if (in_channels != expected) {
    throw ConfigError("discriminator(" + to_string(kind) + "): in_channels must be " +
                      std::to_string(expected) + ", got " + std::to_string(in_channels));
  }
  const int factor = 1 << num_stages();
  if (input_size < factor || input_size % factor != 0) {
    throw ConfigError("discriminator(" + to_string(kind) + "): input_size " +
                      std::to_string(input_size) + " must be a positive multiple of " +
                      std::to_string(factor));
  }
  if (base_channels < 1) throw ConfigError("discriminator: base_channels must be >= 1");
}

DiscriminatorConfig DiscriminatorConfig::for_kind(DiscriminatorKind kind, int input_size, int base) {
  DiscriminatorConfig c;
  c.kind = kind;
  c.in_channels = kind == DiscriminatorKind::structure_feature ? 32 : 3;
  c.input_size = input_size;
  c.base_channels = base;
  return c;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
  config_.validate();
  const int nf = config_.base_channels;
  torch::nn::Sequential seq;
  // Stem keeps full resolution; no normalization on the first conv.
  seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(config_.in_channels, nf, 3).padding(1)));
  seq->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
  int channels = nf;
  for (int s = 0; s < config_.num_stages(); ++s) {
    const int out = nf * std::min(1 << (s + 1), 8);
    if (s > 0) {
      seq->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, out, 3).padding(1).bias(false)));
      push_norm_lrelu(seq, out);
      channels = out;
    }
    seq->push_back(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, out, 4).stride(2).padding(1).bias(false)));
    push_norm_lrelu(seq, out);
    channels = out;
  }
  features_ = register_module("features", seq);
  const int final_size = config_.input_size >> config_.num_stages();
  fc1_ = register_module("fc1", torch::nn::Linear(channels * final_size * final_size, 100));
  fc2_ = register_module("fc2", torch::nn::Linear(100, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
  auto h = features_->forward(x).flatten(1);
  h = torch::leaky_relu(fc1_(h), kLeakySlope);
  return fc2_(h).squeeze(1);
}

Discriminator build_discriminator(const DiscriminatorConfig& config, uint64_t rng_seed) {
  config.validate();
  torch::manual_seed(rng_seed);
  return Discriminator(config);
}

torch::Tensor discriminate(Discriminator& d, const torch::Tensor& batch) {
  const auto& c = d->config();
  if (batch.dim() != 4 || batch.size(1) != c.in_channels || batch.size(2) != c.input_size ||
      batch.size(3) != c.input_size) {
    throw ShapeError("discriminator(" + to_string(c.kind) + "): expected [B, " +
                     std::to_string(c.in_channels) + ", " + std::to_string(c.input_size) + ", " +
                     std::to_string(c.input_size) + "], got " + torch::str(batch.sizes()));
  }
  return d->forward(batch);
}

PerceptualExtractorImpl::PerceptualExtractorImpl(std::string layer_id) : layer_id_(std::move(layer_id)) {
  torch::nn::Sequential seq;
  int channels = 3;
  bool found = false;
  bool pending_relu = false;
  for (const auto& layer : kVgg19) {
    // A conv's activation is only materialized once something follows it, so the
    // chosen output layer stays pre-activation.
    if (pending_relu) {
      seq->push_back(torch::nn::ReLU());
      pending_relu = false;
    }
    if (layer.out_channels == 0) {
      seq->push_back(layer.name, torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2).stride(2)));
      stride_ *= 2;
      continue;
    }
    seq->push_back(layer.name,
                   torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, layer.out_channels, 3).padding(1)));
    channels = layer.out_channels;
    pending_relu = true;
    if (layer_id_ == layer.name) {
      found = true;
      break;
    }
  }
  if (!found) throw ConfigError("perceptual extractor: unknown layer_id '" + layer_id_ + "'");
  // He initialization keeps activation scale roughly constant through the stack, so a
  // randomly initialized extractor still yields informative feature distances.
  {
    torch::NoGradGuard no_grad;
    for (auto& m : seq->modules(/*include_self=*/false)) {
      if (auto* conv = m->as<torch::nn::Conv2d>()) {
        torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanOut, torch::kReLU);
        torch::nn::init::zeros_(conv->bias);
      }
    }
  }
  features_ = register_module("features", seq);
  mean_ = register_buffer("mean", torch::tensor({0.485, 0.456, 0.406}).view({1, 3, 1, 1}));
  std_ = register_buffer("std", torch::tensor({0.229, 0.224, 0.225}).view({1, 3, 1, 1}));
}

torch::Tensor PerceptualExtractorImpl::forward(const torch::Tensor& x) {
  return features_->forward((x - mean_) / std_);
}

PerceptualExtractor build_perceptual_extractor(const PerceptualConfig& config) {
  torch::manual_seed(kRandomPerceptualSeed);
  PerceptualExtractor ex(config.layer_id);
  if (config.weights_path != "random") {
    if (!std::filesystem::is_regular_file(config.weights_path)) {
      throw DataError("perceptual extractor: weights file not readable: " + config.weights_path);
    }
    auto archive = load_archive(config.weights_path);
    load_module(archive, "perceptual", *ex);
  }
  for (auto& p : ex->parameters()) p.set_requires_grad(false);
  ex->eval();
  return ex;
}

torch::Tensor perceptual_features(PerceptualExtractor& ex, const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ShapeError("perceptual features: expected [B, 3, H, W], got " + torch::str(x.sizes()));
  }
  return ex->forward(x);
}

}  // namespace spsr
