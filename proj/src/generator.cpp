#include "spsr/generator.hpp"

#include "spsr/error.hpp"
#include "spsr/gradient_ops.hpp"

#include <string>

namespace spsr {
namespace {

constexpr double kLeakySlope = 0.2;

torch::nn::Conv2d conv3x3(int in, int out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
}

torch::nn::Conv2d conv1x1(int in, int out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
}

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

torch::Tensor upsample2(const torch::Tensor& x) {
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

// Kaiming-normal scaled down so deep residual stacks start close to identity.
void init_scaled(torch::nn::Module& module, double scale) {
  torch::NoGradGuard guard;
  for (auto& m : module.modules(/*include_self=*/false)) {
    if (auto* conv = m->as<torch::nn::Conv2d>()) {
      torch::nn::init::kaiming_normal_(conv->weight, 0.0, torch::kFanIn);
      conv->weight.mul_(scale);
      if (conv->bias.defined()) conv->bias.zero_();
    }
  }
}

}  // namespace

void GeneratorConfig::validate() const {
  if (scale_factor != 4) {
    throw ConfigError("generator.scale_factor must be 4, got " + std::to_string(scale_factor));
  }
  if (num_rrdb_blocks < 1) throw ConfigError("generator.num_rrdb_blocks must be >= 1");
  if (base_channels < 1) throw ConfigError("generator.base_channels must be >= 1");
  if (growth_channels < 1) throw ConfigError("generator.growth_channels must be >= 1");
  if (tap_indices.empty()) throw ConfigError("generator.tap_indices must not be empty");
  int prev = 0;
  for (int t : tap_indices) {
    if (t <= prev) {
      throw ConfigError("generator.tap_indices must be strictly increasing and >= 1");
    }
    if (t > num_rrdb_blocks) {
      throw ConfigError("generator.tap_indices entry " + std::to_string(t) +
                        " exceeds num_rrdb_blocks " + std::to_string(num_rrdb_blocks));
    }
    prev = t;
  }
}

GeneratorConfig GeneratorConfig::desk(int num_blocks, int base, int growth) {
  GeneratorConfig c;
  c.num_rrdb_blocks = num_blocks;
  c.base_channels = base;
  c.growth_channels = growth;
  // Four taps at the quarter points of the trunk, as {5,10,15,20} does for 23 blocks.
  c.tap_indices.clear();
  const int taps = std::min(4, num_blocks);
  for (int i = 1; i <= taps; ++i) {
    const int t = (i * num_blocks) / taps;
    if (c.tap_indices.empty() || t > c.tap_indices.back()) c.tap_indices.push_back(t);
  }
  return c;
}

ResidualDenseBlockImpl::ResidualDenseBlockImpl(int c, int g)
    : conv1_(register_module("conv1", conv3x3(c, g))),
      conv2_(register_module("conv2", conv3x3(c + g, g))),
      conv3_(register_module("conv3", conv3x3(c + 2 * g, g))),
      conv4_(register_module("conv4", conv3x3(c + 3 * g, g))),
      conv5_(register_module("conv5", conv3x3(c + 4 * g, c))) {
  init_scaled(*this, 0.1);
}

torch::Tensor ResidualDenseBlockImpl::forward(const torch::Tensor& x) {
  auto x1 = lrelu(conv1_(x));
  auto x2 = lrelu(conv2_(torch::cat({x, x1}, 1)));
  auto x3 = lrelu(conv3_(torch::cat({x, x1, x2}, 1)));
  auto x4 = lrelu(conv4_(torch::cat({x, x1, x2, x3}, 1)));
  auto x5 = conv5_(torch::cat({x, x1, x2, x3, x4}, 1));
  return x5 * 0.2 + x;
}

RRDBImpl::RRDBImpl(int c, int g)
    : rdb1_(register_module("rdb1", ResidualDenseBlock(c, g))),
      rdb2_(register_module("rdb2", ResidualDenseBlock(c, g))),
      rdb3_(register_module("rdb3", ResidualDenseBlock(c, g))) {}

torch::Tensor RRDBImpl::forward(const torch::Tensor& x) {
  return rdb3_(rdb2_(rdb1_(x))) * 0.2 + x;
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
  config_.validate();
  const int nf = config_.base_channels;
  const int gc = config_.growth_channels;

  conv_first_ = register_module("conv_first", conv3x3(3, nf));
  trunk_ = register_module("trunk", torch::nn::ModuleList());
  for (int i = 0; i < config_.num_rrdb_blocks; ++i) trunk_->push_back(RRDB(nf, gc));
  trunk_conv_ = register_module("trunk_conv", conv3x3(nf, nf));
  upconv1_ = register_module("upconv1", conv3x3(nf, nf));
  upconv2_ = register_module("upconv2", conv3x3(nf, nf));
  hr_conv_ = register_module("hr_conv", conv3x3(nf, nf));

  grad_conv_first_ = register_module("grad_conv_first", conv3x3(3, nf));
  grad_merge_ = register_module("grad_merge", torch::nn::ModuleList());
  grad_blocks_ = register_module("grad_blocks", torch::nn::ModuleList());
  for (int i = 0; i < config_.num_gradient_blocks(); ++i) {
    grad_merge_->push_back(conv1x1(2 * nf, nf));
    grad_blocks_->push_back(RRDB(nf, gc));
  }
  grad_upconv1_ = register_module("grad_upconv1", conv3x3(nf, nf));
  grad_upconv2_ = register_module("grad_upconv2", conv3x3(nf, nf));
  grad_hr_conv_ = register_module("grad_hr_conv", conv3x3(nf, nf));
  grad_out_ = register_module("grad_out", conv1x1(nf, 3));

  fuse_conv_ = register_module("fuse_conv", conv3x3(2 * nf, nf));
  fuse_block_ = register_module("fuse_block", RRDB(nf, gc));
  fuse_hr_conv_ = register_module("fuse_hr_conv", conv3x3(nf, nf));
  conv_last_ = register_module("conv_last", conv3x3(nf, 3));
}

GeneratorOutput GeneratorImpl::forward(const torch::Tensor& lr, const ForwardOptions& options) {
  if (lr.dim() != 4 || lr.size(1) != 3) {
    throw ShapeError("generator: expected LR input [B, 3, H, W]");
  }
  if (lr.size(2) < 8 || lr.size(3) < 8) {
    throw ShapeError("generator: LR spatial dims must be >= 8, got " +
                     std::to_string(lr.size(2)) + "x" + std::to_string(lr.size(3)));
  }

  // SR branch trunk, remembering tapped block outputs.
  auto fea = conv_first_(lr);
  std::vector<torch::Tensor> taps;
  taps.reserve(config_.tap_indices.size());
  auto x = fea;
  size_t next_tap = 0;
  for (int i = 0; i < config_.num_rrdb_blocks; ++i) {
    x = trunk_[i]->as<RRDB>()->forward(x);
    if (next_tap < config_.tap_indices.size() && config_.tap_indices[next_tap] == i + 1) {
      taps.push_back(x);
      ++next_tap;
    }
  }
  fea = fea + trunk_conv_(x);
  auto sr_fea = lrelu(upconv1_(upsample2(fea)));
  sr_fea = lrelu(upconv2_(upsample2(sr_fea)));
  sr_fea = lrelu(hr_conv_(sr_fea));

  // Gradient branch, fed by M(LR) and the taps.
  auto g = grad_conv_first_(extract_gradient_map(lr).data);
  for (size_t i = 0; i < taps.size(); ++i) {
    g = grad_merge_[i]->as<torch::nn::Conv2d>()->forward(torch::cat({g, taps[i]}, 1));
    g = grad_blocks_[i]->as<RRDB>()->forward(g);
  }
  g = lrelu(grad_upconv1_(upsample2(g)));
  g = lrelu(grad_upconv2_(upsample2(g)));
  auto grad_features = lrelu(grad_hr_conv_(g));
  auto predicted_gm = grad_out_(grad_features);

  // Fusion block.
  auto fused_in = options.zero_gradient_features ? torch::zeros_like(grad_features) : grad_features;
  auto f = fuse_conv_(torch::cat({sr_fea, fused_in}, 1));
  f = fuse_block_(f);
  f = lrelu(fuse_hr_conv_(f));
  auto sr = conv_last_(f);

  return {sr, predicted_gm, grad_features};
}

Generator build_generator(const GeneratorConfig& config, uint64_t rng_seed) {
  config.validate();
  torch::manual_seed(rng_seed);
  return Generator(config);
}

GeneratorOutput super_resolve(Generator& gen, const torch::Tensor& lr, const ForwardOptions& options) {
  const bool was_training = gen->is_training();
  gen->eval();
  torch::NoGradGuard guard;
  auto out = gen->forward(lr, options);
  gen->train(was_training);
  return out;
}

}  // namespace spsr
