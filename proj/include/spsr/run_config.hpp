#pragma once

#include "spsr/critics.hpp"
#include "spsr/generator.hpp"
#include "spsr/losses.hpp"
#include "spsr/nse.hpp"
#include "spsr/ssl_pretext.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace spsr {

struct CriticsConfig {
  int base_channels = 64;
  PerceptualConfig perceptual;
  AdversarialForm adversarial_form = AdversarialForm::relativistic_average;
};

struct DataConfig {
  std::string root;            // <root>/HR/*.png; empty with synthetic_images > 0
  std::string hr_subdir = "HR";
  bool cache_lr = false;
  int batch_size = 15;
  int lr_patch = 32;
  bool augment = true;
  int synthetic_images = 0;    // > 0 replaces the dataset with procedural images
  int synthetic_size = 256;
};

struct TrainConfig {
  Variant variant = Variant::SPSR_G;
  int64_t total_iters = 500000;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double pretrain_lr = 2e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::vector<int64_t> lr_milestones{50000, 100000, 200000, 300000};
  double lr_gamma = 0.5;
  std::string init_from;       // generator initialization checkpoint
  std::string nse_checkpoint;  // required for SPSR_P / SPSR_J
  uint64_t seed = 0;
  int64_t checkpoint_every = 5000;
  int64_t log_every = 100;
};

struct SSLConfig {
  NSEConfig nse;
  int head_layers = 3;
  int head_hidden = 128;
  double tau = 64.0;
  int batch_size = 48;
  int anchors_per_patch = 1;
  int64_t steps = 20000;
  double predict_lr = 1e-3;
  double jigsaw_lr = 1e-4;
  double lr_decay_factor = 0.2;
  int predict_decay_epochs = 20;
  int jigsaw_decay_epochs = 30;
  int predict_patch = 420;
  int jigsaw_patch = 84;
  int eval_predict_patch = 200;
  int eval_jigsaw_patch = 84;
  int64_t eval_negatives = -1;
  int eval_repeats = 1;
  int64_t checkpoint_every = 1000;
};

struct RunConfig {
  GeneratorConfig generator;
  CriticsConfig critics;
  LossWeights losses;
  TrainConfig train;
  DataConfig data;
  SSLConfig ssl;

  // Published training settings.
  static RunConfig paper();
  // Small trunk, narrow critics and a short schedule for CPU runs and tests.
  static RunConfig desk();

  // Throws ConfigError naming the offending key.
  void validate() const;

  // Dotted-key access, e.g. set("train.lr_g", "2e-4"). Unknown keys and
  // unparsable values throw ConfigError.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static std::vector<std::string> keys();

  // Applies "key=value" overrides in order.
  void apply_overrides(const std::vector<std::string>& overrides);

  // INI text with one section per group.
  std::string to_ini() const;
  // Values missing from the text keep their value from `base`.
  static RunConfig from_ini(const std::string& text, RunConfig base = paper());
  static RunConfig load(const std::filesystem::path& path, RunConfig base = paper());

  int hr_patch() const { return data.lr_patch * generator.scale_factor; }
};

}  // namespace spsr
