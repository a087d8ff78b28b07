#pragma once

#include "spsr/critics.hpp"
#include "spsr/data_pipeline.hpp"
#include "spsr/generator.hpp"
#include "spsr/losses.hpp"
#include "spsr/nse.hpp"
#include "spsr/run_config.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

namespace spsr {

enum class TrainMode { pretrain, adversarial };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& s);

// base * gamma^(number of milestones <= iteration).
double milestone_lr(double base, const std::vector<int64_t>& milestones, double gamma, int64_t iteration);

// Loads data.root (or builds data.synthetic_images procedural images when > 0).
std::vector<DatasetItem> load_training_data(const RunConfig& config);

struct StepResult {
  int64_t iteration = 0;  // 1-based index of the finished iteration
  std::map<std::string, double> terms;
  double lr = 0.0;

  // `iter=<n> loss/<term>=<v> ... lr=<v>`
  std::string log_line() const;
};

// Owns every model and optimizer of one training run. Single-owner, single-threaded.
//
// Adversarial iterations sample a batch, run the generator once, update the active
// critics on detached fakes (SPSR-G: image and gradient map; SPSR-P/J: structure
// features), then update the generator on the total objective. The structure
// extractor stays frozen. Pretraining minimizes the image L1 loss only.
class Trainer {
 public:
  // Throws ConfigError for an invalid config or missing variant assets.
  Trainer(RunConfig config, TrainMode mode, std::vector<DatasetItem> dataset);

  // Restores a run saved by save(); the config comes from the checkpoint.
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& checkpoint,
                                         std::vector<DatasetItem> dataset);

  StepResult step();

  // Runs until total_iters, logging every log_every iterations to `log` and writing
  // <ckpt_dir>/iter_<n>.pt every checkpoint_every iterations plus latest.pt at the end.
  void run(std::ostream* log = nullptr, const std::filesystem::path& ckpt_dir = {});
  // Runs `count` iterations without logging or checkpoints.
  std::vector<StepResult> run_steps(int64_t count);

  // Archive with meta/iteration, meta/mode, meta/config (INI text), meta/rng,
  // generator/*, disc_image/*, disc_gm/*, disc_sf/*, nse/*, optim/g/*, optim/d/*.
  void save(const std::filesystem::path& path) const;

  int64_t iteration() const { return iteration_; }
  double current_lr_g() const;
  double current_lr_d() const;
  const RunConfig& config() const { return config_; }
  TrainMode mode() const { return mode_; }

  Generator& generator() { return generator_; }
  Discriminator& disc_image() { return disc_image_; }
  Discriminator& disc_gm() { return disc_gm_; }
  Discriminator& disc_sf() { return disc_sf_; }
  NSE& nse() { return nse_; }
  std::vector<Discriminator*> active_discriminators();

  // Called between the critic update and the generator update of an adversarial step.
  void set_critic_hook(std::function<void()> hook) { critic_hook_ = std::move(hook); }

 private:
  Trainer(RunConfig config, TrainMode mode, std::vector<DatasetItem> dataset, bool load_assets);
  void load_state(const std::filesystem::path& path);
  torch::Tensor discriminator_loss(const torch::Tensor& sr, const torch::Tensor& hr,
                                   std::map<std::string, double>& terms);

  RunConfig config_;
  TrainMode mode_;
  std::vector<DatasetItem> dataset_;
  Rng rng_;
  int64_t iteration_ = 0;

  Generator generator_{nullptr};
  Discriminator disc_image_{nullptr}, disc_gm_{nullptr}, disc_sf_{nullptr};
  NSE nse_{nullptr};
  PerceptualExtractor perceptual_{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
  std::function<void()> critic_hook_;
};

// Generator of a training checkpoint, configured from its stored config, in eval mode.
Generator load_generator(const std::filesystem::path& checkpoint);

// Stored run config of a training checkpoint.
RunConfig read_checkpoint_config(const std::filesystem::path& checkpoint);

}  // namespace spsr
