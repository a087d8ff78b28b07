#pragma once

#include "spsr/nse.hpp"
#include "spsr/ssl_pretext.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace spsr {

struct SSLTrainOptions {
  SamplingStrategy strategy = SamplingStrategy::horizontal;  // contrastive task only
  int batch_size = 48;
  int patch_size = 420;
  int anchors_per_patch = 1;
  int64_t steps = 1000;
  double lr = 1e-3;
  double lr_decay_factor = 0.2;
  int64_t lr_decay_every = 0;  // steps between decays; 0 keeps the rate constant
  double tau = 64.0;
  // Keep the extractor fixed and optimize only the head (finetuned heads).
  bool freeze_nse = false;
  uint64_t seed = 0;
  int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::filesystem::path checkpoint_path;
  std::function<void(int64_t step, double loss, double lr)> on_step;
};

// Steps between decays for a decay period given in epochs over `num_images`.
int64_t decay_steps_for_epochs(int epochs, size_t num_images, int batch_size);

struct ContrastiveModel {
  NSE nse{nullptr};
  Predictor predictor{nullptr};
  std::vector<double> loss_curve;
};

struct JigsawModel {
  NSE nse{nullptr};
  JigsawClassifier classifier{nullptr};
  std::vector<double> loss_curve;
};

// Mean InfoNCE over the batch; every disjoint position of each patch is a negative.
torch::Tensor contrastive_batch_loss(NSE& nse, Predictor& predictor, const torch::Tensor& patches,
                                     SamplingStrategy strategy, int anchors_per_patch, double tau, Rng& rng);

// Mean jigsaw cross-entropy with one instance per patch.
torch::Tensor jigsaw_batch_loss(NSE& nse, JigsawClassifier& classifier, const torch::Tensor& patches,
                                Rng& rng);

// Jointly optimizes extractor and predictor with Adam. `init` (optional) starts from
// an existing extractor instead of a fresh one. Throws DataError for an empty set.
ContrastiveModel train_nse_contrastive(const std::vector<torch::Tensor>& images, const NSEConfig& nse_config,
                                       const PredictorConfig& predictor_config,
                                       const SSLTrainOptions& options, NSE init = nullptr);

JigsawModel train_nse_jigsaw(const std::vector<torch::Tensor>& images, const NSEConfig& nse_config,
                             const JigsawClassifierConfig& classifier_config, const SSLTrainOptions& options,
                             NSE init = nullptr);

// Archive layout: meta/task ("predict" | "jigsaw"), meta/strategy, meta/step,
// meta/nse_hidden, meta/nse_out, meta/head_layers, meta/head_hidden, nse/*, and
// predictor/* or jigsaw/*.
void save_ssl_checkpoint(const std::filesystem::path& path, const ContrastiveModel& model,
                         const PredictorConfig& config, SamplingStrategy strategy, int64_t step);
void save_ssl_checkpoint(const std::filesystem::path& path, const JigsawModel& model,
                         const JigsawClassifierConfig& config, int64_t step);

struct SSLCheckpoint {
  std::string task;
  SamplingStrategy strategy = SamplingStrategy::horizontal;
  int64_t step = 0;
  NSE nse{nullptr};
  Predictor predictor{nullptr};         // set for task "predict"
  JigsawClassifier classifier{nullptr};  // set for task "jigsaw"
};

SSLCheckpoint load_ssl_checkpoint(const std::filesystem::path& path);

// Only the extractor; works on SSL checkpoints and on SR training checkpoints.
NSE load_nse(const std::filesystem::path& path);

}  // namespace spsr
