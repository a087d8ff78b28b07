#include "spsr/ssl_training.hpp"

#include "spsr/checkpoint.hpp"
#include "spsr/data_pipeline.hpp"
#include "spsr/error.hpp"

#include <cmath>

namespace spsr {
namespace {

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
}

double lr_at(const SSLTrainOptions& o, int64_t step) {
  if (o.lr_decay_every <= 0) return o.lr;
  return o.lr * std::pow(o.lr_decay_factor, static_cast<double>(step / o.lr_decay_every));
}

std::vector<torch::Tensor> trainable(NSE& nse, torch::nn::Module& head, bool freeze_nse) {
  std::vector<torch::Tensor> params = head.parameters();
  for (auto& p : nse->parameters()) {
    p.set_requires_grad(!freeze_nse);
    if (!freeze_nse) params.push_back(p);
  }
  return params;
}

void check_options(const std::vector<torch::Tensor>& images, const SSLTrainOptions& o) {
  if (images.empty()) throw DataError("self-supervised training: dataset is empty");
  if (o.batch_size < 1 || o.anchors_per_patch < 1 || o.steps < 0) {
    throw ConfigError("self-supervised training: batch_size, anchors_per_patch must be >= 1, steps >= 0");
  }
  if (!(o.lr > 0)) throw ConfigError("self-supervised training: lr must be positive");
}

void write_nse_meta(torch::serialize::OutputArchive& ar, const NSE& nse) {
  write_int(ar, "meta/nse_hidden", nse->config().hidden_channels);
  write_int(ar, "meta/nse_out", nse->config().out_channels);
}

NSE read_nse(torch::serialize::InputArchive& ar) {
  NSEConfig config;
  if (has_key(ar, "meta/nse_hidden")) config.hidden_channels = static_cast<int>(read_int(ar, "meta/nse_hidden"));
  if (has_key(ar, "meta/nse_out")) config.out_channels = static_cast<int>(read_int(ar, "meta/nse_out"));
  NSE nse = build_nse(config, 0);
  load_module(ar, "nse", *nse);
  return nse;
}

template <typename Model, typename Loss, typename Save>
void run_loop(const std::vector<torch::Tensor>& images, NSE& nse, torch::nn::Module& head,
              const SSLTrainOptions& o, std::vector<double>& curve, Loss batch_loss, Save save) {
  torch::optim::Adam opt(trainable(nse, head, o.freeze_nse), torch::optim::AdamOptions(o.lr));
  Rng rng(o.seed);
  at::globalContext().setFlushDenormal(true);
  nse->train(!o.freeze_nse);
  head.train();
  for (int64_t step = 0; step < o.steps; ++step) {
    const double lr = lr_at(o, step);
    set_lr(opt, lr);
    const torch::Tensor patches = sample_image_patches(images, o.batch_size, o.patch_size, rng);
    opt.zero_grad();
    torch::Tensor loss = batch_loss(patches, rng);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      throw NumericError("self-supervised training: non-finite loss at step " + std::to_string(step));
    }
    loss.backward();
    opt.step();
    curve.push_back(value);
    if (o.on_step) o.on_step(step, value, lr);
    if (o.checkpoint_every > 0 && !o.checkpoint_path.empty() && (step + 1) % o.checkpoint_every == 0) {
      save(step + 1);
    }
  }
  for (auto& p : nse->parameters()) p.set_requires_grad(true);
  nse->eval();
  head.eval();
}

}  // namespace

int64_t decay_steps_for_epochs(int epochs, size_t num_images, int batch_size) {
  if (epochs <= 0 || batch_size < 1) return 0;
  const auto per_epoch = static_cast<int64_t>((num_images + batch_size - 1) / batch_size);
  return epochs * std::max<int64_t>(per_epoch, 1);
}

torch::Tensor contrastive_batch_loss(NSE& nse, Predictor& predictor, const torch::Tensor& patches,
                                     SamplingStrategy strategy, int anchors_per_patch, double tau, Rng& rng) {
  const torch::Tensor fmap = extract_structure_features(nse, patches);
  const GridShape grid{fmap.size(2), fmap.size(3)};
  std::vector<torch::Tensor> losses;
  for (int64_t b = 0; b < fmap.size(0); ++b) {
    const torch::Tensor map = fmap[b];
    for (int a = 0; a < anchors_per_patch; ++a) {
      const PredictionSample s = sample_prediction_positions(grid, strategy, -1, rng);
      const torch::Tensor context = gather_features(map, s.context).reshape({1, -1});
      const torch::Tensor pred = predictor->forward(context).squeeze(0);
      const torch::Tensor positive = gather_features(map, {s.target}).squeeze(0);
      losses.push_back(infonce_loss(pred, positive, gather_features(map, s.negatives), tau));
    }
  }
  return torch::stack(losses).mean();
}

torch::Tensor jigsaw_batch_loss(NSE& nse, JigsawClassifier& classifier, const torch::Tensor& patches,
                                Rng& rng) {
  const torch::Tensor fmap = extract_structure_features(nse, patches);
  std::vector<torch::Tensor> inputs;
  std::vector<int64_t> labels;
  for (int64_t b = 0; b < fmap.size(0); ++b) {
    const JigsawInstance inst = sample_jigsaw_instance(fmap[b], rng);
    inputs.push_back(inst.shuffled.reshape({-1}));
    labels.push_back(inst.label);
  }
  const torch::Tensor logits = classifier->forward(torch::stack(inputs));
  return torch::nn::functional::cross_entropy(logits, torch::tensor(labels, torch::kLong));
}

ContrastiveModel train_nse_contrastive(const std::vector<torch::Tensor>& images, const NSEConfig& nse_config,
                                       const PredictorConfig& predictor_config,
                                       const SSLTrainOptions& options, NSE init) {
  check_options(images, options);
  if (predictor_config.context_count != context_count(options.strategy)) {
    throw ConfigError("predictor context_count does not match the sampling strategy");
  }
  ContrastiveModel model;
  model.nse = init ? init : build_nse(nse_config, options.seed);
  model.predictor = build_predictor(predictor_config, options.seed + 1);
  auto loss = [&](const torch::Tensor& patches, Rng& rng) {
    return contrastive_batch_loss(model.nse, model.predictor, patches, options.strategy,
                                  options.anchors_per_patch, options.tau, rng);
  };
  auto save = [&](int64_t step) {
    save_ssl_checkpoint(options.checkpoint_path, model, predictor_config, options.strategy, step);
  };
  run_loop<ContrastiveModel>(images, model.nse, *model.predictor, options, model.loss_curve, loss, save);
  return model;
}

JigsawModel train_nse_jigsaw(const std::vector<torch::Tensor>& images, const NSEConfig& nse_config,
                             const JigsawClassifierConfig& classifier_config, const SSLTrainOptions& options,
                             NSE init) {
  check_options(images, options);
  JigsawModel model;
  model.nse = init ? init : build_nse(nse_config, options.seed);
  model.classifier = build_jigsaw_classifier(classifier_config, options.seed + 1);
  auto loss = [&](const torch::Tensor& patches, Rng& rng) {
    return jigsaw_batch_loss(model.nse, model.classifier, patches, rng);
  };
  auto save = [&](int64_t step) { save_ssl_checkpoint(options.checkpoint_path, model, classifier_config, step); };
  run_loop<JigsawModel>(images, model.nse, *model.classifier, options, model.loss_curve, loss, save);
  return model;
}

void save_ssl_checkpoint(const std::filesystem::path& path, const ContrastiveModel& model,
                         const PredictorConfig& config, SamplingStrategy strategy, int64_t step) {
  torch::serialize::OutputArchive ar;
  write_string(ar, "meta/task", "predict");
  write_string(ar, "meta/strategy", to_string(strategy));
  write_int(ar, "meta/step", step);
  write_nse_meta(ar, model.nse);
  write_int(ar, "meta/head_layers", config.num_fc_layers);
  write_int(ar, "meta/head_hidden", config.hidden_dim);
  save_module(ar, "nse", *model.nse);
  save_module(ar, "predictor", *model.predictor);
  save_archive_atomic(ar, path);
}

void save_ssl_checkpoint(const std::filesystem::path& path, const JigsawModel& model,
                         const JigsawClassifierConfig& config, int64_t step) {
  torch::serialize::OutputArchive ar;
  write_string(ar, "meta/task", "jigsaw");
  write_int(ar, "meta/step", step);
  write_nse_meta(ar, model.nse);
  write_int(ar, "meta/head_layers", config.num_fc_layers);
  write_int(ar, "meta/head_hidden", config.hidden_dim);
  save_module(ar, "nse", *model.nse);
  save_module(ar, "jigsaw", *model.classifier);
  save_archive_atomic(ar, path);
}

SSLCheckpoint load_ssl_checkpoint(const std::filesystem::path& path) {
  auto ar = load_archive(path);
  if (!has_key(ar, "meta/task")) throw DataError(path.string() + ": not a self-supervised checkpoint");
  SSLCheckpoint ck;
  ck.task = read_string(ar, "meta/task");
  ck.step = read_int(ar, "meta/step");
  ck.nse = read_nse(ar);
  const int feature_dim = ck.nse->config().out_channels;
  const int layers = static_cast<int>(read_int(ar, "meta/head_layers"));
  const int hidden = static_cast<int>(read_int(ar, "meta/head_hidden"));
  if (ck.task == "predict") {
    ck.strategy = parse_strategy(read_string(ar, "meta/strategy"));
    PredictorConfig pc{layers, hidden, context_count(ck.strategy), feature_dim};
    ck.predictor = build_predictor(pc, 0);
    load_module(ar, "predictor", *ck.predictor);
    ck.predictor->eval();
  } else if (ck.task == "jigsaw") {
    JigsawClassifierConfig jc{layers, hidden, feature_dim};
    ck.classifier = build_jigsaw_classifier(jc, 0);
    load_module(ar, "jigsaw", *ck.classifier);
    ck.classifier->eval();
  } else {
    throw DataError(path.string() + ": unknown task '" + ck.task + "'");
  }
  ck.nse->eval();
  return ck;
}

NSE load_nse(const std::filesystem::path& path) {
  auto ar = load_archive(path);
  NSE nse = read_nse(ar);
  nse->eval();
  return nse;
}

}  // namespace spsr
