#include "spsr/trainer.hpp"

#include "spsr/checkpoint.hpp"
#include "spsr/error.hpp"
#include "spsr/gradient_ops.hpp"
#include "spsr/ssl_training.hpp"
#include "spsr/synthetic.hpp"

#include <cmath>
#include <sstream>

namespace spsr {
namespace {

using torch::optim::Adam;
using torch::optim::AdamOptions;

void set_lr(Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) static_cast<AdamOptions&>(group.options()).lr(lr);
}

AdamOptions adam_options(const TrainConfig& t, double lr) {
  return AdamOptions(lr).betas({t.adam_beta1, t.adam_beta2}).eps(t.adam_eps);
}

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void check_finite(const std::map<std::string, double>& terms, int64_t iteration) {
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite loss term '" + name + "' at iteration " + std::to_string(iteration));
    }
  }
}

}  // namespace

std::string to_string(TrainMode mode) { return mode == TrainMode::pretrain ? "pretrain" : "adversarial"; }

TrainMode parse_train_mode(const std::string& s) {
  if (s == "pretrain") return TrainMode::pretrain;
  if (s == "adversarial") return TrainMode::adversarial;
  throw ConfigError("unknown training mode '" + s + "'");
}

double milestone_lr(double base, const std::vector<int64_t>& milestones, double gamma, int64_t iteration) {
  int passed = 0;
  for (auto m : milestones) passed += m <= iteration ? 1 : 0;
  return base * std::pow(gamma, passed);
}

std::vector<DatasetItem> load_training_data(const RunConfig& config) {
  if (config.data.synthetic_images > 0) {
    const int64_t size = config.data.synthetic_size;
    return synthetic_dataset(config.data.synthetic_images, size, size, config.train.seed);
  }
  DatasetSpec spec;
  spec.root = config.data.root;
  spec.hr_subdir = config.data.hr_subdir;
  spec.cache_lr = config.data.cache_lr;
  spec.scale = config.generator.scale_factor;
  return load_dataset(spec);
}

std::string StepResult::log_line() const {
  std::ostringstream out;
  out << "iter=" << iteration;
  for (const auto& [name, v] : terms) out << " loss/" << name << "=" << v;
  out << " lr=" << lr;
  return out.str();
}

Trainer::Trainer(RunConfig config, TrainMode mode, std::vector<DatasetItem> dataset)
    : Trainer(std::move(config), mode, std::move(dataset), true) {}

Trainer::Trainer(RunConfig config, TrainMode mode, std::vector<DatasetItem> dataset, bool load_assets)
    : config_(std::move(config)), mode_(mode), dataset_(std::move(dataset)), rng_(config_.train.seed) {
  if (mode_ == TrainMode::pretrain) {
    // The structure extractor is irrelevant to L1 pretraining.
    const Variant v = config_.train.variant;
    config_.train.variant = Variant::SPSR_G;
    config_.validate();
    config_.train.variant = v;
  } else {
    config_.validate();
  }
  if (dataset_.empty()) throw DataError("training dataset is empty");
  // Small weights late in training otherwise hit denormal arithmetic on CPU.
  at::globalContext().setFlushDenormal(true);

  const auto& t = config_.train;
  generator_ = build_generator(config_.generator, t.seed);
  if (load_assets && !t.init_from.empty()) {
    auto ar = load_archive(t.init_from);
    load_module(ar, "generator", *generator_);
  }
  const double lr_g = mode_ == TrainMode::pretrain ? t.pretrain_lr : t.lr_g;
  opt_g_ = std::make_unique<Adam>(generator_->parameters(), adam_options(t, lr_g));
  if (mode_ == TrainMode::pretrain) return;

  const int hr = config_.hr_patch();
  const int nf = config_.critics.base_channels;
  if (uses_structure_extractor(t.variant)) {
    disc_sf_ = build_discriminator(
        DiscriminatorConfig::for_kind(DiscriminatorKind::structure_feature, hr / 4, nf), t.seed + 3);
    if (load_assets) {
      nse_ = load_nse(t.nse_checkpoint);
    } else {
      nse_ = build_nse(config_.ssl.nse, 0);
    }
    nse_->eval();
    for (auto& p : nse_->parameters()) p.set_requires_grad(false);
  } else {
    disc_image_ = build_discriminator(DiscriminatorConfig::for_kind(DiscriminatorKind::image, hr, nf), t.seed + 1);
    disc_gm_ =
        build_discriminator(DiscriminatorConfig::for_kind(DiscriminatorKind::gradient_map, hr, nf), t.seed + 2);
  }
  perceptual_ = build_perceptual_extractor(config_.critics.perceptual);
  std::vector<torch::Tensor> d_params;
  for (auto* d : active_discriminators()) {
    for (auto& p : (*d)->parameters()) d_params.push_back(p);
  }
  opt_d_ = std::make_unique<Adam>(d_params, adam_options(t, t.lr_d));
}

std::vector<Discriminator*> Trainer::active_discriminators() {
  std::vector<Discriminator*> out;
  for (auto* d : {&disc_image_, &disc_gm_, &disc_sf_}) {
    if (*d) out.push_back(d);
  }
  return out;
}

double Trainer::current_lr_g() const {
  const auto& t = config_.train;
  const double base = mode_ == TrainMode::pretrain ? t.pretrain_lr : t.lr_g;
  return milestone_lr(base, t.lr_milestones, t.lr_gamma, iteration_);
}

double Trainer::current_lr_d() const {
  const auto& t = config_.train;
  return milestone_lr(t.lr_d, t.lr_milestones, t.lr_gamma, iteration_);
}

torch::Tensor Trainer::discriminator_loss(const torch::Tensor& sr, const torch::Tensor& hr,
                                          std::map<std::string, double>& terms) {
  const auto form = config_.critics.adversarial_form;
  const torch::Tensor fake = sr.detach();
  if (disc_sf_) {
    torch::Tensor real_f, fake_f;
    {
      torch::NoGradGuard no_grad;
      real_f = extract_structure_features(nse_, hr);
      fake_f = extract_structure_features(nse_, fake);
    }
    auto d = ragan_d_loss(discriminate(disc_sf_, real_f), discriminate(disc_sf_, fake_f), form);
    terms["d_sf"] = d.item<double>();
    return d;
  }
  const auto d_i = ragan_d_loss(discriminate(disc_image_, hr), discriminate(disc_image_, fake), form);
  torch::Tensor real_gm, fake_gm;
  {
    torch::NoGradGuard no_grad;
    real_gm = extract_gradient_map(hr).data;
    fake_gm = extract_gradient_map(fake).data;
  }
  const auto d_gm = ragan_d_loss(discriminate(disc_gm_, real_gm), discriminate(disc_gm_, fake_gm), form);
  terms["d_i"] = d_i.item<double>();
  terms["d_gm"] = d_gm.item<double>();
  return d_i + d_gm;
}

StepResult Trainer::step() {
  const auto& t = config_.train;
  StepResult result;
  result.iteration = iteration_ + 1;
  result.lr = current_lr_g();
  set_lr(*opt_g_, result.lr);

  PatchOptions po;
  po.batch_size = config_.data.batch_size;
  po.lr_patch = config_.data.lr_patch;
  po.scale = config_.generator.scale_factor;
  po.augment = config_.data.augment;
  const PatchBatch batch = sample_patch_batch(dataset_, po, rng_);

  generator_->train();
  GeneratorOutput out = generator_->forward(batch.lr);

  if (mode_ == TrainMode::pretrain) {
    opt_g_->zero_grad();
    auto loss = pixel_l1(out.sr_image, batch.hr);
    result.terms["pix_i"] = loss.item<double>();
    check_finite(result.terms, result.iteration);
    loss.backward();
    opt_g_->step();
    ++iteration_;
    return result;
  }

  set_lr(*opt_d_, current_lr_d());
  opt_d_->zero_grad();
  auto d_loss = discriminator_loss(out.sr_image, batch.hr, result.terms);
  check_finite(result.terms, result.iteration);
  d_loss.backward();
  opt_d_->step();
  if (critic_hook_) critic_hook_();

  LossModels models;
  models.perceptual = &perceptual_;
  models.disc_image = disc_image_ ? &disc_image_ : nullptr;
  models.disc_gm = disc_gm_ ? &disc_gm_ : nullptr;
  models.disc_sf = disc_sf_ ? &disc_sf_ : nullptr;
  models.nse = nse_ ? &nse_ : nullptr;
  models.form = config_.critics.adversarial_form;
  opt_g_->zero_grad();
  LossBreakdown g = total_generator_loss(t.variant, out, batch.hr, config_.losses, models);
  for (const auto& [name, v] : g.terms) result.terms[name] = v.item<double>();
  result.terms["total"] = g.total.item<double>();
  check_finite(result.terms, result.iteration);
  g.total.backward();
  opt_g_->step();
  ++iteration_;
  return result;
}

std::vector<StepResult> Trainer::run_steps(int64_t count) {
  std::vector<StepResult> out;
  for (int64_t i = 0; i < count; ++i) out.push_back(step());
  return out;
}

void Trainer::run(std::ostream* log, const std::filesystem::path& ckpt_dir) {
  const auto& t = config_.train;
  while (iteration_ < t.total_iters) {
    StepResult r = step();
    if (log && (t.log_every <= 0 || r.iteration % t.log_every == 0 || r.iteration == 1)) {
      *log << r.log_line() << '\n' << std::flush;
    }
    if (!ckpt_dir.empty() && t.checkpoint_every > 0 && r.iteration % t.checkpoint_every == 0) {
      save(ckpt_dir / ("iter_" + std::to_string(r.iteration) + ".pt"));
    }
  }
  if (!ckpt_dir.empty()) save(ckpt_dir / "latest.pt");
}

void Trainer::save(const std::filesystem::path& path) const {
  torch::serialize::OutputArchive ar;
  write_int(ar, "meta/iteration", iteration_);
  write_string(ar, "meta/mode", to_string(mode_));
  write_string(ar, "meta/config", config_.to_ini());
  write_string(ar, "meta/rng", rng_state(rng_));
  save_module(ar, "generator", *generator_);
  if (disc_image_) save_module(ar, "disc_image", *disc_image_);
  if (disc_gm_) save_module(ar, "disc_gm", *disc_gm_);
  if (disc_sf_) save_module(ar, "disc_sf", *disc_sf_);
  if (nse_) save_module(ar, "nse", *nse_);
  save_adam(ar, "optim/g", *opt_g_);
  if (opt_d_) save_adam(ar, "optim/d", *opt_d_);
  save_archive_atomic(ar, path);
}

void Trainer::load_state(const std::filesystem::path& path) {
  auto ar = load_archive(path);
  iteration_ = read_int(ar, "meta/iteration");
  std::istringstream rng_in(read_string(ar, "meta/rng"));
  rng_in >> rng_;
  if (!rng_in) throw DataError(path.string() + ": corrupt rng state");
  load_module(ar, "generator", *generator_);
  if (disc_image_) load_module(ar, "disc_image", *disc_image_);
  if (disc_gm_) load_module(ar, "disc_gm", *disc_gm_);
  if (disc_sf_) load_module(ar, "disc_sf", *disc_sf_);
  if (nse_) load_module(ar, "nse", *nse_);
  load_adam(ar, "optim/g", *opt_g_);
  if (opt_d_) load_adam(ar, "optim/d", *opt_d_);
}

std::unique_ptr<Trainer> Trainer::resume(const std::filesystem::path& checkpoint,
                                         std::vector<DatasetItem> dataset) {
  auto ar = load_archive(checkpoint);
  RunConfig config = RunConfig::from_ini(read_string(ar, "meta/config"));
  const TrainMode mode = parse_train_mode(read_string(ar, "meta/mode"));
  std::unique_ptr<Trainer> trainer(new Trainer(std::move(config), mode, std::move(dataset), false));
  trainer->load_state(checkpoint);
  return trainer;
}

RunConfig read_checkpoint_config(const std::filesystem::path& checkpoint) {
  auto ar = load_archive(checkpoint);
  if (!has_key(ar, "meta/config")) throw DataError(checkpoint.string() + ": not a training checkpoint");
  return RunConfig::from_ini(read_string(ar, "meta/config"));
}

Generator load_generator(const std::filesystem::path& checkpoint) {
  const RunConfig config = read_checkpoint_config(checkpoint);
  Generator gen = build_generator(config.generator, 0);
  auto ar = load_archive(checkpoint);
  load_module(ar, "generator", *gen);
  gen->eval();
  return gen;
}

}  // namespace spsr
