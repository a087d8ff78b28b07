#include "spsr/losses.hpp"

#include "spsr/error.hpp"
#include "spsr/nse.hpp"

namespace spsr {
namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + torch::str(a.sizes()) + " vs " +
                     torch::str(b.sizes()));
  }
}

void check_logits(const torch::Tensor& real, const torch::Tensor& fake) {
  if (real.numel() == 0 || fake.numel() == 0) {
    throw NumericError("adversarial loss: empty logit batch");
  }
}

// Relativistic offsets; the standard form compares raw logits.
std::pair<torch::Tensor, torch::Tensor> relativistic(const torch::Tensor& real, const torch::Tensor& fake,
                                                     AdversarialForm form) {
  if (form == AdversarialForm::standard) return {real, fake};
  return {real - fake.mean(), fake - real.mean()};
}

// Losses accept patches smaller than the receptive field; border features then see
// the convolutions' zero padding.
torch::Tensor loss_features(NSE& nse, const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ShapeError("structure loss: expected [B, 3, H, W], got " + torch::str(x.sizes()));
  }
  return nse->forward(x);
}

// Extractor forward with parameters frozen for the duration of the call; gradient
// still flows to the input.
torch::Tensor frozen_features(NSE& nse, const torch::Tensor& x) {
  std::vector<bool> flags;
  for (auto& p : nse->parameters()) {
    flags.push_back(p.requires_grad());
    p.set_requires_grad(false);
  }
  auto out = loss_features(nse, x);
  size_t i = 0;
  for (auto& p : nse->parameters()) p.set_requires_grad(flags[i++]);
  return out;
}

}  // namespace

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"beta_I", beta_I},       {"gamma_I", gamma_I},       {"beta_GM_SR", beta_GM_SR},
      {"gamma_GM_SR", gamma_GM_SR}, {"beta_GM_GB", beta_GM_GB}, {"beta_SF", beta_SF},
      {"gamma_SF", gamma_SF}};
  for (const auto& [name, value] : all) {
    if (!(value >= 0.0)) throw ConfigError(std::string("losses.") + name + " must be >= 0");
  }
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::SPSR_G: return "SPSR_G";
    case Variant::SPSR_P: return "SPSR_P";
    case Variant::SPSR_J: return "SPSR_J";
  }
  return "unknown";
}

Variant parse_variant(const std::string& s) {
  if (s == "SPSR_G" || s == "G" || s == "spsr-g") return Variant::SPSR_G;
  if (s == "SPSR_P" || s == "P" || s == "spsr-p") return Variant::SPSR_P;
  if (s == "SPSR_J" || s == "J" || s == "spsr-j") return Variant::SPSR_J;
  throw ConfigError("unknown variant '" + s + "' (expected SPSR_G, SPSR_P or SPSR_J)");
}

torch::Tensor pixel_l1(const torch::Tensor& a, const torch::Tensor& b) {
  check_same_shape(a, b, "pixel_l1");
  return (a - b).abs().mean();
}

torch::Tensor perceptual_loss(const torch::Tensor& sr, const torch::Tensor& hr, PerceptualExtractor& ex) {
  check_same_shape(sr, hr, "perceptual_loss");
  auto real = [&] {
    torch::NoGradGuard guard;
    return perceptual_features(ex, hr);
  }();
  return pixel_l1(perceptual_features(ex, sr), real);
}

torch::Tensor ragan_d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                           AdversarialForm form) {
  check_logits(real_logits, fake_logits);
  auto [r, f] = relativistic(real_logits, fake_logits, form);
  // log(1 - s(x)) = log s(-x)
  return -torch::log_sigmoid(r).mean() - torch::log_sigmoid(-f).mean();
}

torch::Tensor ragan_g_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                           AdversarialForm form) {
  check_logits(real_logits, fake_logits);
  auto [r, f] = relativistic(real_logits, fake_logits, form);
  if (form == AdversarialForm::standard) return -torch::log_sigmoid(f).mean();
  return -torch::log_sigmoid(-r).mean() - torch::log_sigmoid(f).mean();
}

torch::Tensor gradient_pixel_loss(const torch::Tensor& sr, const torch::Tensor& hr) {
  check_same_shape(sr, hr, "gradient_pixel_loss");
  return pixel_l1(extract_gradient_map(sr).data, extract_gradient_map(hr).data);
}

AdversarialPair gradient_adversarial_pair(Discriminator& d_gm, const torch::Tensor& sr,
                                          const torch::Tensor& hr, AdversarialForm form) {
  check_same_shape(sr, hr, "gradient_adversarial_pair");
  auto fake_gm = extract_gradient_map(sr).data;
  auto real_gm = extract_gradient_map(hr).data;
  auto real_logits = discriminate(d_gm, real_gm);
  auto d_loss = ragan_d_loss(real_logits, discriminate(d_gm, fake_gm.detach()), form);
  auto g_loss = ragan_g_loss(real_logits, discriminate(d_gm, fake_gm), form);
  return {d_loss, g_loss};
}

torch::Tensor gradient_branch_loss(const torch::Tensor& predicted_gm, const torch::Tensor& hr) {
  check_same_shape(predicted_gm, hr, "gradient_branch_loss");
  return pixel_l1(predicted_gm, extract_gradient_map(hr).data);
}

torch::Tensor structure_pixel_loss(const torch::Tensor& sr, const torch::Tensor& hr, NSE& nse) {
  check_same_shape(sr, hr, "structure_pixel_loss");
  auto real = [&] {
    torch::NoGradGuard guard;
    return loss_features(nse, hr);
  }();
  return pixel_l1(frozen_features(nse, sr), real);
}

AdversarialPair structure_adversarial_pair(Discriminator& d_sf, const torch::Tensor& sr,
                                           const torch::Tensor& hr, NSE& nse, AdversarialForm form) {
  check_same_shape(sr, hr, "structure_adversarial_pair");
  auto real_sf = [&] {
    torch::NoGradGuard guard;
    return loss_features(nse, hr);
  }();
  auto fake_sf = frozen_features(nse, sr);
  auto real_logits = discriminate(d_sf, real_sf);
  auto d_loss = ragan_d_loss(real_logits, discriminate(d_sf, fake_sf.detach()), form);
  auto g_loss = ragan_g_loss(real_logits, discriminate(d_sf, fake_sf), form);
  return {d_loss, g_loss};
}

LossBreakdown total_generator_loss(Variant variant, const GeneratorOutput& outputs,
                                   const torch::Tensor& hr, const LossWeights& weights,
                                   const LossModels& models) {
  weights.validate();
  if (models.perceptual == nullptr) throw ConfigError("total loss: perceptual extractor missing");
  const auto& sr = outputs.sr_image;

  LossBreakdown out;
  auto& t = out.terms;
  t["per"] = perceptual_loss(sr, hr, *models.perceptual);
  t["pix_i"] = pixel_l1(sr, hr);
  if (outputs.predicted_gradient_map.defined()) {
    t["pix_gb"] = gradient_branch_loss(outputs.predicted_gradient_map, hr);
  }

  if (variant == Variant::SPSR_G) {
    if (models.disc_image == nullptr || models.disc_gm == nullptr) {
      throw ConfigError("total loss: SPSR_G needs the image and gradient-map discriminators");
    }
    auto real_logits = [&] {
      torch::NoGradGuard guard;
      return discriminate(*models.disc_image, hr);
    }();
    t["adv_i"] = ragan_g_loss(real_logits, discriminate(*models.disc_image, sr), models.form);
    t["pix_gm"] = gradient_pixel_loss(sr, hr);
    auto real_gm_logits = [&] {
      torch::NoGradGuard guard;
      return discriminate(*models.disc_gm, extract_gradient_map(hr).data);
    }();
    t["adv_gm"] = ragan_g_loss(real_gm_logits,
                               discriminate(*models.disc_gm, extract_gradient_map(sr).data), models.form);

    out.total = t["per"] + weights.beta_I * t["pix_i"] + weights.gamma_I * t["adv_i"] +
                weights.beta_GM_SR * t["pix_gm"] + weights.gamma_GM_SR * t["adv_gm"];
  } else {
    if (models.nse == nullptr || models.disc_sf == nullptr) {
      throw ConfigError("total loss: " + to_string(variant) +
                        " needs a structure extractor and the structure-feature discriminator");
    }
    t["pix_sf"] = structure_pixel_loss(sr, hr, *models.nse);
    auto real_sf_logits = [&] {
      torch::NoGradGuard guard;
      return discriminate(*models.disc_sf, loss_features(*models.nse, hr));
    }();
    t["adv_sf"] = ragan_g_loss(real_sf_logits,
                               discriminate(*models.disc_sf, frozen_features(*models.nse, sr)), models.form);
    out.total = t["per"] + weights.beta_I * t["pix_i"] + weights.beta_SF * t["pix_sf"] +
                weights.gamma_SF * t["adv_sf"];
  }
  if (t.count("pix_gb")) out.total = out.total + weights.beta_GM_GB * t["pix_gb"];
  return out;
}

}  // namespace spsr
