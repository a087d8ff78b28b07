#pragma once

#include "spsr/critics.hpp"
#include "spsr/generator.hpp"
#include "spsr/gradient_ops.hpp"
#include "spsr/nse.hpp"

#include <torch/torch.h>

#include <map>
#include <string>
#include <utility>

namespace spsr {

struct LossWeights {
  double beta_I = 0.01;       // image pixel loss
  double gamma_I = 0.005;     // image adversarial loss
  double beta_GM_SR = 0.01;   // gradient-map pixel loss on the SR image
  double gamma_GM_SR = 0.005; // gradient-map adversarial loss
  double beta_GM_GB = 0.5;    // gradient-branch supervision
  double beta_SF = 1e-7;      // structure-feature pixel loss
  double gamma_SF = 0.1;      // structure-feature adversarial loss

  void validate() const;
};

enum class Variant { SPSR_G, SPSR_P, SPSR_J };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
inline bool uses_structure_extractor(Variant v) { return v != Variant::SPSR_G; }

enum class AdversarialForm { relativistic_average, standard };

// Mean absolute difference. Throws ShapeError on shape mismatch.
torch::Tensor pixel_l1(const torch::Tensor& a, const torch::Tensor& b);

torch::Tensor perceptual_loss(const torch::Tensor& sr, const torch::Tensor& hr, PerceptualExtractor& ex);

// Relativistic average GAN objectives over raw logits, in log-sigmoid form:
//   d = -E[log s(r - mean f)] - E[log(1 - s(f - mean r))]
//   g = -E[log(1 - s(r - mean f))] - E[log s(f - mean r)]
// With AdversarialForm::standard the means are dropped (vanilla GAN).
// Throws NumericError for an empty logit vector.
torch::Tensor ragan_d_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                           AdversarialForm form = AdversarialForm::relativistic_average);
torch::Tensor ragan_g_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits,
                           AdversarialForm form = AdversarialForm::relativistic_average);

struct AdversarialPair {
  torch::Tensor d_loss;  // fake branch detached from sr
  torch::Tensor g_loss;  // gradient flows into sr
};

torch::Tensor gradient_pixel_loss(const torch::Tensor& sr, const torch::Tensor& hr);

AdversarialPair gradient_adversarial_pair(Discriminator& d_gm, const torch::Tensor& sr,
                                          const torch::Tensor& hr,
                                          AdversarialForm form = AdversarialForm::relativistic_average);

torch::Tensor gradient_branch_loss(const torch::Tensor& predicted_gm, const torch::Tensor& hr);

// The extractor is treated as frozen: its parameters never accumulate gradient here.
torch::Tensor structure_pixel_loss(const torch::Tensor& sr, const torch::Tensor& hr, NSE& nse);

AdversarialPair structure_adversarial_pair(Discriminator& d_sf, const torch::Tensor& sr,
                                           const torch::Tensor& hr, NSE& nse,
                                           AdversarialForm form = AdversarialForm::relativistic_average);

// Models a total objective may touch. Pointers are non-owning; which ones must be
// set depends on the variant.
struct LossModels {
  PerceptualExtractor* perceptual = nullptr;
  Discriminator* disc_image = nullptr;
  Discriminator* disc_gm = nullptr;
  Discriminator* disc_sf = nullptr;
  NSE* nse = nullptr;
  AdversarialForm form = AdversarialForm::relativistic_average;
};

struct LossBreakdown {
  torch::Tensor total;
  // Unweighted terms keyed by log name (per, pix_i, adv_i, pix_gm, adv_gm, pix_gb, pix_sf, adv_sf).
  std::map<std::string, torch::Tensor> terms;
};

// SPSR-G: per + bI*pix_i + gI*adv_i + bGM*pix_gm + gGM*adv_gm + bGB*pix_gb
// SPSR-P/J: per + bI*pix_i + bSF*pix_sf + gSF*adv_sf + bGB*pix_gb
// Throws ConfigError if a model the variant needs is missing.
LossBreakdown total_generator_loss(Variant variant, const GeneratorOutput& outputs,
                                   const torch::Tensor& hr, const LossWeights& weights,
                                   const LossModels& models);

}  // namespace spsr
