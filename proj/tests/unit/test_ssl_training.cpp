#include "spsr/checkpoint.hpp"
#include "spsr/error.hpp"
#include "spsr/ssl_training.hpp"
#include "spsr/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace spsr;

namespace {

std::vector<torch::Tensor> toy_set(int count, int64_t size) {
  std::vector<torch::Tensor> out;
  for (const auto& item : synthetic_dataset(count, size, size, 21)) out.push_back(item.hr);
  return out;
}

double mean(const std::vector<double>& v, size_t from, size_t to) {
  return std::accumulate(v.begin() + from, v.begin() + to, 0.0) / static_cast<double>(to - from);
}

bool same_parameters(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto pa = a.parameters(), pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (!torch::equal(pa[i], pb[i])) return false;
  }
  return true;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("spsr_test_" + name);
}

}  // namespace

TEST(DecaySchedule, StepsFromEpochs) {
  EXPECT_EQ(decay_steps_for_epochs(20, 800, 48), 20 * 17);
  EXPECT_EQ(decay_steps_for_epochs(30, 10, 48), 30);
  EXPECT_EQ(decay_steps_for_epochs(0, 800, 48), 0);
}

TEST(ContrastiveLoss, InitialLossOnRandomData) {
  torch::manual_seed(3);
  auto patches = torch::rand({4, 3, 128, 128});
  Rng probe(0);
  const auto n = sample_prediction_positions({32, 32}, SamplingStrategy::horizontal, -1, probe).negatives.size();
  const double uniform = std::log(static_cast<double>(n) + 1.0);
  torch::NoGradGuard no_grad;
  for (uint64_t seed : {0, 1, 2}) {
    auto nse = build_nse(NSEConfig{}, seed);
    auto predictor = build_predictor({}, seed + 1);
    Rng rng(seed);
    // With a unit temperature untrained similarities are close to uniform.
    const double unit = contrastive_batch_loss(nse, predictor, patches, SamplingStrategy::horizontal, 2, 1.0, rng)
                            .item<double>();
    EXPECT_NEAR(unit, uniform, 0.1 * uniform);
    // At tau = 64 the spread of untrained cosines is amplified; the positive is
    // exchangeable with the negatives, so the expected loss cannot fall below uniform.
    const double sharp =
        contrastive_batch_loss(nse, predictor, patches, SamplingStrategy::horizontal, 2, 64.0, rng).item<double>();
    EXPECT_GT(sharp, 0.9 * uniform);
    EXPECT_TRUE(std::isfinite(sharp));
  }
}

TEST(ContrastiveTraining, LossDecreasesOnToySet) {
  const auto images = toy_set(20, 160);
  SSLTrainOptions o;
  o.batch_size = 8;
  o.patch_size = 128;
  o.steps = 200;
  o.lr = 1e-3;
  o.seed = 1;
  auto model = train_nse_contrastive(images, NSEConfig{}, PredictorConfig{}, o);
  ASSERT_EQ(model.loss_curve.size(), 200u);
  const double first = mean(model.loss_curve, 0, 5);
  const double last = mean(model.loss_curve, 180, 200);
  EXPECT_LT(last, 0.9 * first) << "first " << first << " last " << last;
}

TEST(JigsawTraining, InitialLossNearChanceAndDecreases) {
  const auto images = toy_set(20, 160);
  SSLTrainOptions o;
  o.batch_size = 16;
  o.patch_size = 84;
  o.steps = 200;
  o.lr = 1e-3;
  o.seed = 2;
  auto model = train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o);
  EXPECT_NEAR(model.loss_curve.front(), std::log(24.0), 0.1 * std::log(24.0));
  EXPECT_LT(mean(model.loss_curve, 180, 200), 0.9 * mean(model.loss_curve, 0, 5));
}

TEST(SSLTraining, DeterministicGivenSeeds) {
  const auto images = toy_set(3, 128);
  SSLTrainOptions o;
  o.batch_size = 2;
  o.patch_size = 84;
  o.steps = 4;
  o.seed = 5;
  auto a = train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o);
  auto b = train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_TRUE(same_parameters(*a.nse, *b.nse));
  EXPECT_TRUE(same_parameters(*a.classifier, *b.classifier));

  o.patch_size = 100;
  auto c = train_nse_contrastive(images, NSEConfig{}, PredictorConfig{}, o);
  auto d = train_nse_contrastive(images, NSEConfig{}, PredictorConfig{}, o);
  EXPECT_EQ(c.loss_curve, d.loss_curve);
  EXPECT_TRUE(same_parameters(*c.nse, *d.nse));
}

TEST(SSLTraining, FrozenExtractorStaysFixed) {
  const auto images = toy_set(2, 128);
  auto init = build_nse(NSEConfig{}, 8);
  auto reference = build_nse(NSEConfig{}, 8);
  SSLTrainOptions o;
  o.batch_size = 2;
  o.patch_size = 84;
  o.steps = 3;
  o.freeze_nse = true;
  auto model = train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o, init);
  EXPECT_TRUE(same_parameters(*model.nse, *reference));
}

TEST(SSLTraining, Errors) {
  SSLTrainOptions o;
  o.steps = 1;
  EXPECT_THROW(train_nse_jigsaw({}, NSEConfig{}, JigsawClassifierConfig{}, o), DataError);
  PredictorConfig wrong;
  wrong.context_count = 4;
  o.patch_size = 100;
  o.batch_size = 1;
  EXPECT_THROW(train_nse_contrastive(toy_set(1, 128), NSEConfig{}, wrong, o), ConfigError);
}

TEST(SSLTraining, LearningRateDecaysEveryPeriod) {
  const auto images = toy_set(2, 128);
  SSLTrainOptions o;
  o.batch_size = 1;
  o.patch_size = 84;
  o.steps = 5;
  o.lr = 1e-3;
  o.lr_decay_every = 2;
  o.lr_decay_factor = 0.2;
  std::vector<double> lrs;
  o.on_step = [&](int64_t, double, double lr) { lrs.push_back(lr); };
  train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o);
  ASSERT_EQ(lrs.size(), 5u);
  EXPECT_DOUBLE_EQ(lrs[1], 1e-3);
  EXPECT_NEAR(lrs[2], 2e-4, 1e-15);
  EXPECT_NEAR(lrs[4], 4e-5, 1e-15);
}

TEST(SSLCheckpoint, RoundTrip) {
  const auto images = toy_set(2, 128);
  SSLTrainOptions o;
  o.batch_size = 1;
  o.patch_size = 100;
  o.steps = 2;
  o.strategy = SamplingStrategy::cross;
  PredictorConfig pc;
  pc.context_count = 4;
  auto model = train_nse_contrastive(images, NSEConfig{}, pc, o);
  const auto path = temp_file("ssl_predict.pt");
  save_ssl_checkpoint(path, model, pc, SamplingStrategy::cross, 2);
  auto ck = load_ssl_checkpoint(path);
  EXPECT_EQ(ck.task, "predict");
  EXPECT_EQ(ck.strategy, SamplingStrategy::cross);
  EXPECT_EQ(ck.step, 2);
  ASSERT_TRUE(ck.predictor);
  EXPECT_FALSE(ck.classifier);
  EXPECT_TRUE(same_parameters(*ck.nse, *model.nse));
  EXPECT_TRUE(same_parameters(*ck.predictor, *model.predictor));
  auto nse = load_nse(path);
  EXPECT_TRUE(same_parameters(*nse, *model.nse));
  std::filesystem::remove(path);

  o.patch_size = 84;
  auto jig = train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o);
  const auto jpath = temp_file("ssl_jigsaw.pt");
  save_ssl_checkpoint(jpath, jig, JigsawClassifierConfig{}, 2);
  auto jck = load_ssl_checkpoint(jpath);
  EXPECT_EQ(jck.task, "jigsaw");
  ASSERT_TRUE(jck.classifier);
  EXPECT_TRUE(same_parameters(*jck.classifier, *jig.classifier));
  std::filesystem::remove(jpath);
}

TEST(SSLCheckpoint, PeriodicSaves) {
  const auto images = toy_set(2, 128);
  SSLTrainOptions o;
  o.batch_size = 1;
  o.patch_size = 84;
  o.steps = 4;
  o.checkpoint_every = 2;
  o.checkpoint_path = temp_file("ssl_periodic.pt");
  std::filesystem::remove(o.checkpoint_path);
  train_nse_jigsaw(images, NSEConfig{}, JigsawClassifierConfig{}, o);
  ASSERT_TRUE(std::filesystem::exists(o.checkpoint_path));
  EXPECT_EQ(load_ssl_checkpoint(o.checkpoint_path).step, 4);
  std::filesystem::remove(o.checkpoint_path);
}

TEST(SSLCheckpoint, MissingFile) {
  EXPECT_THROW(load_ssl_checkpoint("/nonexistent/ssl.pt"), DataError);
  EXPECT_THROW(load_nse("/nonexistent/ssl.pt"), DataError);
}
