#include "spsr/checkpoint.hpp"
#include "spsr/error.hpp"
#include "spsr/ssl_training.hpp"
#include "spsr/synthetic.hpp"
#include "spsr/trainer.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

using namespace spsr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("spsr_trainer_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig tiny(Variant v = Variant::SPSR_G) {
  auto c = RunConfig::desk();
  c.generator = GeneratorConfig::desk(2, 8, 8);
  c.critics.base_channels = 8;
  c.critics.perceptual.layer_id = "conv2_2";
  c.data.batch_size = 2;
  c.data.lr_patch = 16;
  c.data.synthetic_images = 1;
  c.data.synthetic_size = 96;
  c.train.variant = v;
  c.train.seed = 3;
  return c;
}

std::vector<DatasetItem> data(const RunConfig& c) { return load_training_data(c); }

fs::path nse_archive(const fs::path& dir) {
  auto nse = build_nse(NSEConfig{}, 17);
  torch::serialize::OutputArchive ar;
  save_module(ar, "nse", *nse);
  const auto path = dir / "nse.pt";
  save_archive_atomic(ar, path);
  return path;
}

std::vector<torch::Tensor> snapshot(const torch::nn::Module& m) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters()) out.push_back(p.detach().clone());
  return out;
}

bool unchanged(const torch::nn::Module& m, const std::vector<torch::Tensor>& snap) {
  const auto ps = m.parameters();
  for (size_t i = 0; i < ps.size(); ++i) {
    if (!torch::equal(ps[i], snap[i])) return false;
  }
  return true;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Schedule, MilestoneHalving) {
  const std::vector<int64_t> m{50000, 100000, 200000, 300000};
  EXPECT_EQ(milestone_lr(1e-4, m, 0.5, 0), 1e-4);
  EXPECT_EQ(milestone_lr(1e-4, m, 0.5, 49999), 1e-4);
  EXPECT_EQ(milestone_lr(1e-4, m, 0.5, 50000), 0.5e-4);
  EXPECT_EQ(milestone_lr(1e-4, m, 0.5, 100000), 0.25 * 1e-4);
  EXPECT_EQ(milestone_lr(1e-4, m, 0.5, 100001), 0.25 * 1e-4);
  EXPECT_EQ(milestone_lr(1e-4, m, 0.5, 400000), 1e-4 / 16);
}

TEST(Schedule, TrainerFollowsMilestones) {
  auto c = tiny();
  c.train.lr_milestones = {2, 3};
  Trainer t(c, TrainMode::adversarial, data(c));
  const auto steps = t.run_steps(4);
  EXPECT_EQ(steps[0].lr, c.train.lr_g);
  EXPECT_EQ(steps[1].lr, c.train.lr_g);
  EXPECT_EQ(steps[2].lr, c.train.lr_g * 0.5);
  EXPECT_EQ(steps[3].lr, c.train.lr_g * 0.25);
  EXPECT_EQ(t.current_lr_d(), c.train.lr_d * 0.25);
}

TEST(Trainer, StructureVariantsNeedAnExtractorCheckpoint) {
  for (auto v : {Variant::SPSR_P, Variant::SPSR_J}) {
    auto c = tiny(v);
    EXPECT_THROW(Trainer(c, TrainMode::adversarial, data(c)), ConfigError);
    c.train.nse_checkpoint = "/nonexistent/nse.pt";
    EXPECT_THROW(Trainer(c, TrainMode::adversarial, data(c)), DataError);
  }
  auto c = tiny(Variant::SPSR_P);
  EXPECT_NO_THROW(Trainer(c, TrainMode::pretrain, data(c)));
}

TEST(Trainer, ActiveCritics) {
  const auto dir = fresh_dir("critics");
  auto g = tiny();
  Trainer tg(g, TrainMode::adversarial, data(g));
  EXPECT_EQ(tg.active_discriminators().size(), 2u);
  auto p = tiny(Variant::SPSR_P);
  p.train.nse_checkpoint = nse_archive(dir).string();
  Trainer tp(p, TrainMode::adversarial, data(p));
  ASSERT_EQ(tp.active_discriminators().size(), 1u);
  EXPECT_EQ((*tp.active_discriminators()[0])->config().kind, DiscriminatorKind::structure_feature);
  const auto r = tp.step();
  for (const char* k : {"d_sf", "pix_sf", "adv_sf", "per", "pix_i", "pix_gb", "total"}) EXPECT_TRUE(r.terms.count(k)) << k;
  EXPECT_FALSE(r.terms.count("adv_i"));
  fs::remove_all(dir);
}

TEST(Trainer, CriticAndGeneratorUpdatesAreIsolated) {
  const auto dir = fresh_dir("isolation");
  for (auto v : {Variant::SPSR_G, Variant::SPSR_P}) {
    auto c = tiny(v);
    c.train.nse_checkpoint = nse_archive(dir).string();
    Trainer t(c, TrainMode::adversarial, data(c));
    for (int it = 0; it < 2; ++it) {
      const auto g0 = snapshot(*t.generator());
      std::vector<std::vector<torch::Tensor>> d0, d1;
      for (auto* d : t.active_discriminators()) d0.push_back(snapshot(**d));
      bool hooked = false;
      t.set_critic_hook([&] {
        hooked = true;
        EXPECT_TRUE(unchanged(*t.generator(), g0)) << "critic step moved the generator";
        const auto ds = t.active_discriminators();
        for (size_t i = 0; i < ds.size(); ++i) {
          EXPECT_FALSE(unchanged(**ds[i], d0[i])) << "critic not updated";
          d1.push_back(snapshot(**ds[i]));
        }
      });
      t.step();
      EXPECT_TRUE(hooked);
      EXPECT_FALSE(unchanged(*t.generator(), g0));
      const auto ds = t.active_discriminators();
      for (size_t i = 0; i < ds.size(); ++i) {
        EXPECT_TRUE(unchanged(**ds[i], d1[i])) << "generator step moved a critic";
      }
    }
  }
  fs::remove_all(dir);
}

TEST(Trainer, ExtractorStaysBitIdentical) {
  const auto dir = fresh_dir("frozen");
  auto c = tiny(Variant::SPSR_J);
  c.train.nse_checkpoint = nse_archive(dir).string();
  Trainer t(c, TrainMode::adversarial, data(c));
  const auto reference = load_nse(c.train.nse_checkpoint);
  t.run_steps(3);
  EXPECT_TRUE(unchanged(*t.nse(), snapshot(*reference)));
  fs::remove_all(dir);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = fresh_dir("bytes");
  for (auto mode : {TrainMode::pretrain, TrainMode::adversarial}) {
    auto c = tiny();
    Trainer t(c, mode, data(c));
    t.run_steps(2);
    // The archive embeds the file stem, so both copies share a name.
    fs::create_directories(dir / "first");
    fs::create_directories(dir / "second");
    t.save(dir / "first" / "ckpt.pt");
    auto resumed = Trainer::resume(dir / "first" / "ckpt.pt", data(c));
    EXPECT_EQ(resumed->iteration(), 2);
    EXPECT_EQ(resumed->mode(), mode);
    resumed->save(dir / "second" / "ckpt.pt");
    EXPECT_TRUE(file_bytes(dir / "first" / "ckpt.pt") == file_bytes(dir / "second" / "ckpt.pt")) << to_string(mode);
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, MismatchedShapesNameTheTensor) {
  const auto dir = fresh_dir("mismatch");
  auto c = tiny();
  Trainer t(c, TrainMode::pretrain, data(c));
  t.save(dir / "small.pt");
  auto wide = tiny();
  wide.generator.base_channels = 12;
  wide.train.init_from = (dir / "small.pt").string();
  try {
    Trainer w(wide, TrainMode::pretrain, data(wide));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("generator/conv_first/weight"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Checkpoint, InterruptedRunMatchesUninterrupted) {
  const auto dir = fresh_dir("resume");
  const auto nse = nse_archive(dir);
  for (auto v : {Variant::SPSR_G, Variant::SPSR_P}) {
    auto c = tiny(v);
    c.data.augment = true;
    c.train.nse_checkpoint = nse.string();
    Trainer straight(c, TrainMode::adversarial, data(c));
    const auto full = straight.run_steps(10);

    Trainer first(c, TrainMode::adversarial, data(c));
    first.run_steps(5);
    first.save(dir / "half.pt");
    auto second = Trainer::resume(dir / "half.pt", data(c));
    const auto rest = second->run_steps(5);

    EXPECT_EQ(rest.back().terms, full.back().terms);
    EXPECT_TRUE(unchanged(*second->generator(), snapshot(*straight.generator())));
    auto a = second->active_discriminators();
    auto b = straight.active_discriminators();
    for (size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(unchanged(**a[i], snapshot(**b[i])));
  }
  fs::remove_all(dir);
}

TEST(Pretrain, PixelLossHalvesOnOneImage) {
  auto c = RunConfig::desk();
  c.data.synthetic_images = 1;
  c.train.total_iters = 200;
  Trainer t(c, TrainMode::pretrain, data(c));
  const auto steps = t.run_steps(200);
  double tail = 0;
  for (size_t i = 180; i < 200; ++i) tail += steps[i].terms.at("pix_i");
  tail /= 20;
  for (const auto& s : steps) EXPECT_TRUE(std::isfinite(s.terms.at("pix_i")));
  EXPECT_EQ(steps[0].terms.size(), 1u);
  EXPECT_LT(tail, 0.5 * steps[0].terms.at("pix_i")) << "first " << steps[0].terms.at("pix_i") << " tail " << tail;
}

TEST(Trainer, NonFiniteLossNamesTheTerm) {
  auto c = tiny();
  std::vector<DatasetItem> bad{{"nan", torch::full({3, 96, 96}, std::nan("")), {}}};
  Trainer t(c, TrainMode::pretrain, bad);
  try {
    t.step();
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("pix_i"), std::string::npos);
  }
}

TEST(Trainer, RunLogsAndCheckpoints) {
  const auto dir = fresh_dir("run");
  auto c = tiny();
  c.train.total_iters = 4;
  c.train.log_every = 2;
  c.train.checkpoint_every = 2;
  Trainer t(c, TrainMode::adversarial, data(c));
  std::ostringstream log;
  t.run(&log, dir);
  std::istringstream lines(log.str());
  std::string line;
  std::vector<std::string> all;
  while (std::getline(lines, line)) all.push_back(line);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0].rfind("iter=1 loss/", 0), 0u);
  EXPECT_EQ(all[2].rfind("iter=4 ", 0), 0u);
  EXPECT_NE(all[2].find(" loss/pix_i="), std::string::npos);
  EXPECT_NE(all[2].find(" lr="), std::string::npos);
  for (const char* f : {"iter_2.pt", "iter_4.pt", "latest.pt"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(read_checkpoint_config(dir / "latest.pt").to_ini(), c.to_ini());
  auto gen = load_generator(dir / "latest.pt");
  EXPECT_TRUE(unchanged(*gen, snapshot(*t.generator())));
  fs::remove_all(dir);
}
