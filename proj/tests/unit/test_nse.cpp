#include "spsr/error.hpp"
#include "spsr/nse.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace spsr;

TEST(ReceptiveField, Examples) {
  const auto rf = receptive_field_of(NSEConfig{});
  EXPECT_EQ(rf.size, 31);
  EXPECT_EQ(rf.stride, 4);
  EXPECT_EQ(receptive_field_of(3, {1}).size, 3);
  EXPECT_EQ(receptive_field_of(3, {1}).stride, 1);
  EXPECT_EQ(receptive_field_of(3, {2, 2}).size, 7);
  EXPECT_EQ(receptive_field_of(3, {2, 2}).stride, 4);
}

TEST(ReceptiveField, BruteForceRecurrence) {
  // Track the input interval seen by output index 0 layer by layer.
  auto brute = [](int k, const std::vector<int>& strides) {
    int64_t lo = 0, hi = 0, step = 1;
    for (int s : strides) {
      lo -= (k / 2) * step;
      hi += (k / 2) * step;
      step *= s;
    }
    return std::pair<int64_t, int64_t>{hi - lo + 1, step};
  };
  for (const auto& strides : std::vector<std::vector<int>>{{2, 1, 1, 2, 1, 1}, {1, 2, 1, 2, 1, 1}, {2, 2}, {1, 1, 1}}) {
    const auto rf = receptive_field_of(3, strides);
    const auto [size, stride] = brute(3, strides);
    EXPECT_EQ(rf.size, size);
    EXPECT_EQ(rf.stride, stride);
  }
}

TEST(NSEConfig, RejectsOtherPlacements) {
  NSEConfig c;
  c.strides = {1, 2, 1, 2, 1, 1};
  EXPECT_EQ(receptive_field_of(c).size, 29);
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(build_nse(c, 0), ConfigError);
  c.strides = {2, 1, 1, 1, 1, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c = NSEConfig{};
  c.num_conv_layers = 5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(NSE, OutputShape) {
  auto nse = build_nse(NSEConfig{}, 0);
  torch::NoGradGuard no_grad;
  EXPECT_EQ(extract_structure_features(nse, torch::rand({1, 3, 128, 128})).sizes(),
            (std::vector<int64_t>{1, 32, 32, 32}));
  for (int64_t s : {32, 84, 200}) {
    auto f = extract_structure_features(nse, torch::rand({2, 3, s, s + 4}));
    EXPECT_EQ(f.size(2), s / 4);
    EXPECT_EQ(f.size(3), (s + 4) / 4);
  }
}

TEST(NSE, InputErrors) {
  auto nse = build_nse(NSEConfig{}, 0);
  EXPECT_THROW(extract_structure_features(nse, torch::rand({1, 1, 64, 64})), ShapeError);
  EXPECT_THROW(extract_structure_features(nse, torch::rand({1, 3, 28, 64})), ShapeError);
  EXPECT_THROW(extract_structure_features(nse, torch::rand({3, 64, 64})), ShapeError);
}

TEST(NSE, SameSeedSameParameters) {
  auto a = build_nse(NSEConfig{}, 11);
  auto b = build_nse(NSEConfig{}, 11);
  auto c = build_nse(NSEConfig{}, 12);
  auto pa = a->parameters(), pb = b->parameters(), pc = c->parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (size_t i = 0; i < pa.size(); ++i) EXPECT_TRUE(torch::equal(pa[i], pb[i]));
  EXPECT_FALSE(torch::equal(pa[0], pc[0]));
}

TEST(NSE, LocalityMatchesDeclaredWindow) {
  auto nse = build_nse(NSEConfig{}, 3);
  nse->to(torch::kDouble);
  const auto rf = receptive_field_of(NSEConfig{});
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int64_t> pos(0, 15);
  auto img = torch::rand({1, 3, 64, 64}, torch::kDouble);
  for (int trial = 0; trial < 5; ++trial) {
    const int64_t r = pos(rng), c = pos(rng);
    auto x = img.clone().requires_grad_(true);
    auto f = nse->forward(x);
    auto w = torch::randn({32}, torch::kDouble);
    (f[0].select(1, r).select(1, c) * w).sum().backward();
    auto sens = x.grad().abs().sum(1)[0];
    const auto win = feature_window(rf, r, c);
    double outside = 0.0, ring = 0.0, inside = 0.0;
    auto acc = sens.accessor<double, 2>();
    for (int64_t y = 0; y < 64; ++y) {
      for (int64_t xx = 0; xx < 64; ++xx) {
        const bool in = y >= win.row0 && y <= win.row1 && xx >= win.col0 && xx <= win.col1;
        if (!in) {
          outside += acc[y][xx];
          continue;
        }
        inside += acc[y][xx];
        const bool edge = y == win.row0 || y == win.row1 || xx == win.col0 || xx == win.col1;
        if (edge) ring += acc[y][xx];
      }
    }
    EXPECT_EQ(outside, 0.0) << "feature (" << r << ", " << c << ")";
    EXPECT_GT(inside, 0.0);
    // The window is tight: its boundary (where it lies on the image) is reached.
    if (win.row1 < 64 && win.col1 < 64) EXPECT_GT(ring, 0.0);
  }
}
