#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace oracle {
namespace {

double at(const torch::Tensor& t, int64_t b, int64_t c, int64_t y, int64_t x) {
  return t[b][c][y][x].item<double>();
}

// [H, W] double plane: luma or one colour channel, border-cropped.
std::vector<std::vector<std::vector<double>>> planes(const torch::Tensor& img, int border, bool y) {
  const auto t = img.to(torch::kDouble).contiguous();
  const int64_t h = t.size(1), w = t.size(2);
  auto acc = t.accessor<double, 3>();
  std::vector<std::vector<std::vector<double>>> out;
  const int n = y ? 1 : static_cast<int>(t.size(0));
  for (int c = 0; c < n; ++c) {
    std::vector<std::vector<double>> plane;
    for (int64_t i = border; i < h - border; ++i) {
      std::vector<double> row;
      for (int64_t j = border; j < w - border; ++j) {
        row.push_back(y ? luma(acc[0][i][j], acc[1][i][j], acc[2][i][j]) : acc[c][i][j]);
      }
      plane.push_back(row);
    }
    out.push_back(plane);
  }
  return out;
}

double cubic(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
  if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
  return 0.0;
}

int64_t reflect(int64_t i, int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

// Normalized taps (index, weight) for output sample o of an axis.
std::vector<std::pair<int64_t, double>> taps(int64_t o, int64_t in, int64_t out) {
  const double scale = static_cast<double>(out) / static_cast<double>(in);
  const double ks = std::min(scale, 1.0);
  const double center = (o + 0.5) / scale - 0.5;
  const double support = 2.0 / ks;
  std::vector<std::pair<int64_t, double>> t;
  double total = 0.0;
  for (int64_t i = static_cast<int64_t>(std::floor(center - support)); i <= static_cast<int64_t>(std::ceil(center + support)); ++i) {
    const double wgt = cubic((center - i) * ks);
    if (wgt == 0.0) continue;
    t.emplace_back(reflect(i, in), wgt);
    total += wgt;
  }
  for (auto& p : t) p.second /= total;
  return t;
}

}  // namespace

torch::Tensor gradient_map(const torch::Tensor& img, double eps) {
  const auto t = img.to(torch::kDouble);
  const int64_t B = t.size(0), C = t.size(1), H = t.size(2), W = t.size(3);
  auto out = torch::zeros({B, C, H, W}, torch::kDouble);
  auto o = out.accessor<double, 4>();
  const auto tc = t.contiguous();
  auto a = tc.accessor<double, 4>();
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
          const double gx = a[b][c][y][std::min(x + 1, W - 1)] - a[b][c][y][std::max<int64_t>(x - 1, 0)];
          const double gy = a[b][c][std::min(y + 1, H - 1)][x] - a[b][c][std::max<int64_t>(y - 1, 0)][x];
          o[b][c][y][x] = std::sqrt(gx * gx + gy * gy + eps);
        }
      }
    }
  }
  return out;
}

double luma(double r, double g, double b) { return (16.0 + 65.481 * r + 128.553 * g + 24.966 * b) / 255.0; }

double psnr(const torch::Tensor& a, const torch::Tensor& b, int border, bool y) {
  const auto pa = planes(a, border, y), pb = planes(b, border, y);
  double sum = 0.0;
  int64_t n = 0;
  for (size_t c = 0; c < pa.size(); ++c) {
    for (size_t i = 0; i < pa[c].size(); ++i) {
      for (size_t j = 0; j < pa[c][i].size(); ++j) {
        const double d = pa[c][i][j] - pb[c][i][j];
        sum += d * d;
        ++n;
      }
    }
  }
  const double mse = sum / static_cast<double>(n);
  return mse == 0.0 ? 99.0 : std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, int border, bool y) {
  const auto pa = planes(a, border, y), pb = planes(b, border, y);
  const int r = 5;
  const double sigma = 1.5, C1 = 0.01 * 0.01, C2 = 0.03 * 0.03;
  double wsum = 0.0;
  double w[11][11];
  for (int i = -r; i <= r; ++i) {
    for (int j = -r; j <= r; ++j) {
      w[i + r][j + r] = std::exp(-(i * i + j * j) / (2 * sigma * sigma));
      wsum += w[i + r][j + r];
    }
  }
  double total = 0.0;
  int64_t count = 0;
  for (size_t c = 0; c < pa.size(); ++c) {
    const int64_t H = pa[c].size(), W = pa[c][0].size();
    for (int64_t cy = r; cy < H - r; ++cy) {
      for (int64_t cx = r; cx < W - r; ++cx) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = -r; i <= r; ++i) {
          for (int j = -r; j <= r; ++j) {
            const double k = w[i + r][j + r] / wsum;
            const double va = pa[c][cy + i][cx + j], vb = pb[c][cy + i][cx + j];
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + C1) * (2 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

long double infonce(const std::vector<double>& pred, const std::vector<double>& positive,
                    const std::vector<std::vector<double>>& negatives, double tau) {
  auto cosine = [](const std::vector<double>& u, const std::vector<double>& v) {
    long double dot = 0, nu = 0, nv = 0;
    for (size_t i = 0; i < u.size(); ++i) {
      dot += static_cast<long double>(u[i]) * v[i];
      nu += static_cast<long double>(u[i]) * u[i];
      nv += static_cast<long double>(v[i]) * v[i];
    }
    return dot / std::sqrt(nu * nv);
  };
  const long double hp = std::exp(static_cast<long double>(tau) * cosine(positive, pred));
  long double denom = hp;
  for (const auto& n : negatives) denom += std::exp(static_cast<long double>(tau) * cosine(n, pred));
  return -std::log(hp / denom);
}

namespace {
double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

double ragan_d(const std::vector<double>& real, const std::vector<double>& fake) {
  const double mr = mean(real), mf = mean(fake);
  double a = 0, b = 0;
  for (double r : real) a += std::log(sigmoid(r - mf));
  for (double f : fake) b += std::log(1.0 - sigmoid(f - mr));
  return -a / real.size() - b / fake.size();
}

double ragan_g(const std::vector<double>& real, const std::vector<double>& fake) {
  const double mr = mean(real), mf = mean(fake);
  double a = 0, b = 0;
  for (double r : real) a += std::log(1.0 - sigmoid(r - mf));
  for (double f : fake) b += std::log(sigmoid(f - mr));
  return -a / real.size() - b / fake.size();
}

torch::Tensor bicubic(const torch::Tensor& img, int64_t out_h, int64_t out_w) {
  const auto t = img.to(torch::kDouble).contiguous();
  const int64_t C = t.size(0), H = t.size(1), W = t.size(2);
  auto out = torch::zeros({C, out_h, out_w}, torch::kDouble);
  auto o = out.accessor<double, 3>();
  auto a = t.accessor<double, 3>();
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < out_h; ++i) {
      const auto ty = taps(i, H, out_h);
      for (int64_t j = 0; j < out_w; ++j) {
        const auto tx = taps(j, W, out_w);
        double v = 0.0;
        for (const auto& [yi, wy] : ty) {
          for (const auto& [xi, wx] : tx) v += wy * wx * a[c][yi][xi];
        }
        o[c][i][j] = v;
      }
    }
  }
  return out;
}

double mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
  const auto va = to_vector(a), vb = to_vector(b);
  double s = 0;
  for (size_t i = 0; i < va.size(); ++i) s += std::abs(va[i] - vb[i]);
  return s / static_cast<double>(va.size());
}

std::vector<double> to_vector(const torch::Tensor& t) {
  const auto flat = t.detach().to(torch::kDouble).contiguous().view({-1});
  return std::vector<double>(flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel());
}

double fd_directional_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                            int directions, double h, uint64_t seed) {
  auto input = x.detach().to(torch::kDouble).clone().set_requires_grad(true);
  f(input).backward();
  const auto grad = input.grad().detach().clone();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  for (int d = 0; d < directions; ++d) {
    auto v = torch::empty_like(grad);
    auto* p = v.data_ptr<double>();
    for (int64_t i = 0; i < v.numel(); ++i) p[i] = normal(rng);
    v /= v.norm();
    torch::NoGradGuard no_grad;
    const double plus = f(x.to(torch::kDouble) + h * v).item<double>();
    const double minus = f(x.to(torch::kDouble) - h * v).item<double>();
    const double numeric = (plus - minus) / (2 * h);
    const double analytic = (grad * v).sum().item<double>();
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-12});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  return worst;
}

double fd_coordinate_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, const torch::Tensor& x,
                           int count, double h, double floor, uint64_t seed) {
  auto input = x.detach().to(torch::kDouble).clone().set_requires_grad(true);
  f(input).backward();
  const auto grad = input.grad().detach().contiguous().view({-1});
  const auto base = x.detach().to(torch::kDouble).contiguous().clone();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, base.numel() - 1);
  double worst = 0.0;
  torch::NoGradGuard no_grad;
  for (int k = 0; k < count; ++k) {
    const int64_t i = pick(rng);
    auto plus = base.clone();
    auto minus = base.clone();
    plus.view({-1})[i] += h;
    minus.view({-1})[i] -= h;
    const double numeric = (f(plus).item<double>() - f(minus).item<double>()) / (2 * h);
    const double analytic = grad[i].item<double>();
    if (std::abs(numeric) < floor && std::abs(analytic) < floor) continue;
    worst = std::max(worst, std::abs(numeric - analytic) / std::max(std::abs(numeric), std::abs(analytic)));
  }
  return worst;
}

}  // namespace oracle
