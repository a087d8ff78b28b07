#pragma once

// Independent reference implementations used by the tests. Everything here is
// written as explicit loops in double (or long double) precision and shares no
// code with the library.

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

// Central-difference gradient magnitude with replicated borders: [B,C,H,W] double.
torch::Tensor gradient_map(const torch::Tensor& img, double eps);

// BT.601 luma of a [3,H,W] image in [0,1] (same formula, scalar form).
double luma(double r, double g, double b);

double psnr(const torch::Tensor& a, const torch::Tensor& b, int border, bool y_channel);
double ssim(const torch::Tensor& a, const torch::Tensor& b, int border, bool y_channel);

long double infonce(const std::vector<double>& pred, const std::vector<double>& positive,
                    const std::vector<std::vector<double>>& negatives, double tau);

double ragan_d(const std::vector<double>& real, const std::vector<double>& fake);
double ragan_g(const std::vector<double>& real, const std::vector<double>& fake);

// Per-output-pixel bicubic (Keys a = -0.5) with antialiasing and symmetric borders.
torch::Tensor bicubic(const torch::Tensor& img, int64_t out_h, int64_t out_w);

double mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b);

// Largest relative error between autograd directional derivatives of a scalar
// function and central finite differences, over `directions` random unit directions.
double fd_directional_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                            const torch::Tensor& x, int directions = 4, double h = 1e-6, uint64_t seed = 7);

// Same comparison per coordinate at `count` random entries of x. Coordinates where
// both derivatives are below `floor` in magnitude are skipped.
double fd_coordinate_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                           const torch::Tensor& x, int count = 20, double h = 1e-6, double floor = 1e-9,
                           uint64_t seed = 11);

std::vector<double> to_vector(const torch::Tensor& t);

}  // namespace oracle
