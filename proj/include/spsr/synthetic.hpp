#pragma once

#include "spsr/data_pipeline.hpp"

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace spsr {

// Procedural test imagery: a smooth colour field overlaid with random discs,
// rectangles, line segments and stripe patches. Deterministic in `seed`.
// Returns [3, height, width] in [0, 1].
torch::Tensor synthetic_image(int64_t height, int64_t width, uint64_t seed);

// `count` synthetic images with ids "synth_0000", ... .
std::vector<DatasetItem> synthetic_dataset(int count, int64_t height, int64_t width, uint64_t seed);

}  // namespace spsr
