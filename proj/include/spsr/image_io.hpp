#pragma once

#include <torch/torch.h>

#include <filesystem>

namespace spsr {

// Decodes an 8-bit image to a float [3, H, W] RGB tensor in [0, 1].
// Throws DataError if the file cannot be decoded.
torch::Tensor read_image(const std::filesystem::path& path);

// Writes a [3, H, W] or [1, H, W] tensor (batch dim of 1 allowed) as 8-bit PNG,
// clamping to [0, 1] and rounding to the nearest level.
void write_image(const std::filesystem::path& path, const torch::Tensor& img);

}  // namespace spsr
