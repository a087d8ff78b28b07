#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>

namespace spsr {

// Single-file archives of named tensors. Module parameters and buffers are stored
// as `<prefix>/<submodule>/<param>`, e.g. `generator/trunk.0.rdb1.conv1/weight`.

std::string archive_key(const std::string& prefix, const std::string& dotted_name);

void save_module(torch::serialize::OutputArchive& archive, const std::string& prefix,
                 const torch::nn::Module& module);

// Copies archived values into the module's existing tensors. Throws DataError for a
// missing entry and ShapeError naming the tensor when shapes disagree.
void load_module(torch::serialize::InputArchive& archive, const std::string& prefix,
                 torch::nn::Module& module);

void write_string(torch::serialize::OutputArchive& archive, const std::string& key,
                  const std::string& value);
std::string read_string(torch::serialize::InputArchive& archive, const std::string& key);
bool has_key(torch::serialize::InputArchive& archive, const std::string& key);

void write_int(torch::serialize::OutputArchive& archive, const std::string& key, int64_t value);
int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key);

// Adam moments in parameter order: `<prefix>/<group>.<index>/{step,exp_avg,exp_avg_sq}`.
// Unlike Optimizer::save the layout does not depend on tensor addresses, so a
// reloaded optimizer serializes to the same bytes.
void save_adam(torch::serialize::OutputArchive& archive, const std::string& prefix,
               const torch::optim::Adam& opt);
// Parameters without a stored entry keep an empty state. Throws ShapeError naming the
// entry when a moment does not match its parameter.
void load_adam(torch::serialize::InputArchive& archive, const std::string& prefix, torch::optim::Adam& opt);

// Throws DataError if the file is missing or not an archive.
torch::serialize::InputArchive load_archive(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void save_archive_atomic(torch::serialize::OutputArchive& archive, const std::filesystem::path& path);

}  // namespace spsr
