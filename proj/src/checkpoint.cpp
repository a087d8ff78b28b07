#include "spsr/checkpoint.hpp"

#include "spsr/error.hpp"

#include <algorithm>
#include <cstring>

namespace spsr {

std::string archive_key(const std::string& prefix, const std::string& dotted_name) {
  auto name = dotted_name;
  const auto dot = name.rfind('.');
  if (dot != std::string::npos) name[dot] = '/';
  return prefix + "/" + name;
}

void save_module(torch::serialize::OutputArchive& archive, const std::string& prefix,
                 const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters(/*recurse=*/true)) {
    archive.write(archive_key(prefix, item.key()), item.value().detach());
  }
  for (const auto& item : module.named_buffers(/*recurse=*/true)) {
    archive.write(archive_key(prefix, item.key()), item.value().detach(), /*is_buffer=*/true);
  }
}

void load_module(torch::serialize::InputArchive& archive, const std::string& prefix,
                 torch::nn::Module& module) {
  torch::NoGradGuard guard;
  auto copy_in = [&](const std::string& name, torch::Tensor& target, bool is_buffer) {
    const auto key = archive_key(prefix, name);
    torch::Tensor value;
    if (!archive.try_read(key, value, is_buffer)) {
      throw DataError("checkpoint: missing tensor '" + key + "'");
    }
    if (value.sizes() != target.sizes()) {
      throw ShapeError("checkpoint: shape mismatch for '" + key + "': stored " +
                       torch::str(value.sizes()) + ", expected " + torch::str(target.sizes()));
    }
    target.copy_(value);
  };
  for (auto& item : module.named_parameters(true)) copy_in(item.key(), item.value(), false);
  for (auto& item : module.named_buffers(true)) copy_in(item.key(), item.value(), true);
}

void write_string(torch::serialize::OutputArchive& archive, const std::string& key,
                  const std::string& value) {
  auto t = torch::empty({static_cast<int64_t>(value.size())}, torch::kChar);
  if (!value.empty()) std::memcpy(t.data_ptr<int8_t>(), value.data(), value.size());
  archive.write(key, t);
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key) {
  torch::Tensor t;
  if (!archive.try_read(key, t)) throw DataError("checkpoint: missing entry '" + key + "'");
  t = t.contiguous();
  std::string s(static_cast<size_t>(t.numel()), '\0');
  if (t.numel() > 0) std::memcpy(s.data(), t.data_ptr<int8_t>(), s.size());
  return s;
}

bool has_key(torch::serialize::InputArchive& archive, const std::string& key) {
  const auto keys = archive.keys();
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

void write_int(torch::serialize::OutputArchive& archive, const std::string& key, int64_t value) {
  archive.write(key, torch::tensor({value}, torch::kLong));
}

int64_t read_int(torch::serialize::InputArchive& archive, const std::string& key) {
  torch::Tensor t;
  if (!archive.try_read(key, t)) throw DataError("checkpoint: missing entry '" + key + "'");
  return t.item<int64_t>();
}

void save_adam(torch::serialize::OutputArchive& archive, const std::string& prefix,
               const torch::optim::Adam& opt) {
  const auto& groups = opt.param_groups();
  for (size_t g = 0; g < groups.size(); ++g) {
    const auto& params = groups[g].params();
    for (size_t i = 0; i < params.size(); ++i) {
      const auto it = opt.state().find(params[i].unsafeGetTensorImpl());
      if (it == opt.state().end()) continue;
      const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
      const auto key = prefix + "/" + std::to_string(g) + "." + std::to_string(i);
      write_int(archive, key + "/step", st.step());
      archive.write(key + "/exp_avg", st.exp_avg());
      archive.write(key + "/exp_avg_sq", st.exp_avg_sq());
      if (st.max_exp_avg_sq().defined()) archive.write(key + "/max_exp_avg_sq", st.max_exp_avg_sq());
    }
  }
}

void load_adam(torch::serialize::InputArchive& archive, const std::string& prefix, torch::optim::Adam& opt) {
  auto& groups = opt.param_groups();
  opt.state().clear();
  for (size_t g = 0; g < groups.size(); ++g) {
    const auto& params = groups[g].params();
    for (size_t i = 0; i < params.size(); ++i) {
      const auto key = prefix + "/" + std::to_string(g) + "." + std::to_string(i);
      torch::Tensor step;
      if (!archive.try_read(key + "/step", step)) continue;
      auto st = std::make_unique<torch::optim::AdamParamState>();
      st->step(step.item<int64_t>());
      for (const char* name : {"exp_avg", "exp_avg_sq", "max_exp_avg_sq"}) {
        torch::Tensor t;
        if (!archive.try_read(key + "/" + name, t)) {
          if (std::string(name) == "max_exp_avg_sq") continue;
          throw DataError("checkpoint: missing entry '" + key + "/" + name + "'");
        }
        if (t.sizes() != params[i].sizes()) {
          throw ShapeError("checkpoint: '" + key + "/" + name + "' has shape " + torch::str(t.sizes()) +
                           ", parameter has " + torch::str(params[i].sizes()));
        }
        t = t.to(params[i].options());
        if (std::string(name) == "exp_avg") st->exp_avg(t);
        else if (std::string(name) == "exp_avg_sq") st->exp_avg_sq(t);
        else st->max_exp_avg_sq(t);
      }
      opt.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
    }
  }
}

torch::serialize::InputArchive load_archive(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw DataError("checkpoint: file not found: " + path.string());
  }
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw DataError("checkpoint: cannot read " + path.string() + ": " + e.what_without_backtrace());
  }
  return archive;
}

void save_archive_atomic(torch::serialize::OutputArchive& archive, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  archive.save_to(tmp.string());
  std::filesystem::rename(tmp, path);
}

}  // namespace spsr
