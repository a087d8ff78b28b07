#include "spsr/run_config.hpp"

#include "spsr/error.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <array>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace spsr {
namespace {

namespace pt = boost::property_tree;

struct Binding {
  const char* key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw ConfigError("config: " + key + " = '" + value + "' is not a valid " + expected);
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_value(key, s, "number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  bad_value(key, s, "boolean");
}

// Shortest text that parses back to the same value.
template <typename T>
std::string format_number(T v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& s) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) continue;
    out.push_back(parse_number<T>(key, item.substr(b, e - b + 1)));
  }
  return out;
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

// Field binding helpers: map a dotted key onto a member through an accessor.
template <typename Access>
Binding number(const char* key, Access access) {
  using T = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  return {key, [access](const RunConfig& c) { return format_number(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, const std::string& v) { access(c) = parse_number<T>(key, v); }};
}

template <typename Access>
Binding flag(const char* key, Access access) {
  return {key, [access](const RunConfig& c) { return std::string(access(const_cast<RunConfig&>(c)) ? "true" : "false"); },
          [access, key](RunConfig& c, const std::string& v) { access(c) = parse_bool(key, v); }};
}

template <typename Access>
Binding text(const char* key, Access access) {
  return {key, [access](const RunConfig& c) { return access(const_cast<RunConfig&>(c)); },
          [access](RunConfig& c, const std::string& v) { access(c) = v; }};
}

template <typename Access>
Binding list(const char* key, Access access) {
  using V = std::remove_reference_t<decltype(access(std::declval<RunConfig&>()))>;
  using T = typename V::value_type;
  return {key, [access](const RunConfig& c) { return format_list(access(const_cast<RunConfig&>(c))); },
          [access, key](RunConfig& c, const std::string& v) { access(c) = parse_list<T>(key, v); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      number("generator.num_rrdb_blocks", FIELD(generator.num_rrdb_blocks)),
      list("generator.tap_indices", FIELD(generator.tap_indices)),
      number("generator.base_channels", FIELD(generator.base_channels)),
      number("generator.growth_channels", FIELD(generator.growth_channels)),
      number("generator.scale_factor", FIELD(generator.scale_factor)),

      number("critics.base_channels", FIELD(critics.base_channels)),
      text("critics.perceptual_layer", FIELD(critics.perceptual.layer_id)),
      text("critics.perceptual_weights", FIELD(critics.perceptual.weights_path)),
      {"critics.adversarial_form",
       [](const RunConfig& c) {
         return std::string(c.critics.adversarial_form == AdversarialForm::standard ? "standard" : "ragan");
       },
       [](RunConfig& c, const std::string& v) {
         if (v == "ragan") c.critics.adversarial_form = AdversarialForm::relativistic_average;
         else if (v == "standard") c.critics.adversarial_form = AdversarialForm::standard;
         else bad_value("critics.adversarial_form", v, "form (ragan|standard)");
       }},

      number("losses.beta_I", FIELD(losses.beta_I)),
      number("losses.gamma_I", FIELD(losses.gamma_I)),
      number("losses.beta_GM_SR", FIELD(losses.beta_GM_SR)),
      number("losses.gamma_GM_SR", FIELD(losses.gamma_GM_SR)),
      number("losses.beta_GM_GB", FIELD(losses.beta_GM_GB)),
      number("losses.beta_SF", FIELD(losses.beta_SF)),
      number("losses.gamma_SF", FIELD(losses.gamma_SF)),

      {"train.variant", [](const RunConfig& c) { return to_string(c.train.variant); },
       [](RunConfig& c, const std::string& v) { c.train.variant = parse_variant(v); }},
      number("train.total_iters", FIELD(train.total_iters)),
      number("train.lr_g", FIELD(train.lr_g)),
      number("train.lr_d", FIELD(train.lr_d)),
      number("train.pretrain_lr", FIELD(train.pretrain_lr)),
      number("train.adam_beta1", FIELD(train.adam_beta1)),
      number("train.adam_beta2", FIELD(train.adam_beta2)),
      number("train.adam_eps", FIELD(train.adam_eps)),
      list("train.lr_milestones", FIELD(train.lr_milestones)),
      number("train.lr_gamma", FIELD(train.lr_gamma)),
      text("train.init_from", FIELD(train.init_from)),
      text("train.nse_checkpoint", FIELD(train.nse_checkpoint)),
      number("train.seed", FIELD(train.seed)),
      number("train.checkpoint_every", FIELD(train.checkpoint_every)),
      number("train.log_every", FIELD(train.log_every)),

      text("data.root", FIELD(data.root)),
      text("data.hr_subdir", FIELD(data.hr_subdir)),
      flag("data.cache_lr", FIELD(data.cache_lr)),
      number("data.batch_size", FIELD(data.batch_size)),
      number("data.lr_patch", FIELD(data.lr_patch)),
      flag("data.augment", FIELD(data.augment)),
      number("data.synthetic_images", FIELD(data.synthetic_images)),
      number("data.synthetic_size", FIELD(data.synthetic_size)),

      number("ssl.hidden_channels", FIELD(ssl.nse.hidden_channels)),
      number("ssl.out_channels", FIELD(ssl.nse.out_channels)),
      number("ssl.head_layers", FIELD(ssl.head_layers)),
      number("ssl.head_hidden", FIELD(ssl.head_hidden)),
      number("ssl.tau", FIELD(ssl.tau)),
      number("ssl.batch_size", FIELD(ssl.batch_size)),
      number("ssl.anchors_per_patch", FIELD(ssl.anchors_per_patch)),
      number("ssl.steps", FIELD(ssl.steps)),
      number("ssl.predict_lr", FIELD(ssl.predict_lr)),
      number("ssl.jigsaw_lr", FIELD(ssl.jigsaw_lr)),
      number("ssl.lr_decay_factor", FIELD(ssl.lr_decay_factor)),
      number("ssl.predict_decay_epochs", FIELD(ssl.predict_decay_epochs)),
      number("ssl.jigsaw_decay_epochs", FIELD(ssl.jigsaw_decay_epochs)),
      number("ssl.predict_patch", FIELD(ssl.predict_patch)),
      number("ssl.jigsaw_patch", FIELD(ssl.jigsaw_patch)),
      number("ssl.eval_predict_patch", FIELD(ssl.eval_predict_patch)),
      number("ssl.eval_jigsaw_patch", FIELD(ssl.eval_jigsaw_patch)),
      number("ssl.eval_negatives", FIELD(ssl.eval_negatives)),
      number("ssl.eval_repeats", FIELD(ssl.eval_repeats)),
      number("ssl.checkpoint_every", FIELD(ssl.checkpoint_every)),
  };
  return table;
}

#undef FIELD

const Binding& find_binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (key == b.key) return b;
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

RunConfig RunConfig::paper() { return RunConfig{}; }

RunConfig RunConfig::desk() {
  RunConfig c;
  c.generator = GeneratorConfig::desk(4, 16, 8);
  c.critics.base_channels = 16;
  c.critics.perceptual.layer_id = "conv3_4";
  c.data.batch_size = 2;
  c.data.lr_patch = 16;
  c.data.synthetic_size = 128;
  c.data.augment = false;
  c.train.total_iters = 500;
  c.train.lr_g = 1e-3;
  c.train.lr_milestones = {250, 400};
  c.train.checkpoint_every = 250;
  c.train.log_every = 10;
  c.ssl.batch_size = 16;
  c.ssl.steps = 500;
  c.ssl.jigsaw_lr = 1e-3;
  // Epochs of a toy corpus are a handful of steps; keep the rate flat over a desk run.
  c.ssl.predict_decay_epochs = 1000;
  c.ssl.jigsaw_decay_epochs = 1000;
  c.ssl.eval_repeats = 10;
  c.ssl.predict_patch = 128;
  c.ssl.checkpoint_every = 250;
  return c;
}

void RunConfig::validate() const {
  generator.validate();
  losses.validate();
  ssl.nse.validate();
  if (critics.base_channels < 1) throw ConfigError("critics.base_channels must be >= 1");
  if (train.total_iters < 0) throw ConfigError("train.total_iters must be >= 0");
  if (!(train.lr_g > 0) || !(train.lr_d > 0) || !(train.pretrain_lr > 0)) {
    throw ConfigError("train learning rates must be positive");
  }
  for (size_t i = 1; i < train.lr_milestones.size(); ++i) {
    if (train.lr_milestones[i] <= train.lr_milestones[i - 1]) {
      throw ConfigError("train.lr_milestones must be strictly increasing");
    }
  }
  if (uses_structure_extractor(train.variant) && train.nse_checkpoint.empty()) {
    throw ConfigError("train.nse_checkpoint is required for " + to_string(train.variant));
  }
  if (data.batch_size < 1) throw ConfigError("data.batch_size must be >= 1");
  if (data.lr_patch < 8) throw ConfigError("data.lr_patch must be >= 8");
  if (data.root.empty() && data.synthetic_images <= 0) {
    throw ConfigError("data.root is empty and data.synthetic_images is 0: no training data");
  }
  if (ssl.batch_size < 1 || ssl.anchors_per_patch < 1) throw ConfigError("ssl batch settings must be >= 1");
  if (!(ssl.tau > 0)) throw ConfigError("ssl.tau must be positive");
}

void RunConfig::set(const std::string& key, const std::string& value) { find_binding(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find_binding(key).get(*this); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& b : bindings()) out.emplace_back(b.key);
  return out;
}

void RunConfig::apply_overrides(const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("config override '" + o + "' is not key=value");
    set(o.substr(0, eq), o.substr(eq + 1));
  }
}

std::string RunConfig::to_ini() const {
  pt::ptree tree;
  for (const auto& b : bindings()) tree.put(pt::ptree::path_type(b.key, '.'), b.get(*this));
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

RunConfig RunConfig::from_ini(const std::string& text, RunConfig base) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  for (const auto& [section, entries] : tree) {
    if (entries.empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [name, value] : entries) base.set(section + "." + name, value.data());
  }
  return base;
}

RunConfig RunConfig::load(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_ini(buffer.str(), std::move(base));
}

}  // namespace spsr
