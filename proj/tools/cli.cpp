#include "cli.hpp"

#include "spsr/checkpoint.hpp"
#include "spsr/error.hpp"
#include "spsr/gradient_ops.hpp"
#include "spsr/image_io.hpp"
#include "spsr/metrics.hpp"
#include "spsr/run_config.hpp"
#include "spsr/ssl_training.hpp"
#include "spsr/trainer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>

namespace fs = std::filesystem;

namespace spsr::cli {
namespace {

struct GlobalOptions {
  std::string config_path;
  std::string preset = "paper";
  std::vector<std::string> overrides;
  std::optional<uint64_t> seed;
  bool dry_run = false;
  std::string out_dir = "out";
};

struct Context {
  GlobalOptions global;
  std::ostream& out;
  std::ostream& err;

  RunConfig resolve() const {
    RunConfig base = global.preset == "desk" ? RunConfig::desk() : RunConfig::paper();
    RunConfig config = global.config_path.empty() ? base : RunConfig::load(global.config_path, base);
    config.apply_overrides(global.overrides);
    if (global.seed) config.train.seed = *global.seed;
    return config;
  }

  fs::path out_dir() const { return global.out_dir; }

  // Creates the output layout and echoes the effective config.
  void prepare(const RunConfig& config) const {
    for (const char* sub : {"ckpt", "images", "reports"}) fs::create_directories(out_dir() / sub);
    std::ofstream(out_dir() / "config.echo") << config.to_ini();
  }

  std::ofstream open_log() const { return std::ofstream(out_dir() / "log.txt", std::ios::app); }
};

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string dataset_name(const RunConfig& config) {
  if (config.data.synthetic_images > 0) return "synthetic";
  fs::path root(config.data.root);
  if (!root.has_filename()) root = root.parent_path();
  return root.filename().string();
}

// Writes a gradient map as an 8-bit image; magnitudes above 1 saturate.
void write_gradient_map(const fs::path& path, const torch::Tensor& gm) {
  write_image(path, gm.clamp(0.0, 1.0));
}

int cmd_grad(const Context& ctx, const std::string& in, const std::string& out_path, double eps) {
  if (ctx.global.dry_run) {
    ctx.out << ctx.resolve().to_ini();
    return kExitOk;
  }
  const torch::Tensor img = read_image(in).unsqueeze(0);
  const GradientMap gm = extract_gradient_map(img, eps);
  write_gradient_map(out_path, gm.data[0]);
  return kExitOk;
}

int cmd_train_nse(const Context& ctx, const std::string& task, const std::string& strategy_name,
                  const std::string& init_nse, bool freeze_nse) {
  RunConfig config = ctx.resolve();
  config.validate();
  const SamplingStrategy strategy = parse_strategy(strategy_name);
  if (task != "predict" && task != "jigsaw") throw ConfigError("--task must be predict or jigsaw");
  if (ctx.global.dry_run) {
    ctx.out << config.to_ini();
    return kExitOk;
  }
  ctx.prepare(config);
  const auto images = hr_images(load_training_data(config));
  const auto& s = config.ssl;

  SSLTrainOptions o;
  o.strategy = strategy;
  o.batch_size = s.batch_size;
  o.anchors_per_patch = s.anchors_per_patch;
  o.steps = s.steps;
  o.lr_decay_factor = s.lr_decay_factor;
  o.tau = s.tau;
  o.freeze_nse = freeze_nse;
  o.seed = config.train.seed;
  o.checkpoint_every = s.checkpoint_every;
  o.checkpoint_path = ctx.out_dir() / "ckpt" / ("nse_" + task + ".pt");
  auto log = ctx.open_log();
  o.on_step = [&log](int64_t step, double loss, double lr) {
    log << "iter=" << step + 1 << " loss/" << "ssl=" << loss << " lr=" << lr << '\n';
  };
  NSE init = init_nse.empty() ? NSE(nullptr) : load_nse(init_nse);

  double final_loss = 0.0;
  if (task == "predict") {
    o.patch_size = s.predict_patch;
    o.lr = s.predict_lr;
    o.lr_decay_every = decay_steps_for_epochs(s.predict_decay_epochs, images.size(), s.batch_size);
    PredictorConfig pc{s.head_layers, s.head_hidden, context_count(strategy), s.nse.out_channels};
    auto model = train_nse_contrastive(images, s.nse, pc, o, init);
    save_ssl_checkpoint(o.checkpoint_path, model, pc, strategy, s.steps);
    final_loss = model.loss_curve.empty() ? 0.0 : model.loss_curve.back();
  } else {
    o.patch_size = s.jigsaw_patch;
    o.lr = s.jigsaw_lr;
    o.lr_decay_every = decay_steps_for_epochs(s.jigsaw_decay_epochs, images.size(), s.batch_size);
    JigsawClassifierConfig jc{s.head_layers, s.head_hidden, s.nse.out_channels};
    auto model = train_nse_jigsaw(images, s.nse, jc, o, init);
    save_ssl_checkpoint(o.checkpoint_path, model, jc, s.steps);
    final_loss = model.loss_curve.empty() ? 0.0 : model.loss_curve.back();
  }
  ctx.out << "wrote " << o.checkpoint_path.string() << " final_loss=" << final_loss << "\n";
  return kExitOk;
}

int cmd_eval_nse(const Context& ctx, const std::string& nse_path, const std::string& head_path_opt,
                 const std::string& strategy_name) {
  RunConfig config = ctx.resolve();
  if (ctx.global.dry_run) {
    ctx.out << config.to_ini();
    return kExitOk;
  }
  const std::string head_path = head_path_opt.empty() ? nse_path : head_path_opt;
  NSE nse = load_nse(nse_path);
  SSLCheckpoint head = load_ssl_checkpoint(head_path);
  const auto images = hr_images(load_training_data(config));
  const auto& s = config.ssl;

  AccuracyReport report;
  if (head.task == "predict") {
    ContrastiveEvalOptions eo;
    eo.patch_size = s.eval_predict_patch;
    eo.num_negatives = s.eval_negatives;
    eo.repeats = s.eval_repeats;
    eo.strategy = strategy_name.empty() ? head.strategy : parse_strategy(strategy_name);
    eo.seed = config.train.seed;
    report = evaluate_contrastive_top1(nse, predictor_head(head.predictor), images, eo);
  } else {
    JigsawEvalOptions eo;
    eo.patch_size = s.eval_jigsaw_patch;
    eo.repeats = s.eval_repeats;
    eo.seed = config.train.seed;
    report = evaluate_jigsaw_accuracy(nse, classifier_head(head.classifier), images, eo);
  }
  std::ostringstream csv;
  csv << "dataset,task,accuracy,n_samples\n"
      << dataset_name(config) << "," << head.task << "," << report.accuracy << "," << report.n_samples << "\n";
  fs::create_directories(ctx.out_dir() / "reports");
  std::ofstream(ctx.out_dir() / "reports" / "nse_eval.csv") << csv.str();
  ctx.out << csv.str();
  return kExitOk;
}

int cmd_train(const Context& ctx, TrainMode mode, const std::string& resume) {
  RunConfig config = ctx.resolve();
  if (ctx.global.dry_run) {
    RunConfig check = config;
    // L1 pretraining needs no structure extractor.
    if (mode == TrainMode::pretrain) check.train.variant = Variant::SPSR_G;
    check.validate();
    ctx.out << config.to_ini();
    return kExitOk;
  }
  std::unique_ptr<Trainer> trainer;
  if (resume.empty()) {
    trainer = std::make_unique<Trainer>(config, mode, load_training_data(config));
  } else {
    RunConfig stored = read_checkpoint_config(resume);
    trainer = Trainer::resume(resume, load_training_data(stored));
  }
  ctx.prepare(trainer->config());
  auto log = ctx.open_log();
  trainer->run(&log, ctx.out_dir() / "ckpt");
  ctx.out << "finished at iteration " << trainer->iteration() << "; checkpoint "
          << (ctx.out_dir() / "ckpt" / "latest.pt").string() << "\n";
  return kExitOk;
}

int cmd_sr(const Context& ctx, const std::string& ckpt, const std::string& in, const std::string& out,
           bool emit_grad) {
  if (ctx.global.dry_run) {
    ctx.out << read_checkpoint_config(ckpt).to_ini();
    return kExitOk;
  }
  Generator gen = load_generator(ckpt);
  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(in)) {
    for (const auto& p : png_files(in)) jobs.emplace_back(p, fs::path(out) / p.filename());
  } else {
    jobs.emplace_back(in, out);
  }
  for (const auto& [src, dst] : jobs) {
    const torch::Tensor lr = read_image(src).unsqueeze(0);
    const GeneratorOutput result = super_resolve(gen, lr);
    write_image(dst, result.sr_image[0]);
    if (emit_grad) {
      fs::path grad = dst;
      grad.replace_filename(dst.stem().string() + "_grad.png");
      write_gradient_map(grad, result.predicted_gradient_map[0]);
    }
  }
  ctx.out << "wrote " << jobs.size() << " image(s)\n";
  return kExitOk;
}

int cmd_eval(const Context& ctx, const std::string& sr_dir, const std::string& hr_dir, int border,
             const std::string& channel) {
  const ChannelMode mode = parse_channel_mode(channel);
  const auto sr_files = png_files(sr_dir);
  const auto hr_files = png_files(hr_dir);
  std::set<std::string> sr_names, hr_names;
  for (const auto& p : sr_files) sr_names.insert(p.filename().string());
  for (const auto& p : hr_files) hr_names.insert(p.filename().string());
  std::string missing;
  for (const auto& n : hr_names) {
    if (!sr_names.count(n)) missing += " " + n + " (missing from --sr-dir)";
  }
  for (const auto& n : sr_names) {
    if (!hr_names.count(n)) missing += " " + n + " (missing from --hr-dir)";
  }
  if (!missing.empty()) throw ConfigError("eval: image sets differ:" + missing);
  if (ctx.global.dry_run) {
    ctx.out << "eval: " << hr_files.size() << " pairs\n";
    return kExitOk;
  }
  std::vector<EvalPair> pairs;
  for (const auto& p : hr_files) {
    pairs.push_back({p.stem().string(), read_image(fs::path(sr_dir) / p.filename()), read_image(p)});
  }
  const EvalReport report = evaluate_pairs(pairs, border, mode);
  const std::string csv = report.to_csv();
  fs::create_directories(ctx.out_dir() / "reports");
  std::ofstream(ctx.out_dir() / "reports" / "eval.csv") << csv;
  ctx.out << csv;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure-preserving super-resolution toolkit", "spsr"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_path, "INI run config")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "Base config: paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  app.add_option("--set", g.overrides, "Dotted-key override, e.g. train.lr_g=2e-4")->allow_extra_args(false);
  app.add_option("--seed", g.seed, "Random seed (train.seed)");
  app.add_flag("--dry-run", g.dry_run, "Validate and print the effective config");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.fallthrough();

  std::string in, out_path, task = "predict", strategy = "h", init_nse, nse_path, head_path, resume, ckpt,
                            sr_dir, hr_dir, channel = "y", eval_strategy;
  double eps = kDefaultGradientEpsilon;
  bool freeze_nse = false, emit_grad = false;
  int border = 4;

  auto* grad = app.add_subcommand("grad", "Write the gradient-magnitude map of an image");
  grad->add_option("input,--in", in, "Input PNG")->required()->check(CLI::ExistingFile);
  grad->add_option("output,--out", out_path, "Output PNG")->required();
  grad->add_option("--eps", eps, "Stabilizer inside the square root");

  auto* train_nse = app.add_subcommand("train-nse", "Train the structure extractor on a pretext task");
  train_nse->add_option("--task", task, "predict or jigsaw")->check(CLI::IsMember({"predict", "jigsaw"}));
  train_nse->add_option("--strategy", strategy, "h, v or c")->check(CLI::IsMember({"h", "v", "c"}));
  train_nse->add_option("--init-nse", init_nse, "Start from this extractor")->check(CLI::ExistingFile);
  train_nse->add_flag("--freeze-nse", freeze_nse, "Optimize the head only");

  auto* eval_nse = app.add_subcommand("eval-nse", "Pretext-task accuracy of an extractor and head");
  eval_nse->add_option("--nse", nse_path, "Checkpoint providing the extractor")->required()->check(CLI::ExistingFile);
  eval_nse->add_option("--head", head_path, "Checkpoint providing the head (default: --nse)")
      ->check(CLI::ExistingFile);
  eval_nse->add_option("--strategy", eval_strategy, "h, v or c")->check(CLI::IsMember({"h", "v", "c"}));

  auto* pretrain = app.add_subcommand("pretrain", "PSNR-oriented generator pretraining");
  pretrain->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Adversarial training (train.variant)");
  train->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* sr = app.add_subcommand("sr", "Super-resolve images with a trained generator");
  sr->add_option("--ckpt", ckpt, "Training checkpoint")->required()->check(CLI::ExistingFile);
  sr->add_option("--in", in, "LR PNG or directory")->required()->check(CLI::ExistingPath);
  sr->add_option("--out", out_path, "Output PNG or directory")->required();
  sr->add_flag("--emit-grad", emit_grad, "Also write predicted gradient maps (<name>_grad.png)");

  auto* eval = app.add_subcommand("eval", "PSNR/SSIM of SR images against HR references");
  eval->add_option("--sr-dir", sr_dir, "Directory of SR PNGs")->required();
  eval->add_option("--hr-dir", hr_dir, "Directory of HR PNGs")->required();
  eval->add_option("--border", border, "Pixels cropped from each border");
  eval->add_option("--channel", channel, "y or rgb")->check(CLI::IsMember({"y", "rgb"}));

  std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  Context ctx{g, out, err};
  try {
    torch::set_num_threads(1);
    // Rejects unknown override keys for every subcommand.
    ctx.resolve();
    if (*grad) return cmd_grad(ctx, in, out_path, eps);
    if (*train_nse) return cmd_train_nse(ctx, task, strategy, init_nse, freeze_nse);
    if (*eval_nse) return cmd_eval_nse(ctx, nse_path, head_path, eval_strategy);
    if (*pretrain) return cmd_train(ctx, TrainMode::pretrain, resume);
    if (*train) return cmd_train(ctx, TrainMode::adversarial, resume);
    if (*sr) return cmd_sr(ctx, ckpt, in, out_path, emit_grad);
    if (*eval) return cmd_eval(ctx, sr_dir, hr_dir, border, channel);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    // Library exceptions may carry a backtrace; the diagnostic is its first line.
    const std::string what = e.what();
    err << "error: " << what.substr(0, what.find('\n')) << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace spsr::cli
