#include "spsr/ssl_pretext.hpp"

#include "spsr/error.hpp"

#include <algorithm>
#include <cmath>

namespace spsr {

std::string to_string(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::horizontal: return "horizontal";
    case SamplingStrategy::vertical: return "vertical";
    case SamplingStrategy::cross: return "cross";
  }
  return "unknown";
}

SamplingStrategy parse_strategy(const std::string& s) {
  if (s == "h" || s == "horizontal") return SamplingStrategy::horizontal;
  if (s == "v" || s == "vertical") return SamplingStrategy::vertical;
  if (s == "c" || s == "cross") return SamplingStrategy::cross;
  throw ConfigError("unknown sampling strategy '" + s + "' (expected h, v or c)");
}

int context_count(SamplingStrategy s) { return s == SamplingStrategy::cross ? 4 : 2; }

int min_disjoint_separation(const ReceptiveField& rf) {
  return (rf.size + rf.stride - 1) / rf.stride;
}

bool windows_disjoint(const ReceptiveField& rf, const GridPos& a, const GridPos& b) {
  const auto wa = feature_window(rf, a.row, a.col);
  const auto wb = feature_window(rf, b.row, b.col);
  const bool rows_apart = wa.row1 < wb.row0 || wb.row1 < wa.row0;
  const bool cols_apart = wa.col1 < wb.col0 || wb.col1 < wa.col0;
  return rows_apart || cols_apart;
}

std::vector<GridPos> context_offsets(SamplingStrategy s, int d) {
  switch (s) {
    case SamplingStrategy::horizontal: return {{0, -d}, {0, d}};
    case SamplingStrategy::vertical: return {{-d, 0}, {d, 0}};
    case SamplingStrategy::cross: return {{0, -d}, {0, d}, {-d, 0}, {d, 0}};
  }
  return {};
}

std::vector<GridPos> negative_candidates(const GridShape& grid, const GridPos& target,
                                         const std::vector<GridPos>& context, const ReceptiveField& rf) {
  std::vector<GridPos> out;
  for (int64_t r = 0; r < grid.rows; ++r) {
    for (int64_t c = 0; c < grid.cols; ++c) {
      const GridPos p{r, c};
      if (!windows_disjoint(rf, p, target)) continue;
      const bool clear = std::all_of(context.begin(), context.end(),
                                     [&](const GridPos& q) { return windows_disjoint(rf, p, q); });
      if (clear) out.push_back(p);
    }
  }
  return out;
}

PredictionSample sample_prediction_positions(const GridShape& grid, SamplingStrategy s,
                                             int64_t num_negatives, Rng& rng, const ReceptiveField& rf) {
  const auto offsets = context_offsets(s, min_disjoint_separation(rf));
  int64_t dr_min = 0, dr_max = 0, dc_min = 0, dc_max = 0;
  for (const auto& o : offsets) {
    dr_min = std::min(dr_min, o.row);
    dr_max = std::max(dr_max, o.row);
    dc_min = std::min(dc_min, o.col);
    dc_max = std::max(dc_max, o.col);
  }
  const int64_t r_lo = -dr_min, r_hi = grid.rows - 1 - dr_max;
  const int64_t c_lo = -dc_min, c_hi = grid.cols - 1 - dc_max;
  if (r_lo > r_hi || c_lo > c_hi) {
    throw SamplingError("prediction sampling: grid " + std::to_string(grid.rows) + "x" +
                        std::to_string(grid.cols) + " too small for the " + to_string(s) + " strategy");
  }
  PredictionSample sample;
  sample.target = {std::uniform_int_distribution<int64_t>(r_lo, r_hi)(rng),
                   std::uniform_int_distribution<int64_t>(c_lo, c_hi)(rng)};
  for (const auto& o : offsets) {
    sample.context.push_back({sample.target.row + o.row, sample.target.col + o.col});
  }
  auto candidates = negative_candidates(grid, sample.target, sample.context, rf);
  if (candidates.empty()) {
    throw SamplingError("prediction sampling: no negative candidates on a " + std::to_string(grid.rows) +
                        "x" + std::to_string(grid.cols) + " grid");
  }
  const auto n = static_cast<int64_t>(candidates.size());
  if (num_negatives < 0 || num_negatives >= n) {
    sample.negatives = std::move(candidates);
    return sample;
  }
  // Partial Fisher-Yates: the first num_negatives slots form a uniform subset.
  for (int64_t i = 0; i < num_negatives; ++i) {
    const auto j = std::uniform_int_distribution<int64_t>(i, n - 1)(rng);
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(num_negatives);
  sample.negatives = std::move(candidates);
  return sample;
}

torch::Tensor infonce_loss(const torch::Tensor& pred, const torch::Tensor& positive,
                           const torch::Tensor& negatives, double tau) {
  if (!(tau > 0.0)) throw NumericError("infonce: tau must be positive");
  if (pred.dim() != 1 || positive.sizes() != pred.sizes() || negatives.dim() != 2 ||
      negatives.size(1) != pred.size(0)) {
    throw ShapeError("infonce: expected pred [D], positive [D], negatives [N, D]; got " +
                     torch::str(pred.sizes()) + ", " + torch::str(positive.sizes()) + ", " +
                     torch::str(negatives.sizes()));
  }
  auto candidates = torch::cat({positive.unsqueeze(0), negatives}, 0);
  auto cand_norm = candidates.norm(2, 1);
  auto pred_norm = pred.norm();
  if ((cand_norm == 0).any().item<bool>() || pred_norm.item<double>() == 0.0) {
    throw NumericError("infonce: zero-norm feature vector");
  }
  auto cosine = candidates.matmul(pred) / (cand_norm * pred_norm);
  auto logits = tau * cosine;
  return torch::logsumexp(logits, 0) - logits[0];
}

const std::vector<Permutation>& jigsaw_permutations() {
  static const std::vector<Permutation> perms = [] {
    std::vector<Permutation> out;
    Permutation p{0, 1, 2, 3};
    do {
      out.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
  }();
  return perms;
}

JigsawInstance sample_jigsaw_instance(const torch::Tensor& feature_map, Rng& rng, const ReceptiveField& rf) {
  if (feature_map.dim() != 3) {
    throw ShapeError("jigsaw: expected feature map [C, rows, cols], got " + torch::str(feature_map.sizes()));
  }
  const int64_t d = min_disjoint_separation(rf);
  const int64_t rows = feature_map.size(1), cols = feature_map.size(2);
  if (rows < d + 1 || cols < d + 1) {
    throw SamplingError("jigsaw: grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " cannot hold a 2x2 set at separation " + std::to_string(d));
  }
  const auto r = std::uniform_int_distribution<int64_t>(0, rows - 1 - d)(rng);
  const auto c = std::uniform_int_distribution<int64_t>(0, cols - 1 - d)(rng);
  JigsawInstance inst;
  inst.positions = {GridPos{r, c}, GridPos{r, c + d}, GridPos{r + d, c}, GridPos{r + d, c + d}};
  inst.label = std::uniform_int_distribution<int>(0, 23)(rng);
  const auto& perm = jigsaw_permutations()[inst.label];
  std::vector<GridPos> order;
  for (int i : perm) order.push_back(inst.positions[i]);
  inst.shuffled = gather_features(feature_map, order);
  return inst;
}

torch::Tensor unshuffle(const torch::Tensor& shuffled, int label) {
  const auto& perm = jigsaw_permutations().at(label);
  auto out = torch::empty_like(shuffled);
  for (int i = 0; i < 4; ++i) out[perm[i]] = shuffled[i];
  return out;
}

torch::Tensor jigsaw_loss(const torch::Tensor& logits, int label) {
  if (logits.dim() != 1 || logits.size(0) != 24) {
    throw ShapeError("jigsaw loss: expected 24 logits, got " + torch::str(logits.sizes()));
  }
  if (label < 0 || label >= 24) throw ShapeError("jigsaw loss: label out of range");
  return -torch::log_softmax(logits, 0)[label];
}

void PredictorConfig::validate() const {
  if (num_fc_layers < 1 || hidden_dim < 1 || context_count < 1 || feature_dim < 1) {
    throw ConfigError("predictor: layer count and dimensions must be positive");
  }
}

void JigsawClassifierConfig::validate() const {
  if (num_fc_layers < 1 || hidden_dim < 1 || feature_dim < 1) {
    throw ConfigError("jigsaw classifier: layer count and dimensions must be positive");
  }
}

MLPImpl::MLPImpl(int in_dim, int hidden_dim, int out_dim, int num_layers) {
  layers_ = register_module("layers", torch::nn::ModuleList());
  for (int i = 0; i < num_layers; ++i) {
    const int in = i == 0 ? in_dim : hidden_dim;
    const int out = i == num_layers - 1 ? out_dim : hidden_dim;
    layers_->push_back(torch::nn::Linear(in, out));
  }
}

torch::Tensor MLPImpl::forward(torch::Tensor x) {
  const auto n = layers_->size();
  for (size_t i = 0; i < n; ++i) {
    x = layers_[i]->as<torch::nn::Linear>()->forward(x);
    if (i + 1 < n) x = torch::relu(x);
  }
  return x;
}

Predictor build_predictor(const PredictorConfig& config, uint64_t rng_seed) {
  config.validate();
  torch::manual_seed(rng_seed);
  return Predictor(config.in_dim(), config.hidden_dim, config.out_dim(), config.num_fc_layers);
}

JigsawClassifier build_jigsaw_classifier(const JigsawClassifierConfig& config, uint64_t rng_seed) {
  config.validate();
  torch::manual_seed(rng_seed);
  return JigsawClassifier(config.in_dim(), config.hidden_dim, JigsawClassifierConfig::out_dim(),
                          config.num_fc_layers);
}

torch::Tensor gather_features(const torch::Tensor& feature_map, const std::vector<GridPos>& positions) {
  const int64_t cols = feature_map.size(2);
  std::vector<int64_t> flat;
  flat.reserve(positions.size());
  for (const auto& p : positions) flat.push_back(p.row * cols + p.col);
  auto index = torch::tensor(flat, torch::kLong).to(feature_map.device());
  return feature_map.flatten(1).index_select(1, index).t();
}

ContrastiveHead predictor_head(Predictor predictor) {
  return [predictor](const torch::Tensor& fmap, const PredictionSample& s) mutable {
    return predictor->forward(gather_features(fmap, s.context).flatten());
  };
}

JigsawHead classifier_head(JigsawClassifier classifier) {
  return [classifier](const torch::Tensor&, const torch::Tensor& shuffled,
                      const std::array<GridPos, 4>&) mutable { return classifier->forward(shuffled.flatten()); };
}

std::vector<std::pair<size_t, std::array<int64_t, 2>>> dense_patch_grid(const std::vector<torch::Tensor>& images,
                                                                        int patch_size) {
  std::vector<std::pair<size_t, std::array<int64_t, 2>>> out;
  for (size_t i = 0; i < images.size(); ++i) {
    const auto h = images[i].size(-2), w = images[i].size(-1);
    for (int64_t y = 0; y + patch_size <= h; y += patch_size) {
      for (int64_t x = 0; x + patch_size <= w; x += patch_size) out.push_back({i, {y, x}});
    }
  }
  return out;
}

namespace {

torch::Tensor crop(const torch::Tensor& img, int64_t y, int64_t x, int64_t size) {
  return img.slice(-2, y, y + size).slice(-1, x, x + size);
}

// Substream seed for patch i; keeps results independent of evaluation order.
uint64_t substream_seed(uint64_t seed, size_t i) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(i)};
  uint64_t out;
  seq.generate(reinterpret_cast<uint32_t*>(&out), reinterpret_cast<uint32_t*>(&out) + 2);
  return out;
}

}  // namespace

AccuracyReport evaluate_contrastive_top1(NSE& nse, const ContrastiveHead& head,
                                         const std::vector<torch::Tensor>& images,
                                         const ContrastiveEvalOptions& options) {
  torch::NoGradGuard guard;
  const bool was_training = nse->is_training();
  nse->eval();
  const auto patches = dense_patch_grid(images, options.patch_size);
  if (patches.empty()) throw DataError("contrastive evaluation: no image holds a full patch");
  int64_t hits = 0, total = 0;
  for (size_t i = 0; i < patches.size(); ++i) {
    const auto& [idx, corner] = patches[i];
    auto fmap = extract_structure_features(nse, crop(images[idx], corner[0], corner[1], options.patch_size)
                                                    .unsqueeze(0))[0];
    Rng rng(substream_seed(options.seed, i));
    for (int r = 0; r < options.repeats; ++r) {
      const auto s = sample_prediction_positions({fmap.size(1), fmap.size(2)}, options.strategy,
                                                 options.num_negatives, rng);
      auto pred = head(fmap, s).flatten();
      std::vector<GridPos> cands{s.target};
      cands.insert(cands.end(), s.negatives.begin(), s.negatives.end());
      auto vecs = gather_features(fmap, cands);
      auto sims = torch::nn::functional::cosine_similarity(
          vecs, pred.unsqueeze(0).expand_as(vecs), torch::nn::functional::CosineSimilarityFuncOptions().dim(1));
      const double pos = sims[0].item<double>();
      const double best_neg = sims.slice(0, 1).max().item<double>();
      hits += pos > best_neg ? 1 : 0;
      ++total;
    }
  }
  nse->train(was_training);
  return {static_cast<double>(hits) / static_cast<double>(total), total};
}

AccuracyReport evaluate_jigsaw_accuracy(NSE& nse, const JigsawHead& head, const std::vector<torch::Tensor>& images,
                                        const JigsawEvalOptions& options) {
  torch::NoGradGuard guard;
  const bool was_training = nse->is_training();
  nse->eval();
  const auto patches = dense_patch_grid(images, options.patch_size);
  if (patches.empty()) throw DataError("jigsaw evaluation: no image holds a full patch");
  int64_t hits = 0, total = 0;
  for (size_t i = 0; i < patches.size(); ++i) {
    const auto& [idx, corner] = patches[i];
    auto fmap = extract_structure_features(nse, crop(images[idx], corner[0], corner[1], options.patch_size)
                                                    .unsqueeze(0))[0];
    Rng rng(substream_seed(options.seed, i));
    for (int r = 0; r < options.repeats; ++r) {
      const auto inst = sample_jigsaw_instance(fmap, rng);
      const auto logits = head(fmap, inst.shuffled, inst.positions);
      hits += logits.argmax().item<int64_t>() == inst.label ? 1 : 0;
      ++total;
    }
  }
  nse->train(was_training);
  return {static_cast<double>(hits) / static_cast<double>(total), total};
}

}  // namespace spsr
