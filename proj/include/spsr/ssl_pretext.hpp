#pragma once

#include "spsr/nse.hpp"

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace spsr {

using Rng = std::mt19937_64;

enum class SamplingStrategy { horizontal, vertical, cross };

std::string to_string(SamplingStrategy s);
// Accepts "h"/"horizontal", "v"/"vertical", "c"/"cross".
SamplingStrategy parse_strategy(const std::string& s);
int context_count(SamplingStrategy s);

struct GridPos {
  int64_t row = 0;
  int64_t col = 0;
  friend bool operator==(const GridPos&, const GridPos&) = default;
};

struct GridShape {
  int64_t rows = 0;
  int64_t cols = 0;
};

inline constexpr ReceptiveField kStructureReceptiveField{31, 4};

// Smallest feature-grid offset d with stride * d >= rf, i.e. ceil(rf / stride). Two
// features whose Chebyshev grid distance reaches it have disjoint input windows.
int min_disjoint_separation(const ReceptiveField& rf = kStructureReceptiveField);

bool windows_disjoint(const ReceptiveField& rf, const GridPos& a, const GridPos& b);

// Context offsets relative to the target: horizontal (0, +-d), vertical (+-d, 0),
// cross both pairs.
std::vector<GridPos> context_offsets(SamplingStrategy s, int separation);

struct PredictionSample {
  std::vector<GridPos> context;
  GridPos target;
  std::vector<GridPos> negatives;
};

// All grid positions whose windows are disjoint from the target and every context.
std::vector<GridPos> negative_candidates(const GridShape& grid, const GridPos& target,
                                         const std::vector<GridPos>& context,
                                         const ReceptiveField& rf = kStructureReceptiveField);

// Target is uniform over positions whose context stays on the grid; negatives are
// drawn uniformly without replacement from negative_candidates, capped at the
// candidate count. num_negatives < 0 takes every candidate (in raster order).
// Throws SamplingError if the grid is too small or no negative candidate exists.
PredictionSample sample_prediction_positions(const GridShape& grid, SamplingStrategy s,
                                             int64_t num_negatives, Rng& rng,
                                             const ReceptiveField& rf = kStructureReceptiveField);

// -log(h(pos,p) / (h(pos,p) + sum_n h(neg_n,p))) with h(f,p) = exp(tau * cos(f,p)),
// evaluated as logsumexp. pred, positive: [D]; negatives: [N, D].
// Throws NumericError on a zero-norm vector or tau <= 0, ShapeError on dim mismatch.
torch::Tensor infonce_loss(const torch::Tensor& pred, const torch::Tensor& positive,
                           const torch::Tensor& negatives, double tau = 64.0);

using Permutation = std::array<int, 4>;

// The 24 orderings of (0,1,2,3) in lexicographic order; the index is the label.
const std::vector<Permutation>& jigsaw_permutations();

struct JigsawInstance {
  torch::Tensor shuffled;  // [4, C]; shuffled[i] = canonical[perm[i]]
  int label = 0;
  // Canonical order: top-left, top-right, bottom-left, bottom-right.
  std::array<GridPos, 4> positions;
};

// feature_map: [C, rows, cols]. Picks a 2x2 anchor set at separation 8 and shuffles
// it by a uniformly drawn permutation. Throws SamplingError if the grid is too small.
JigsawInstance sample_jigsaw_instance(const torch::Tensor& feature_map, Rng& rng,
                                      const ReceptiveField& rf = kStructureReceptiveField);

// Inverse of the shuffle: returns vectors in canonical order.
torch::Tensor unshuffle(const torch::Tensor& shuffled, int label);

// -log softmax(logits)[label]; logits: [24].
torch::Tensor jigsaw_loss(const torch::Tensor& logits, int label);

struct PredictorConfig {
  int num_fc_layers = 3;
  int hidden_dim = 128;
  int context_count = 2;  // M
  int feature_dim = 32;   // must equal the extractor's out_channels

  int in_dim() const { return context_count * feature_dim; }
  int out_dim() const { return feature_dim; }
  void validate() const;
};

// Fully connected layers with ReLU between them.
class MLPImpl : public torch::nn::Module {
 public:
  MLPImpl(int in_dim, int hidden_dim, int out_dim, int num_layers);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::ModuleList layers_{nullptr};
};
TORCH_MODULE(MLP);

using Predictor = MLP;
using JigsawClassifier = MLP;

struct JigsawClassifierConfig {
  int num_fc_layers = 3;
  int hidden_dim = 128;
  int feature_dim = 32;

  int in_dim() const { return 4 * feature_dim; }
  static constexpr int out_dim() { return 24; }
  void validate() const;
};

Predictor build_predictor(const PredictorConfig& config, uint64_t rng_seed);
JigsawClassifier build_jigsaw_classifier(const JigsawClassifierConfig& config, uint64_t rng_seed);

// Gathers feature vectors at grid positions from a [C, rows, cols] map -> [N, C].
torch::Tensor gather_features(const torch::Tensor& feature_map, const std::vector<GridPos>& positions);

// Evaluation heads. Any extractor can be paired with any head, which is how the
// cross-task evaluation is run.
using ContrastiveHead =
    std::function<torch::Tensor(const torch::Tensor& feature_map, const PredictionSample& sample)>;
using JigsawHead = std::function<torch::Tensor(const torch::Tensor& feature_map, const torch::Tensor& shuffled,
                                               const std::array<GridPos, 4>& positions)>;

ContrastiveHead predictor_head(Predictor predictor);
JigsawHead classifier_head(JigsawClassifier classifier);

struct AccuracyReport {
  double accuracy = 0.0;
  int64_t n_samples = 0;
};

struct ContrastiveEvalOptions {
  int patch_size = 200;
  int64_t num_negatives = -1;  // -1: every disjoint position on the map
  int repeats = 1;             // anchors drawn per patch
  SamplingStrategy strategy = SamplingStrategy::horizontal;
  uint64_t seed = 0;
};

// Densely tiles each image into patches; per patch draws anchors, predicts the
// target and counts a hit when the positive has strictly the largest cosine
// similarity among positive and negatives. Each patch uses its own rng substream.
AccuracyReport evaluate_contrastive_top1(NSE& nse, const ContrastiveHead& head,
                                         const std::vector<torch::Tensor>& images,
                                         const ContrastiveEvalOptions& options);

struct JigsawEvalOptions {
  int patch_size = 84;
  int repeats = 1;
  uint64_t seed = 0;
};

AccuracyReport evaluate_jigsaw_accuracy(NSE& nse, const JigsawHead& head,
                                        const std::vector<torch::Tensor>& images,
                                        const JigsawEvalOptions& options);

// Top-left corners of non-overlapping patch_size tiles covering each image.
std::vector<std::pair<size_t, std::array<int64_t, 2>>> dense_patch_grid(
    const std::vector<torch::Tensor>& images, int patch_size);

}  // namespace spsr
