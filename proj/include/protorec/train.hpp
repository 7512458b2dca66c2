#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protorec/data.hpp"
#include "protorec/matrix.hpp"
#include "protorec/model.hpp"

namespace protorec {

struct TrainConfig {
  Variant variant = Variant::protomf;
  std::size_t dim = 32;
  std::size_t user_prototypes = 16;
  std::size_t item_prototypes = 16;
  FilterSpec filter;
  double lambda_u = 0.0;
  double lambda_t = 0.0;
  std::size_t n_negatives = 10;
  double learning_rate = 1e-3;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double weight_decay = 1e-4;  // decoupled, latent factors only
  std::uint64_t seed = 0;

  void validate() const;  // throws UsageError

  ModelShape shape(std::size_t n_users, std::size_t n_items) const;

  bool operator==(const TrainConfig&) const = default;
};

struct LossBreakdown {
  double l_original = 0.0;
  double penalty_u = 0.0;
  double penalty_t = 0.0;
  double total = 0.0;
};

// One sampled-softmax term: a positive scored against sampled negatives.
struct TrainingExample {
  std::uint32_t user = 0;
  std::uint32_t positive = 0;
  std::vector<std::uint32_t> negatives;
};

// Squared Frobenius norm of the Gram matrix of row-normalized prototypes.
// Rows with norm below kNormEpsilon contribute a unit diagonal entry only.
double regularizer_penalty(const Matrix& prototypes);

// d penalty / d prototypes, including the row-normalization Jacobian.
Matrix regularizer_gradient(const Matrix& prototypes);

struct Gradients;

namespace detail {

// Sampled-softmax loss with the positive at scores[0]. If `dloss` is
// non-empty it receives d loss / d scores (softmax minus one-hot).
double softmax_loss(std::span<const double> scores, std::span<double> dloss = {});

void check_finite(const Gradients& g);  // throws NumericalError naming the block

}  // namespace detail

double sampled_softmax_loss(const ModelParams& params, std::uint32_t user, std::uint32_t positive,
                            std::span<const std::uint32_t> negatives, const FilterSpec& filter);

// Parameter-shaped gradient buffers. Only rows listed in touched_users /
// touched_items are nonzero in the factor blocks.
struct Gradients {
  Matrix user_factors;
  Matrix item_factors;
  Matrix user_prototypes;
  Matrix item_prototypes;
  Matrix user_map;
  Matrix item_map;
  std::vector<std::uint32_t> touched_users;
  std::vector<std::uint32_t> touched_items;

  explicit Gradients(const ModelParams& shape_of);
  Gradients() = default;

  // Zeroes touched rows and the dense blocks.
  void clear();
};

// Total loss of a batch: mean sampled-softmax loss plus the weighted
// prototype penalties.
LossBreakdown batch_loss(std::span<const TrainingExample> batch, const ModelParams& params,
                         const TrainConfig& config);

// OpenMP batch gradient kernel. `out` must be cleared and shaped like
// params. The result is bit-identical for any thread count: per-example
// work runs in parallel into private slots and every reduction runs in a
// fixed order. Throws NumericalError naming the block on non-finite output.
LossBreakdown batch_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                              const TrainConfig& config, Gradients& out);

namespace reference {

// Serial reference: straight chain rule per example, accumulated directly.
LossBreakdown batch_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                              const TrainConfig& config, Gradients& out);

}  // namespace reference

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled, applied to the factor blocks only
};

// Adam with bias-corrected moments over every parameter block.
class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParams& params, AdamSettings settings);

  void step(ModelParams& params, const Gradients& grads);

  // One Adam update of a single block at 1-based `step`.
  static void update_block(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                           std::size_t step, const AdamSettings& s, double weight_decay);

  std::size_t steps() const { return step_; }

 private:
  AdamSettings settings_;
  std::size_t step_ = 0;
  Gradients m_;
  Gradients v_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  LossBreakdown loss;     // l_original averaged over batches; penalties at epoch end
  std::optional<double> val_hit_ratio;
  std::optional<double> val_ndcg;
  bool selected = false;  // parameters at the end of this epoch were returned
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  std::size_t examples_seen = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Seeded, deterministic training: initialization, shuffling and negative
// sampling all derive from config.seed. Returns the parameters of the epoch
// with the best validation HitRatio@10 (earliest on ties; last epoch when
// there is no validation data). Throws NumericalError on divergence.
TrainResult train(const Dataset& dataset, const Split& split, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct SweepRow {
  TrainConfig config;
  bool ok = false;
  std::string error;
  double val_hit_ratio = 0.0;
  double val_ndcg = 0.0;
  std::size_t best_epoch = 0;
};

// Stable key of everything in a config except its seed.
std::string config_key(const TrainConfig& config);

// Trains each config with seed derive_seed(master_seed, "sweep/" + key).
// Failed runs are recorded and placed after successful ones; successful
// rows are sorted by validation NDCG@10, descending.
std::vector<SweepRow> sweep(std::span<const TrainConfig> configs, const Dataset& dataset,
                            const Split& split, std::uint64_t master_seed);

}  // namespace protorec
