#include "protorec/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/core.h>

#include "protorec/checkpoint.hpp"
#include "protorec/errors.hpp"
#include "protorec/eval.hpp"
#include "protorec/seed.hpp"

namespace protorec {

void TrainConfig::validate() const {
  if (dim == 0) throw UsageError("dim must be positive");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be positive");
  if (epochs < 1) throw UsageError("epochs must be at least 1");
  if (batch_size < 1) throw UsageError("batch_size must be at least 1");
  if (n_negatives < 1) throw UsageError("negatives must be at least 1");
  if (!(lambda_u >= 0.0) || !(lambda_t >= 0.0)) throw UsageError("lambdas must be non-negative");
  if (!(weight_decay >= 0.0)) throw UsageError("weight_decay must be non-negative");
  if (variant == Variant::protomf) {
    if (user_prototypes == 0 || item_prototypes == 0)
      throw UsageError("protomf needs at least one prototype per side");
    filter.validate(user_prototypes, item_prototypes);
  }
}

ModelShape TrainConfig::shape(std::size_t n_users, std::size_t n_items) const {
  return {variant, n_users, n_items, dim, user_prototypes, item_prototypes};
}

std::string config_key(const TrainConfig& c) {
  return fmt::format(
      "variant={};dim={};L_u={};L_t={};k_u={};k_t={};lambda_u={};lambda_t={};negatives={};"
      "lr={};epochs={};batch={};weight_decay={}",
      to_string(c.variant), c.dim, c.user_prototypes, c.item_prototypes, c.filter.k_u,
      c.filter.k_t, format_double(c.lambda_u), format_double(c.lambda_t), c.n_negatives,
      format_double(c.learning_rate), c.epochs, c.batch_size, format_double(c.weight_decay));
}

namespace detail {

double softmax_loss(std::span<const double> scores, std::span<double> dloss) {
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double s : scores) z += std::exp(s - mx);
  if (!dloss.empty()) {
    for (std::size_t c = 0; c < scores.size(); ++c) dloss[c] = std::exp(scores[c] - mx) / z;
    dloss[0] -= 1.0;
  }
  return mx + std::log(z) - scores[0];
}

void check_finite(const Gradients& g) {
  auto check = [](const Matrix& m, const char* name) {
    if (!all_finite(m.values()))
      throw NumericalError(fmt::format("non-finite gradient in {}", name));
  };
  check(g.user_factors, "user_factors");
  check(g.item_factors, "item_factors");
  check(g.user_prototypes, "user_prototypes");
  check(g.item_prototypes, "item_prototypes");
  check(g.user_map, "user_map");
  check(g.item_map, "item_map");
}

}  // namespace detail

double sampled_softmax_loss(const ModelParams& params, std::uint32_t user, std::uint32_t positive,
                            std::span<const std::uint32_t> negatives, const FilterSpec& filter) {
  if (negatives.empty()) throw UsageError("sampled softmax needs at least one negative");
  std::vector<std::uint32_t> items{positive};
  items.insert(items.end(), negatives.begin(), negatives.end());
  const auto scores = batch_scores(params, user, items, filter);
  return detail::softmax_loss(scores);
}

Gradients::Gradients(const ModelParams& p)
    : user_factors(p.user_factors.rows(), p.user_factors.cols()),
      item_factors(p.item_factors.rows(), p.item_factors.cols()),
      user_prototypes(p.user_prototypes.rows(), p.user_prototypes.cols()),
      item_prototypes(p.item_prototypes.rows(), p.item_prototypes.cols()),
      user_map(p.user_map.rows(), p.user_map.cols()),
      item_map(p.item_map.rows(), p.item_map.cols()) {}

void Gradients::clear() {
  for (auto u : touched_users) std::ranges::fill(user_factors.row(u), 0.0);
  for (auto t : touched_items) std::ranges::fill(item_factors.row(t), 0.0);
  touched_users.clear();
  touched_items.clear();
  user_prototypes.fill(0.0);
  item_prototypes.fill(0.0);
  user_map.fill(0.0);
  item_map.fill(0.0);
}

LossBreakdown batch_loss(std::span<const TrainingExample> batch, const ModelParams& params,
                         const TrainConfig& config) {
  if (batch.empty()) throw UsageError("loss of an empty batch");
  LossBreakdown loss;
  double sum = 0.0;
  for (const auto& ex : batch)
    sum += sampled_softmax_loss(params, ex.user, ex.positive, ex.negatives, config.filter);
  loss.l_original = sum / static_cast<double>(batch.size());
  if (params.variant == Variant::protomf) {
    loss.penalty_u = regularizer_penalty(params.user_prototypes);
    loss.penalty_t = regularizer_penalty(params.item_prototypes);
  }
  loss.total = loss.l_original + config.lambda_u * loss.penalty_u + config.lambda_t * loss.penalty_t;
  return loss;
}

TrainResult train(const Dataset& dataset, const Split& split, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (split.train.empty()) throw DataError("no training interactions");
  if (config.variant == Variant::protomf &&
      ((config.lambda_u > 0.0 && config.user_prototypes > config.dim) ||
       (config.lambda_t > 0.0 && config.item_prototypes > config.dim)))
    fmt::print(stderr,
               "warning: more prototypes than latent dimensions; the penalty cannot reach "
               "orthonormality\n");

  ModelParams params =
      init_params(config.shape(dataset.n_users, dataset.n_items), derive_seed(config.seed, "init"));

  std::vector<std::vector<std::uint32_t>> seen(dataset.n_users);
  for (const auto& x : split.train) seen[x.user].push_back(x.item);
  for (auto& s : seen) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }

  std::mt19937_64 shuffle_rng(derive_seed(config.seed, "train/shuffle"));
  std::mt19937_64 negative_rng(derive_seed(config.seed, "train/negatives"));
  std::uniform_int_distribution<std::uint32_t> pick_item(
      0, static_cast<std::uint32_t>(dataset.n_items - 1));

  AdamSettings adam;
  adam.learning_rate = config.learning_rate;
  adam.weight_decay = config.weight_decay;
  AdamOptimizer optimizer(params, adam);
  Gradients grads(params);

  TrainResult result;
  std::optional<double> best_hr;
  std::vector<std::size_t> order(split.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<TrainingExample> batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      batch.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& x = split.train[order[i]];
        const auto& user_items = seen[x.user];
        if (user_items.size() >= dataset.n_items)
          throw DataError(fmt::format("user {} interacted with every item; no negatives",
                                      dataset.user_keys.at(x.user)));
        auto& ex = batch[i - start];
        ex.user = x.user;
        ex.positive = x.item;
        ex.negatives.clear();
        while (ex.negatives.size() < config.n_negatives) {
          const auto t = pick_item(negative_rng);
          if (!std::binary_search(user_items.begin(), user_items.end(), t))
            ex.negatives.push_back(t);
        }
      }
      grads.clear();
      LossBreakdown lb;
      try {
        lb = batch_gradients(batch, params, config, grads);
      } catch (const NumericalError& e) {
        throw NumericalError(fmt::format("epoch {} batch {}: {}", epoch, n_batches, e.what()));
      }
      if (!std::isfinite(lb.total))
        throw NumericalError(
            fmt::format("epoch {} batch {}: loss diverged ({})", epoch, n_batches, lb.total));
      optimizer.step(params, grads);
      loss_sum += lb.l_original;
      ++n_batches;
      result.examples_seen += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss.l_original = loss_sum / static_cast<double>(n_batches);
    if (params.variant == Variant::protomf) {
      rec.loss.penalty_u = regularizer_penalty(params.user_prototypes);
      rec.loss.penalty_t = regularizer_penalty(params.item_prototypes);
    }
    rec.loss.total = rec.loss.l_original + config.lambda_u * rec.loss.penalty_u +
                     config.lambda_t * rec.loss.penalty_t;

    bool improved = false;
    if (!split.validation.empty()) {
      const auto records = rank_all(params, config.filter, split, Stage::validation);
      rec.val_hit_ratio = hit_ratio(records);
      rec.val_ndcg = ndcg(records);
      improved = !best_hr || *rec.val_hit_ratio > *best_hr;
      if (improved) best_hr = rec.val_hit_ratio;
    } else {
      improved = true;
    }
    if (improved) {
      result.params = params;
      result.best_epoch = epoch;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (auto& rec : result.history) rec.selected = rec.epoch == result.best_epoch;
  return result;
}

std::vector<SweepRow> sweep(std::span<const TrainConfig> configs, const Dataset& dataset,
                            const Split& split, std::uint64_t master_seed) {
  if (configs.empty()) throw UsageError("sweep needs at least one config");
  std::vector<SweepRow> rows;
  for (const auto& base : configs) {
    SweepRow row;
    row.config = base;
    row.config.seed = derive_seed(master_seed, "sweep/" + config_key(base));
    try {
      auto result = train(dataset, split, row.config);
      const auto& best = result.history.at(result.best_epoch - 1);
      row.val_hit_ratio = best.val_hit_ratio.value_or(0.0);
      row.val_ndcg = best.val_ndcg.value_or(0.0);
      row.best_epoch = result.best_epoch;
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.ok != b.ok) return a.ok;
    return a.ok && a.val_ndcg > b.val_ndcg;
  });
  return rows;
}

}  // namespace protorec
