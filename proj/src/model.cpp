#include "protorec/model.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/core.h>

#include "protorec/errors.hpp"
#include "protorec/seed.hpp"

namespace protorec {

std::string_view to_string(Variant v) { return v == Variant::mf ? "mf" : "protomf"; }

Variant parse_variant(std::string_view s) {
  if (s == "mf") return Variant::mf;
  if (s == "protomf") return Variant::protomf;
  throw UsageError(fmt::format("unknown variant '{}'", s));
}

void FilterSpec::validate(std::size_t user_prototypes, std::size_t item_prototypes) const {
  auto check = [](int k, std::size_t l, const char* name) {
    if (k == kAllPrototypes) return;
    if (k < 1 || static_cast<std::size_t>(k) > l)
      throw UsageError(fmt::format("{}={} must be -1 or in [1, {}]", name, k, l));
  };
  check(k_u, user_prototypes, "k_u");
  check(k_t, item_prototypes, "k_t");
}

namespace {

Matrix normal_block(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Matrix m(rows, cols);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 0.1);
  for (double& v : m.values()) v = dist(rng);
  return m;
}

}  // namespace

ModelParams init_params(const ModelShape& shape, std::uint64_t seed) {
  if (shape.dim == 0) throw UsageError("latent dimension must be positive");
  ModelParams p;
  p.variant = shape.variant;
  p.user_factors = normal_block(shape.n_users, shape.dim, derive_seed(seed, "init/user_factors"));
  p.item_factors = normal_block(shape.n_items, shape.dim, derive_seed(seed, "init/item_factors"));
  if (shape.variant == Variant::protomf) {
    if (shape.user_prototypes == 0 || shape.item_prototypes == 0)
      throw UsageError("protomf needs at least one prototype per side");
    const auto lu = shape.user_prototypes;
    const auto lt = shape.item_prototypes;
    p.user_prototypes = normal_block(lu, shape.dim, derive_seed(seed, "init/user_prototypes"));
    p.item_prototypes = normal_block(lt, shape.dim, derive_seed(seed, "init/item_prototypes"));
    p.user_map = normal_block(lu, lt, derive_seed(seed, "init/user_map"));
    p.item_map = normal_block(lt, lu, derive_seed(seed, "init/item_map"));
  }
  return p;
}

namespace detail {

std::vector<std::uint32_t> topk_indices(std::span<const double> values, std::size_t k) {
  std::vector<std::uint32_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0u);
  if (k >= values.size()) return idx;
  auto better = [&](std::uint32_t a, std::uint32_t b) {
    return values[a] > values[b] || (values[a] == values[b] && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + k, idx.end(), better);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void transpose_times(const Matrix& m, std::span<const double> v, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double vi = v[i];
    auto r = m.row(i);
    for (std::size_t j = 0; j < m.cols(); ++j) out[j] += r[j] * vi;
  }
}

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> n(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) n[i] = norm(m.row(i));
  return n;
}

ProtoEmbedding embed(std::span<const double> x, const Matrix& prototypes,
                     std::span<const double> prototype_norms, const Matrix& map, int k) {
  const std::size_t l = prototypes.rows();
  ProtoEmbedding e;
  e.filtered.resize(l);
  const double xn = norm(x);
  for (std::size_t i = 0; i < l; ++i)
    e.filtered[i] = cosine(x, prototypes.row(i), xn, prototype_norms[i]);
  if (k != kAllPrototypes && static_cast<std::size_t>(k) < l) {
    auto keep = topk_indices(e.filtered, static_cast<std::size_t>(k));
    std::vector<double> masked(l, 0.0);
    e.retained.assign(l, 0);
    for (auto i : keep) {
      masked[i] = e.filtered[i];
      e.retained[i] = 1;
    }
    e.filtered = std::move(masked);
  } else {
    e.retained.assign(l, 1);
  }
  e.mapped.resize(map.cols());
  transpose_times(map, e.filtered, e.mapped);
  return e;
}

}  // namespace detail

SimilarityVector cosine_embed(std::span<const double> x, const Matrix& prototypes) {
  SimilarityVector s;
  const double xn = norm(x);
  s.values.resize(prototypes.rows());
  s.mask.resize(prototypes.rows());
  for (std::size_t i = 0; i < prototypes.rows(); ++i) {
    auto p = prototypes.row(i);
    s.values[i] = detail::cosine(x, p, xn, norm(p));
    s.mask[i] = static_cast<std::uint32_t>(i);
  }
  return s;
}

SimilarityVector topk_filter(SimilarityVector s, int k) {
  if (k == kAllPrototypes) return s;
  if (k < 1) throw UsageError(fmt::format("k={} must be -1 or positive", k));
  auto keep = detail::topk_indices(s.values, static_cast<std::size_t>(k));
  std::vector<double> masked(s.values.size(), 0.0);
  for (auto i : keep) masked[i] = s.values[i];
  return {std::move(masked), std::move(keep)};
}

namespace {

void check_indices(const ModelParams& params, std::uint32_t user, std::uint32_t item) {
  if (user >= params.n_users())
    throw std::out_of_range(fmt::format("user index {} out of range [0, {})", user, params.n_users()));
  if (item >= params.n_items())
    throw std::out_of_range(fmt::format("item index {} out of range [0, {})", item, params.n_items()));
}

double proto_score(const detail::ProtoEmbedding& u, const detail::ProtoEmbedding& t) {
  return dot(u.filtered, t.mapped) + dot(t.filtered, u.mapped);
}

}  // namespace

double affinity(const ModelParams& params, std::uint32_t user, std::uint32_t item,
                const FilterSpec& filter) {
  check_indices(params, user, item);
  if (params.variant == Variant::mf)
    return dot(params.user_factors.row(user), params.item_factors.row(item));
  auto un = detail::row_norms(params.user_prototypes);
  auto tn = detail::row_norms(params.item_prototypes);
  auto u = detail::embed(params.user_factors.row(user), params.user_prototypes, un,
                         params.user_map, filter.k_u);
  auto t = detail::embed(params.item_factors.row(item), params.item_prototypes, tn,
                         params.item_map, filter.k_t);
  return proto_score(u, t);
}

std::vector<double> batch_scores(const ModelParams& params, std::uint32_t user,
                                 std::span<const std::uint32_t> items, const FilterSpec& filter) {
  std::vector<double> out(items.size());
  if (items.empty()) {
    if (user >= params.n_users())
      throw std::out_of_range(fmt::format("user index {} out of range", user));
    return out;
  }
  for (auto t : items) check_indices(params, user, t);
  if (params.variant == Variant::mf) {
    auto x = params.user_factors.row(user);
    for (std::size_t i = 0; i < items.size(); ++i)
      out[i] = dot(x, params.item_factors.row(items[i]));
    return out;
  }
  auto un = detail::row_norms(params.user_prototypes);
  auto tn = detail::row_norms(params.item_prototypes);
  auto u = detail::embed(params.user_factors.row(user), params.user_prototypes, un,
                         params.user_map, filter.k_u);
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto t = detail::embed(params.item_factors.row(items[i]), params.item_prototypes, tn,
                           params.item_map, filter.k_t);
    out[i] = proto_score(u, t);
  }
  return out;
}

}  // namespace protorec
