#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "protorec/matrix.hpp"

namespace protorec {

enum class Variant { mf, protomf };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);  // throws UsageError

// Serialized as -1 in configs, checkpoints and on the command line.
inline constexpr int kAllPrototypes = -1;

// How many prototype similarities each user/item keeps in the forward pass.
struct FilterSpec {
  int k_u = kAllPrototypes;
  int k_t = kAllPrototypes;

  // Throws UsageError unless each k is ALL or in [1, L].
  void validate(std::size_t user_prototypes, std::size_t item_prototypes) const;

  bool operator==(const FilterSpec&) const = default;
};

// Norms below this are treated as zero; similarity to such a vector is 0.
inline constexpr double kNormEpsilon = 1e-12;

struct SimilarityVector {
  std::vector<double> values;
  std::vector<std::uint32_t> mask;  // retained indices, ascending
};

struct ModelParams {
  Variant variant = Variant::protomf;
  Matrix user_factors;     // N x d
  Matrix item_factors;     // M x d
  Matrix user_prototypes;  // L_u x d (empty for mf)
  Matrix item_prototypes;  // L_t x d (empty for mf)
  Matrix user_map;         // L_u x L_t, takes u* to the item-side space
  Matrix item_map;         // L_t x L_u, takes t* to the user-side space

  std::size_t n_users() const { return user_factors.rows(); }
  std::size_t n_items() const { return item_factors.rows(); }
  std::size_t dim() const { return user_factors.cols(); }

  bool operator==(const ModelParams&) const = default;
};

struct ModelShape {
  Variant variant = Variant::protomf;
  std::size_t n_users = 0;
  std::size_t n_items = 0;
  std::size_t dim = 0;
  std::size_t user_prototypes = 0;
  std::size_t item_prototypes = 0;
};

// All blocks drawn from N(0, 0.1^2) with the given seed.
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

// Cosine similarity of x against every row of prototypes.
SimilarityVector cosine_embed(std::span<const double> x, const Matrix& prototypes);

// Keeps the k largest values (ties go to the lower index) and zeroes the rest.
// Dimension is preserved so the fixed cross-space maps stay well-typed.
SimilarityVector topk_filter(SimilarityVector s, int k);

// Throws std::out_of_range for bad indices.
double affinity(const ModelParams& params, std::uint32_t user, std::uint32_t item,
                const FilterSpec& filter);

// Element i is bit-identical to affinity(params, user, items[i], filter).
std::vector<double> batch_scores(const ModelParams& params, std::uint32_t user,
                                 std::span<const std::uint32_t> items, const FilterSpec& filter);

namespace detail {

// Similarity of two vectors given their precomputed norms.
inline double cosine(std::span<const double> x, std::span<const double> p, double x_norm,
                     double p_norm) {
  if (x_norm < kNormEpsilon || p_norm < kNormEpsilon) return 0.0;
  return dot(x, p) / (x_norm * p_norm);
}

// Cosine from raw dot products: dot(x, p) / sqrt(|x|^2 |p|^2). Exactly 1
// for identical vectors, which the norm-based form does not guarantee.
inline double exact_cosine(std::span<const double> x, std::span<const double> p) {
  const double xx = dot(x, x), pp = dot(p, p);
  if (std::sqrt(xx) < kNormEpsilon || std::sqrt(pp) < kNormEpsilon) return 0.0;
  return dot(x, p) / std::sqrt(xx * pp);
}

// Indices of the k largest entries, ties to the lower index, returned ascending.
std::vector<std::uint32_t> topk_indices(std::span<const double> values, std::size_t k);

// out[j] = sum_i m(i, j) * v[i], i ascending.
void transpose_times(const Matrix& m, std::span<const double> v, std::span<double> out);

// Prototype-space representation of one entity: masked similarities s**
// and the mapped vector (W^T s**).
struct ProtoEmbedding {
  std::vector<double> filtered;
  std::vector<double> mapped;
  std::vector<std::uint8_t> retained;  // 1 where the similarity survived filtering
};

ProtoEmbedding embed(std::span<const double> x, const Matrix& prototypes,
                     std::span<const double> prototype_norms, const Matrix& map, int k);

std::vector<double> row_norms(const Matrix& m);

}  // namespace detail

}  // namespace protorec
