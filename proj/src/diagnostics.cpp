#include "protorec/diagnostics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/core.h>

#include "protorec/checkpoint.hpp"
#include "protorec/errors.hpp"
#include "protorec/train.hpp"

namespace protorec {

DistanceProfile distance_profile(const ModelParams& params, const Dataset& dataset,
                                 std::span<const std::size_t> k_values, Exec exec) {
  if (params.variant != Variant::protomf)
    throw UsageError("distance profile needs a protomf model (mf has no prototypes)");
  const std::size_t l = params.item_prototypes.rows();
  for (auto k : k_values)
    if (k < 1 || k > l) throw UsageError(fmt::format("k={} outside [1, {}]", k, l));
  if (dataset.n_items != params.n_items())
    throw DataError("dataset and model disagree on the number of items");

  const std::size_t m = params.n_items();
  // Per item: average distance to its k nearest prototypes, for every k.
  Matrix per_item(m, k_values.size());
  const auto n = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    auto y = params.item_factors.row(i);
    std::vector<double> dist(l);
    for (std::size_t p = 0; p < l; ++p)
      dist[p] = 1.0 - detail::exact_cosine(y, params.item_prototypes.row(p));
    std::sort(dist.begin(), dist.end());
    for (std::size_t kk = 0; kk < k_values.size(); ++kk) {
      double s = 0.0;
      for (std::size_t j = 0; j < k_values[kk]; ++j) s += dist[j];
      per_item(i, kk) = s / static_cast<double>(k_values[kk]);
    }
  }

  const auto decile = popularity_deciles(dataset);
  const std::size_t bins = decile_count(dataset);
  DistanceProfile out;
  out.k_values.assign(k_values.begin(), k_values.end());
  out.bin_sizes.assign(bins, 0);
  out.mean_distance = Matrix(bins, k_values.size(), 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    ++out.bin_sizes[decile[i]];
    for (std::size_t kk = 0; kk < k_values.size(); ++kk)
      out.mean_distance(decile[i], kk) += per_item(i, kk);
  }
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t kk = 0; kk < k_values.size(); ++kk)
      out.mean_distance(b, kk) = out.bin_sizes[b] == 0
                                     ? std::numeric_limits<double>::quiet_NaN()
                                     : out.mean_distance(b, kk) / double(out.bin_sizes[b]);
  return out;
}

std::string distance_profile_csv(const DistanceProfile& p) {
  std::ostringstream out;
  out << "decile,n_items";
  for (auto k : p.k_values) out << ",k" << k;
  out << '\n';
  for (std::size_t b = 0; b < p.bin_sizes.size(); ++b) {
    out << b << ',' << p.bin_sizes[b];
    for (std::size_t kk = 0; kk < p.k_values.size(); ++kk) {
      const double v = p.mean_distance(b, kk);
      out << ',' << (std::isnan(v) ? std::string() : format_double(v));
    }
    out << '\n';
  }
  return out.str();
}

GramStats gram_stats(const Matrix& prototypes) {
  const std::size_t l = prototypes.rows();
  if (l < 2) throw UsageError("gram statistics need at least two prototypes");
  GramStats g;
  double sum = 0.0;
  for (std::size_t i = 0; i < l; ++i) {
    for (std::size_t j = 0; j < l; ++j) {
      if (i == j) continue;
      const double v = std::abs(detail::exact_cosine(prototypes.row(i), prototypes.row(j)));
      sum += v;
      g.max_abs_offdiag = std::max(g.max_abs_offdiag, v);
    }
  }
  g.mean_abs_offdiag = sum / static_cast<double>(l * (l - 1));
  g.penalty_value = regularizer_penalty(prototypes);
  return g;
}

void write_embeddings_csv(std::ostream& out, const ModelParams& params, const Dataset& dataset) {
  if (dataset.n_items != params.n_items())
    throw DataError("dataset and model disagree on the number of items");
  const std::size_t d = params.dim();
  out << "kind,index,key,popularity,group";
  for (std::size_t k = 0; k < d; ++k) out << ",v" << k;
  out << '\n';
  auto values = [&](std::span<const double> row) {
    for (double v : row) out << ',' << format_double(v);
    out << '\n';
  };
  for (std::size_t i = 0; i < params.n_items(); ++i) {
    out << "item," << i << ',' << dataset.item_keys[i] << ',' << dataset.item_popularity[i] << ','
        << to_string(dataset.item_group[i]);
    values(params.item_factors.row(i));
  }
  for (std::size_t p = 0; p < params.item_prototypes.rows(); ++p) {
    out << "prototype," << p << ",,,";
    values(params.item_prototypes.row(p));
  }
}

void export_embeddings(const ModelParams& params, const Dataset& dataset,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  write_embeddings_csv(out, params, dataset);
  if (!out) throw DataError(fmt::format("write failed for {}", path.string()));
}

std::vector<EmbeddingRow> read_embeddings_csv(std::istream& in) {
  std::vector<EmbeddingRow> rows;
  std::string line;
  if (!std::getline(in, line)) throw DataError("embeddings csv: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() < 5) throw DataError("embeddings csv: short row");
    EmbeddingRow r;
    r.kind = f[0];
    r.index = std::stoul(f[1]);
    r.key = f[2];
    r.popularity = f[3];
    r.group = f[4];
    for (std::size_t i = 5; i < f.size(); ++i) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(f[i].data(), f[i].data() + f[i].size(), v);
      if (ec != std::errc()) throw DataError("embeddings csv: bad number");
      r.values.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace protorec
