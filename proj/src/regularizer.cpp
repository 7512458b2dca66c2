#include "protorec/model.hpp"
#include "protorec/train.hpp"

namespace protorec {

namespace {

// Unit rows; degenerate rows stay zero.
Matrix unit_rows(const Matrix& p, std::vector<double>& norms) {
  norms = detail::row_norms(p);
  Matrix u(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (norms[i] < kNormEpsilon) continue;
    auto src = p.row(i);
    auto dst = u.row(i);
    for (std::size_t c = 0; c < p.cols(); ++c) dst[c] = src[c] / norms[i];
  }
  return u;
}

}  // namespace

double regularizer_penalty(const Matrix& prototypes) {
  double sum = 0.0;
  for (std::size_t i = 0; i < prototypes.rows(); ++i) {
    for (std::size_t j = 0; j < prototypes.rows(); ++j) {
      // Normalized rows have unit norm, so the diagonal is exactly 1.
      const double g =
          i == j ? 1.0 : detail::exact_cosine(prototypes.row(i), prototypes.row(j));
      sum += g * g;
    }
  }
  return sum;
}

Matrix regularizer_gradient(const Matrix& prototypes) {
  std::vector<double> norms;
  const Matrix unit = unit_rows(prototypes, norms);
  const std::size_t l = prototypes.rows(), d = prototypes.cols();
  Matrix grad(l, d);
  std::vector<double> g(d);
  for (std::size_t i = 0; i < l; ++i) {
    if (norms[i] < kNormEpsilon) continue;
    std::fill(g.begin(), g.end(), 0.0);
    auto ui = unit.row(i);
    for (std::size_t j = 0; j < l; ++j) {
      if (j == i) continue;
      auto uj = unit.row(j);
      const double c = 4.0 * dot(ui, uj);
      for (std::size_t k = 0; k < d; ++k) g[k] += c * uj[k];
    }
    // Project out the radial part: d(p/|p|)/dp = (I - p^ p^T) / |p|.
    const double radial = dot(g, ui);
    auto out = grad.row(i);
    for (std::size_t k = 0; k < d; ++k) out[k] = (g[k] - radial * ui[k]) / norms[i];
  }
  return grad;
}

}  // namespace protorec
