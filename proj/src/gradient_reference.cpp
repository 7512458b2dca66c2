#include <algorithm>
#include <cmath>

#include "protorec/errors.hpp"
#include "protorec/model.hpp"
#include "protorec/train.hpp"

namespace protorec::reference {

namespace {

struct Side {
  std::vector<double> sims;  // raw cosine similarities
  std::vector<bool> kept;
  std::vector<double> star;  // masked similarities
  double x_norm = 0.0;
};

Side embed_side(std::span<const double> x, const Matrix& protos, int k) {
  Side s;
  const std::size_t l = protos.rows();
  s.x_norm = norm(x);
  s.sims.resize(l);
  for (std::size_t i = 0; i < l; ++i) {
    const double pn = norm(protos.row(i));
    s.sims[i] = (s.x_norm < kNormEpsilon || pn < kNormEpsilon)
                    ? 0.0
                    : dot(x, protos.row(i)) / (s.x_norm * pn);
  }
  s.kept.assign(l, true);
  if (k != kAllPrototypes && static_cast<std::size_t>(k) < l) {
    // Selection by repeated arg-max, ties to the lower index.
    std::vector<bool> taken(l, false);
    for (int r = 0; r < k; ++r) {
      std::size_t best = l;
      for (std::size_t i = 0; i < l; ++i)
        if (!taken[i] && (best == l || s.sims[i] > s.sims[best])) best = i;
      taken[best] = true;
    }
    s.kept = taken;
  }
  s.star.resize(l);
  for (std::size_t i = 0; i < l; ++i) s.star[i] = s.kept[i] ? s.sims[i] : 0.0;
  return s;
}

// Accumulates d(out)/d(x) and d(out)/d(P) given dL/d(star) for one entity.
void backprop_cosine(const Side& side, std::span<const double> g_star,
                     std::span<const double> x, const Matrix& protos, std::span<double> gx,
                     Matrix& gp) {
  if (side.x_norm < kNormEpsilon) return;
  const std::size_t d = x.size();
  for (std::size_t l = 0; l < protos.rows(); ++l) {
    if (!side.kept[l]) continue;
    auto p = protos.row(l);
    const double pn = norm(p);
    if (pn < kNormEpsilon) continue;
    const double g = g_star[l];
    const double s = side.sims[l];
    auto gpl = gp.row(l);
    for (std::size_t k = 0; k < d; ++k) {
      gx[k] += g * (p[k] / pn - s * x[k] / side.x_norm) / side.x_norm;
      gpl[k] += g * (x[k] / side.x_norm - s * p[k] / pn) / pn;
    }
  }
}

// Penalty gradient through the full Gram matrix, diagonal included, with
// the normalization Jacobian applied as an explicit d x d matrix.
Matrix penalty_gradient(const Matrix& p) {
  const std::size_t l = p.rows(), d = p.cols();
  Matrix unit(l, d);
  std::vector<double> norms(l);
  for (std::size_t i = 0; i < l; ++i) {
    norms[i] = norm(p.row(i));
    if (norms[i] < kNormEpsilon) continue;
    for (std::size_t k = 0; k < d; ++k) unit(i, k) = p(i, k) / norms[i];
  }
  Matrix grad(l, d);
  for (std::size_t i = 0; i < l; ++i) {
    if (norms[i] < kNormEpsilon) continue;
    std::vector<double> g_unit(d, 0.0);
    for (std::size_t j = 0; j < l; ++j) {
      const double gij = dot(unit.row(i), unit.row(j));
      // (i, j) and (j, i) terms each contribute 2 * G_ij * p^_j.
      for (std::size_t k = 0; k < d; ++k) g_unit[k] += 4.0 * gij * unit(j, k);
    }
    for (std::size_t a = 0; a < d; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < d; ++b) {
        const double jac = ((a == b ? 1.0 : 0.0) - unit(i, a) * unit(i, b)) / norms[i];
        acc += jac * g_unit[b];
      }
      grad(i, a) = acc;
    }
  }
  return grad;
}

}  // namespace

LossBreakdown batch_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                              const TrainConfig& config, Gradients& out) {
  if (batch.empty()) throw UsageError("gradient batch is empty");
  const std::size_t d = params.dim();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool proto = params.variant == Variant::protomf;
  LossBreakdown loss;

  for (const auto& ex : batch) {
    std::vector<std::uint32_t> items{ex.positive};
    items.insert(items.end(), ex.negatives.begin(), ex.negatives.end());
    out.touched_users.push_back(ex.user);
    out.touched_items.insert(out.touched_items.end(), items.begin(), items.end());
    auto x = params.user_factors.row(ex.user);
    auto gx = out.user_factors.row(ex.user);

    if (!proto) {
      std::vector<double> a(items.size()), w(items.size());
      for (std::size_t c = 0; c < items.size(); ++c) a[c] = dot(x, params.item_factors.row(items[c]));
      loss.l_original += detail::softmax_loss(a, w) * inv_b;
      for (std::size_t c = 0; c < items.size(); ++c) {
        auto y = params.item_factors.row(items[c]);
        auto gy = out.item_factors.row(items[c]);
        for (std::size_t k = 0; k < d; ++k) {
          gx[k] += w[c] * inv_b * y[k];
          gy[k] += w[c] * inv_b * x[k];
        }
      }
      continue;
    }

    const Matrix& wu = params.user_map;
    const Matrix& wt = params.item_map;
    const std::size_t lu = wu.rows(), lt = wu.cols();
    Side us = embed_side(x, params.user_prototypes, config.filter.k_u);
    std::vector<Side> ts;
    std::vector<double> a(items.size()), w(items.size());
    for (std::size_t c = 0; c < items.size(); ++c) {
      ts.push_back(embed_side(params.item_factors.row(items[c]), params.item_prototypes,
                              config.filter.k_t));
      // a = sum_{i,j} u*_i (W_u[i][j] + W_t[j][i]) t*_j
      double s = 0.0;
      for (std::size_t i = 0; i < lu; ++i)
        for (std::size_t j = 0; j < lt; ++j)
          s += us.star[i] * (wu(i, j) + wt(j, i)) * ts[c].star[j];
      a[c] = s;
    }
    loss.l_original += detail::softmax_loss(a, w) * inv_b;

    std::vector<double> g_ustar(lu, 0.0);
    for (std::size_t c = 0; c < items.size(); ++c) {
      const double wc = w[c] * inv_b;
      std::vector<double> g_tstar(lt, 0.0);
      for (std::size_t i = 0; i < lu; ++i) {
        for (std::size_t j = 0; j < lt; ++j) {
          const double b = wu(i, j) + wt(j, i);
          g_ustar[i] += wc * b * ts[c].star[j];
          g_tstar[j] += wc * b * us.star[i];
          out.user_map(i, j) += wc * us.star[i] * ts[c].star[j];
          out.item_map(j, i) += wc * us.star[i] * ts[c].star[j];
        }
      }
      backprop_cosine(ts[c], g_tstar, params.item_factors.row(items[c]), params.item_prototypes,
                      out.item_factors.row(items[c]), out.item_prototypes);
    }
    backprop_cosine(us, g_ustar, x, params.user_prototypes, gx, out.user_prototypes);
  }

  if (proto) {
    loss.penalty_u = regularizer_penalty(params.user_prototypes);
    loss.penalty_t = regularizer_penalty(params.item_prototypes);
    if (config.lambda_u > 0.0) {
      auto g = penalty_gradient(params.user_prototypes);
      for (std::size_t i = 0; i < g.size(); ++i)
        out.user_prototypes.values()[i] += config.lambda_u * g.values()[i];
    }
    if (config.lambda_t > 0.0) {
      auto g = penalty_gradient(params.item_prototypes);
      for (std::size_t i = 0; i < g.size(); ++i)
        out.item_prototypes.values()[i] += config.lambda_t * g.values()[i];
    }
  }
  loss.total = loss.l_original + config.lambda_u * loss.penalty_u + config.lambda_t * loss.penalty_t;

  auto uniq = [](std::vector<std::uint32_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(out.touched_users);
  uniq(out.touched_items);
  detail::check_finite(out);
  return loss;
}

}  // namespace protorec::reference
