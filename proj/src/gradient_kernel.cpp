#include <algorithm>
#include <cmath>

#include <omp.h>

#include "protorec/errors.hpp"
#include "protorec/model.hpp"
#include "protorec/train.hpp"

namespace protorec {

namespace {

// Per-example scratch. Each example writes only its own slot, so the
// parallel phase is race-free and independent of scheduling.
struct ExampleSlot {
  double loss = 0.0;
  std::size_t n_candidates = 0;
  std::vector<double> user_grad;  // d
  std::vector<double> item_grad;  // C x d
  // Prototype-side terms, reduced later in example order.
  std::vector<double> user_unit;      // d, x / |x| (zero if degenerate)
  std::vector<double> user_sim_grad;  // L_u, dL/ds masked by retention
  std::vector<double> user_sims;      // L_u, filtered similarities
  std::vector<double> user_star;      // L_u
  std::vector<double> z;              // L_t, sum_c w_c t*_c
  std::vector<double> item_unit;      // C x d
  std::vector<double> item_sim_grad;  // C x L_t
  std::vector<double> item_sims;      // C x L_t
};

struct Unit {
  Matrix rows;
  std::vector<double> norms;
};

Unit unit_prototypes(const Matrix& p) {
  Unit u{Matrix(p.rows(), p.cols()), detail::row_norms(p)};
  for (std::size_t i = 0; i < p.rows(); ++i) {
    if (u.norms[i] < kNormEpsilon) continue;
    for (std::size_t c = 0; c < p.cols(); ++c) u.rows(i, c) = p(i, c) / u.norms[i];
  }
  return u;
}

// dL/dx for x's cosine embedding: sum_l g_l (p^_l - s_l x^) / |x|.
void cosine_input_grad(std::span<const double> sim_grad, std::span<const double> sims,
                       std::span<const double> unit_x, double x_norm, const Matrix& unit_p,
                       std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  if (x_norm < kNormEpsilon) return;
  double radial = 0.0;
  for (std::size_t l = 0; l < sim_grad.size(); ++l) {
    const double g = sim_grad[l];
    if (g == 0.0) continue;
    auto p = unit_p.row(l);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += g * p[k];
    radial += g * sims[l];
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = (out[k] - radial * unit_x[k]) / x_norm;
}

void mark_touched(Gradients& out, std::span<const TrainingExample> batch) {
  for (const auto& ex : batch) {
    out.touched_users.push_back(ex.user);
    out.touched_items.push_back(ex.positive);
    out.touched_items.insert(out.touched_items.end(), ex.negatives.begin(), ex.negatives.end());
  }
  auto uniq = [](std::vector<std::uint32_t>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  uniq(out.touched_users);
  uniq(out.touched_items);
}

void validate_batch(std::span<const TrainingExample> batch, const ModelParams& params) {
  if (batch.empty()) throw UsageError("gradient batch is empty");
  for (const auto& ex : batch) {
    if (ex.user >= params.n_users() || ex.positive >= params.n_items())
      throw std::out_of_range("training example index out of range");
    for (auto n : ex.negatives)
      if (n >= params.n_items()) throw std::out_of_range("negative item index out of range");
  }
}

void mf_kernel(std::span<const TrainingExample> batch, const ModelParams& params,
               std::vector<ExampleSlot>& slots) {
  const std::size_t d = params.dim();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const auto& ex = batch[e];
    auto& s = slots[e];
    const std::size_t c_count = ex.negatives.size() + 1;
    s.n_candidates = c_count;
    auto x = params.user_factors.row(ex.user);
    std::vector<double> scores(c_count), w(c_count);
    for (std::size_t c = 0; c < c_count; ++c) {
      const auto item = c == 0 ? ex.positive : ex.negatives[c - 1];
      scores[c] = dot(x, params.item_factors.row(item));
    }
    s.loss = detail::softmax_loss(scores, w);
    s.user_grad.assign(d, 0.0);
    s.item_grad.assign(c_count * d, 0.0);
    for (std::size_t c = 0; c < c_count; ++c) {
      const auto item = c == 0 ? ex.positive : ex.negatives[c - 1];
      const double wc = w[c] * inv_b;
      auto y = params.item_factors.row(item);
      for (std::size_t k = 0; k < d; ++k) {
        s.user_grad[k] += wc * y[k];
        s.item_grad[c * d + k] = wc * x[k];
      }
    }
  }
}

void proto_kernel(std::span<const TrainingExample> batch, const ModelParams& params,
                  const FilterSpec& filter, const Unit& pu, const Unit& pt,
                  std::vector<ExampleSlot>& slots) {
  const std::size_t d = params.dim();
  const std::size_t lu = params.user_prototypes.rows();
  const std::size_t lt = params.item_prototypes.rows();
  const Matrix& wu = params.user_map;  // L_u x L_t
  const Matrix& wt = params.item_map;  // L_t x L_u
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const auto n = static_cast<std::ptrdiff_t>(batch.size());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const auto& ex = batch[e];
    auto& s = slots[e];
    const std::size_t c_count = ex.negatives.size() + 1;
    s.n_candidates = c_count;
    auto item_at = [&](std::size_t c) { return c == 0 ? ex.positive : ex.negatives[c - 1]; };

    auto x = params.user_factors.row(ex.user);
    const double xn = norm(x);
    auto ue = detail::embed(x, params.user_prototypes, pu.norms, wu, filter.k_u);

    std::vector<detail::ProtoEmbedding> te(c_count);
    std::vector<double> scores(c_count), w(c_count);
    for (std::size_t c = 0; c < c_count; ++c) {
      te[c] = detail::embed(params.item_factors.row(item_at(c)), params.item_prototypes, pt.norms,
                            wt, filter.k_t);
      scores[c] = dot(ue.filtered, te[c].mapped) + dot(te[c].filtered, ue.mapped);
    }
    s.loss = detail::softmax_loss(scores, w);
    for (double& v : w) v *= inv_b;

    // a_c = u*^T (W_t^T t*_c) + t*_c^T (W_u^T u*)
    s.z.assign(lt, 0.0);
    for (std::size_t c = 0; c < c_count; ++c)
      for (std::size_t j = 0; j < lt; ++j) s.z[j] += w[c] * te[c].filtered[j];

    // dL/du* = W_t^T z + W_u z
    std::vector<double> g_ustar(lu);
    detail::transpose_times(wt, s.z, g_ustar);
    for (std::size_t i = 0; i < lu; ++i) g_ustar[i] += dot(wu.row(i), s.z);

    // dL/dt*_c = w_c (W_u^T u* + W_t u*)
    std::vector<double> v(lt);
    for (std::size_t j = 0; j < lt; ++j) v[j] = ue.mapped[j] + dot(wt.row(j), ue.filtered);

    s.user_star = ue.filtered;
    s.user_sims = ue.filtered;
    s.user_sim_grad.resize(lu);
    for (std::size_t i = 0; i < lu; ++i) s.user_sim_grad[i] = ue.retained[i] ? g_ustar[i] : 0.0;
    s.user_unit.assign(d, 0.0);
    if (xn >= kNormEpsilon)
      for (std::size_t k = 0; k < d; ++k) s.user_unit[k] = x[k] / xn;
    s.user_grad.resize(d);
    cosine_input_grad(s.user_sim_grad, s.user_sims, s.user_unit, xn, pu.rows, s.user_grad);

    s.item_grad.assign(c_count * d, 0.0);
    s.item_unit.assign(c_count * d, 0.0);
    s.item_sim_grad.assign(c_count * lt, 0.0);
    s.item_sims.assign(c_count * lt, 0.0);
    for (std::size_t c = 0; c < c_count; ++c) {
      auto y = params.item_factors.row(item_at(c));
      const double yn = norm(y);
      std::span<double> unit{s.item_unit.data() + c * d, d};
      std::span<double> sg{s.item_sim_grad.data() + c * lt, lt};
      std::span<double> sims{s.item_sims.data() + c * lt, lt};
      if (yn >= kNormEpsilon)
        for (std::size_t k = 0; k < d; ++k) unit[k] = y[k] / yn;
      for (std::size_t j = 0; j < lt; ++j) {
        sims[j] = te[c].filtered[j];
        sg[j] = te[c].retained[j] ? w[c] * v[j] : 0.0;
      }
      cosine_input_grad(sg, sims, unit, yn, pt.rows,
                        std::span<double>{s.item_grad.data() + c * d, d});
    }
  }
}

// dP[l] = (sum_r g_r[l] unit_r - (sum_r g_r[l] s_r[l]) p^_l) / |p_l|, rows r
// visited in a fixed order.
void reduce_prototype_grad(const std::vector<ExampleSlot>& slots, bool item_side,
                           const Unit& proto, Matrix& out) {
  const std::size_t l_count = proto.rows.rows();
  const std::size_t d = proto.rows.cols();
  const auto ln = static_cast<std::ptrdiff_t>(l_count);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t l = 0; l < ln; ++l) {
    auto dst = out.row(l);
    std::fill(dst.begin(), dst.end(), 0.0);
    if (proto.norms[l] < kNormEpsilon) continue;
    double radial = 0.0;
    for (const auto& s : slots) {
      const std::size_t rows = item_side ? s.n_candidates : 1;
      for (std::size_t r = 0; r < rows; ++r) {
        const double g = item_side ? s.item_sim_grad[r * l_count + l] : s.user_sim_grad[l];
        if (g == 0.0) continue;
        const double* unit = item_side ? s.item_unit.data() + r * d : s.user_unit.data();
        for (std::size_t k = 0; k < d; ++k) dst[k] += g * unit[k];
        radial += g * (item_side ? s.item_sims[r * l_count + l] : s.user_sims[l]);
      }
    }
    auto p = proto.rows.row(l);
    for (std::size_t k = 0; k < d; ++k) dst[k] = (dst[k] - radial * p[k]) / proto.norms[l];
  }
}

}  // namespace

LossBreakdown batch_gradients(std::span<const TrainingExample> batch, const ModelParams& params,
                              const TrainConfig& config, Gradients& out) {
  validate_batch(batch, params);
  const std::size_t d = params.dim();
  std::vector<ExampleSlot> slots(batch.size());
  const bool proto = params.variant == Variant::protomf;

  Unit pu, pt;
  if (proto) {
    pu = unit_prototypes(params.user_prototypes);
    pt = unit_prototypes(params.item_prototypes);
    proto_kernel(batch, params, config.filter, pu, pt, slots);
  } else {
    mf_kernel(batch, params, slots);
  }

  LossBreakdown loss;
  double sum = 0.0;
  for (const auto& s : slots) sum += s.loss;
  loss.l_original = sum / static_cast<double>(batch.size());

  // Row scatter in example order.
  mark_touched(out, batch);
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& ex = batch[e];
    const auto& s = slots[e];
    auto ug = out.user_factors.row(ex.user);
    for (std::size_t k = 0; k < d; ++k) ug[k] += s.user_grad[k];
    for (std::size_t c = 0; c < s.n_candidates; ++c) {
      auto ig = out.item_factors.row(c == 0 ? ex.positive : ex.negatives[c - 1]);
      for (std::size_t k = 0; k < d; ++k) ig[k] += s.item_grad[c * d + k];
    }
  }

  if (proto) {
    reduce_prototype_grad(slots, false, pu, out.user_prototypes);
    reduce_prototype_grad(slots, true, pt, out.item_prototypes);

    const std::size_t lu = params.user_prototypes.rows();
    const std::size_t lt = params.item_prototypes.rows();
    // dW_u = sum_e u*_e z_e^T, dW_t = sum_e z_e u*_e^T
    const auto lun = static_cast<std::ptrdiff_t>(lu);
    const auto ltn = static_cast<std::ptrdiff_t>(lt);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < lun; ++i) {
      auto dst = out.user_map.row(i);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (const auto& s : slots) {
        const double ui = s.user_star[i];
        if (ui == 0.0) continue;
        for (std::size_t j = 0; j < lt; ++j) dst[j] += ui * s.z[j];
      }
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < ltn; ++j) {
      auto dst = out.item_map.row(j);
      std::fill(dst.begin(), dst.end(), 0.0);
      for (const auto& s : slots) {
        const double zj = s.z[j];
        if (zj == 0.0) continue;
        for (std::size_t i = 0; i < lu; ++i) dst[i] += zj * s.user_star[i];
      }
    }

    loss.penalty_u = regularizer_penalty(params.user_prototypes);
    loss.penalty_t = regularizer_penalty(params.item_prototypes);
    auto add_scaled = [](Matrix& dst, const Matrix& g, double lambda) {
      auto dv = dst.values();
      auto gv = g.values();
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += lambda * gv[i];
    };
    if (config.lambda_u > 0.0)
      add_scaled(out.user_prototypes, regularizer_gradient(params.user_prototypes), config.lambda_u);
    if (config.lambda_t > 0.0)
      add_scaled(out.item_prototypes, regularizer_gradient(params.item_prototypes), config.lambda_t);
  }
  loss.total = loss.l_original + config.lambda_u * loss.penalty_u + config.lambda_t * loss.penalty_t;
  detail::check_finite(out);
  return loss;
}

}  // namespace protorec
