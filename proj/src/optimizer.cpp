#include <cmath>

#include "protorec/train.hpp"

namespace protorec {

AdamOptimizer::AdamOptimizer(const ModelParams& params, AdamSettings settings)
    : settings_(settings), m_(params), v_(params) {}

void AdamOptimizer::update_block(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                                 std::size_t step, const AdamSettings& s, double weight_decay) {
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(step));
  auto p = param.values();
  auto g = grad.values();
  auto mv = m.values();
  auto vv = v.values();
  const auto n = static_cast<std::ptrdiff_t>(p.size());
  // Element-wise, so the result does not depend on the thread count.
#pragma omp parallel for schedule(static) if (n > 4096)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (weight_decay > 0.0) p[i] -= s.learning_rate * weight_decay * p[i];
    mv[i] = s.beta1 * mv[i] + (1.0 - s.beta1) * g[i];
    vv[i] = s.beta2 * vv[i] + (1.0 - s.beta2) * g[i] * g[i];
    const double mhat = mv[i] / c1;
    const double vhat = vv[i] / c2;
    p[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

void AdamOptimizer::step(ModelParams& params, const Gradients& grads) {
  ++step_;
  const auto& s = settings_;
  update_block(params.user_factors, grads.user_factors, m_.user_factors, v_.user_factors, step_, s,
               s.weight_decay);
  update_block(params.item_factors, grads.item_factors, m_.item_factors, v_.item_factors, step_, s,
               s.weight_decay);
  if (params.variant == Variant::protomf) {
    update_block(params.user_prototypes, grads.user_prototypes, m_.user_prototypes,
                 v_.user_prototypes, step_, s, 0.0);
    update_block(params.item_prototypes, grads.item_prototypes, m_.item_prototypes,
                 v_.item_prototypes, step_, s, 0.0);
    update_block(params.user_map, grads.user_map, m_.user_map, v_.user_map, step_, s, 0.0);
    update_block(params.item_map, grads.item_map, m_.item_map, v_.item_map, step_, s, 0.0);
  }
}

}  // namespace protorec
