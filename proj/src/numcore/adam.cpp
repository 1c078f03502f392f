#include "gcot/numcore/adam.hpp"

#include <cmath>
#include <string>

#include "gcot/error.hpp"

namespace gcot::num {

AdamState::AdamState(AdamHyper h, const std::vector<Tensor*>& params) : hyper(h) {
  for (const Tensor* p : params) {
    first_moment.emplace_back(p->rows(), p->cols());
    second_moment.emplace_back(p->rows(), p->cols());
  }
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " +
                         std::to_string(state.first_moment.size()) + " moments");
  }
  const AdamHyper& h = state.hyper;
  if (!(h.learning_rate >= 0.0)) throw ConfigError("adam_step: learning rate must be >= 0");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i]) || !params[i]->same_shape(state.first_moment[i]) ||
        !params[i]->same_shape(state.second_moment[i])) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " is " +
                           shape_string(*params[i]) + ", gradient " + shape_string(grads[i]));
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->data();
    auto g = grads[i].data();
    auto m = state.first_moment[i].data();
    auto v = state.second_moment[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= h.learning_rate * mhat / (std::sqrt(vhat) + h.epsilon);
    }
  }
}

}  // namespace gcot::num
