#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/param_store.hpp"

namespace anchormi {

// Adam with bias-corrected first and second moments.
struct OptimizerState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<Mat> first_moment;
  std::vector<Mat> second_moment;
};

inline OptimizerState make_optimizer(const ParamStore& params, double learning_rate) {
  OptimizerState st;
  st.learning_rate = learning_rate;
  for (const auto& e : params.entries) {
    st.first_moment.push_back(Mat::Zero(e.value.rows(), e.value.cols()));
    st.second_moment.push_back(Mat::Zero(e.value.rows(), e.value.cols()));
  }
  return st;
}

inline void optimizer_step(OptimizerState& state, ParamStore& params,
                           const GradList& grads) {
  if (grads.size() != params.entries.size())
    throw DimensionError("optimizer_step: gradient list length mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const auto& e = params.entries[i];
    if (grads[i].rows() != e.value.rows() || grads[i].cols() != e.value.cols())
      throw DimensionError("optimizer_step: gradient shape mismatch for " + e.name);
    if (!grads[i].allFinite())
      throw NumericError("optimizer_step: non-finite gradient for parameter " + e.name);
  }
  state.step_count += 1;
  double t = static_cast<double>(state.step_count);
  double c1 = 1.0 - std::pow(state.beta1, t);
  double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Mat& m = state.first_moment[i];
    Mat& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = (state.beta2 * v.array() +
         (1.0 - state.beta2) * grads[i].array().square())
            .matrix();
    Mat update = ((m.array() / c1) /
                  ((v.array() / c2).sqrt() + state.epsilon))
                     .matrix();
    params.entries[i].value -= state.learning_rate * update;
    if (!params.entries[i].value.allFinite())
      throw NumericError("optimizer_step: non-finite parameter " +
                         params.entries[i].name + " after update");
  }
}

}  // namespace anchormi
