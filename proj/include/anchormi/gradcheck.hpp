#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/param_store.hpp"
#include "anchormi/tape.hpp"

namespace anchormi {

// Builds the loss graph on a fresh tape; must be deterministic in params.
using LossBuilder = std::function<Tape::NodeId(Tape&, ParamStore&)>;

// Central finite differences of the builder's loss against the tape
// gradient, over every parameter coordinate (or a seed-deterministic sample
// of 10k coordinates above that). Relative error uses
// max(|analytic|, |numeric|, 1e-8) as the denominator.
inline double finite_diff_check(const LossBuilder& build, ParamStore& params,
                                double eps) {
  if (!(eps > 0.0) || eps > 1e-2)
    throw ConfigError("finite_diff_check: eps must lie in (0, 1e-2]");

  auto loss_at = [&](ParamStore& p) {
    Tape tape;
    double v = tape.scalar(build(tape, p));
    if (!std::isfinite(v)) throw NumericError("finite_diff_check: non-finite loss");
    return v;
  };

  GradList analytic;
  {
    Tape tape;
    Tape::NodeId loss = build(tape, params);
    if (!std::isfinite(tape.scalar(loss)))
      throw NumericError("finite_diff_check: non-finite loss");
    analytic = tape.backward(loss);
  }

  struct Coord {
    std::size_t entry;
    Eigen::Index flat;
  };
  std::vector<Coord> coords;
  for (std::size_t e = 0; e < params.entries.size(); ++e)
    for (Eigen::Index k = 0; k < params.entries[e].value.size(); ++k)
      coords.push_back({e, k});

  constexpr std::size_t kMaxCoords = 10000;
  if (coords.size() > kMaxCoords) {
    std::mt19937_64 rng(mix_seed(params.rng_seed, 0x5eedc0de));
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(kMaxCoords);
  }

  double max_rel = 0.0;
  for (const Coord& c : coords) {
    double& x = params.entries[c.entry].value(c.flat);
    double saved = x;
    x = saved + eps;
    double fp = loss_at(params);
    x = saved - eps;
    double fm = loss_at(params);
    x = saved;
    double numeric = (fp - fm) / (2.0 * eps);
    double a = analytic[c.entry](c.flat);
    double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
  }
  return max_rel;
}

}  // namespace anchormi
