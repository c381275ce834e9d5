#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "anchormi/critics.hpp"
#include "anchormi/gradcheck.hpp"
#include "anchormi/objectives.hpp"

namespace anchormi {

struct GradSweepResult {
  std::string name;
  int seed = 0;
  double eps = 0.0;
  double rel_err = 0.0;
};

namespace detail {

// Smallest |preactivation| over all relu layers for the given pair inputs.
// Central differences sit on a kink whenever a preactivation is within
// eps * |input| of zero, so the sweep shifts biases until none is.
inline double min_abs_preactivation(const Critic& critic, const Mat& inputs) {
  double best = std::numeric_limits<double>::infinity();
  Mat h = inputs;
  int layer = 0;
  while (true) {
    std::string wname = "W" + std::to_string(layer);
    bool found = false;
    for (const auto& e : critic.params.entries)
      if (e.name == wname) found = true;
    if (!found) break;
    std::string bname = "b" + std::to_string(layer);
    std::string wnext = "W" + std::to_string(layer + 1);
    bool has_next = false;
    for (const auto& e : critic.params.entries)
      if (e.name == wnext) has_next = true;
    Mat pre = h * critic.params.at(wname);
    pre.rowwise() += critic.params.at(bname).row(0);
    if (!has_next) break;  // the last layer is linear
    best = std::min(best, pre.cwiseAbs().minCoeff());
    h = pre.cwiseMax(0.0);
    ++layer;
  }
  return best;
}

}  // namespace detail

// Finite-difference gradient sweep over every objective family on small
// random joint critics. Shift-invariant objectives carry exact-zero
// gradient directions where a central difference at tiny eps is pure
// cancellation noise against the 1e-8 relative-error floor, so those
// families use a larger eps.
inline std::vector<GradSweepResult> gradcheck_sweep(int seeds) {
  GeneratingFunction sym_log{RuleKind::sym_log};
  GeneratingFunction psph{RuleKind::sym_pseudospherical, 2.0};
  GeneratingFunction spow{RuleKind::sym_power, 2.0};
  GeneratingFunction sinv{RuleKind::sym_inverse_log};
  GeneratingFunction alog{RuleKind::asym_log};
  GeneratingFunction apow{RuleKind::asym_power, 2.0};
  GeneratingFunction ainv{RuleKind::asym_inverse_log};

  struct Case {
    std::string name;
    std::function<Tape::NodeId(Tape&, const ScoreMatrix&)> loss;
    double eps;
  };
  const std::vector<Case> cases = {
      {"dv", [](Tape& t, const ScoreMatrix& s) { return loss_dv(t, s).node; }, 1e-3},
      {"nwj", [](Tape& t, const ScoreMatrix& s) { return loss_nwj(t, s).node; }, 1e-5},
      {"mine",
       [](Tape& t, const ScoreMatrix& s) { return loss_mine(t, s, 1.37).node; }, 1e-5},
      {"js", [](Tape& t, const ScoreMatrix& s) { return loss_js(t, s).node; }, 1e-5},
      {"smile(train=js)",
       [](Tape& t, const ScoreMatrix& s) { return loss_js(t, s).node; }, 1e-5},
      {"infonce",
       [](Tape& t, const ScoreMatrix& s) { return loss_infonce(t, s).node; }, 1e-3},
      {"infonce_anchor(nu=1)",
       [](Tape& t, const ScoreMatrix& s) { return loss_infonce_anchor(t, s, 1.0).node; },
       1e-5},
      {"infonce_anchor(nu=0)",
       [](Tape& t, const ScoreMatrix& s) { return loss_infonce_anchor(t, s, 0.0).node; },
       1e-3},
      {"scored_anchor(sym_log)",
       [=](Tape& t, const ScoreMatrix& s) {
         return loss_scored_anchor(t, s, sym_log, 1.0).node;
       },
       1e-5},
      {"scored_anchor(pseudospherical,2)",
       [=](Tape& t, const ScoreMatrix& s) {
         return loss_scored_anchor(t, s, psph, 1.0).node;
       },
       1e-5},
      {"scored_anchor(power,2)",
       [=](Tape& t, const ScoreMatrix& s) {
         return loss_scored_anchor(t, s, spow, 1.0).node;
       },
       1e-5},
      {"scored_anchor(inverse_log)",
       [=](Tape& t, const ScoreMatrix& s) {
         return loss_scored_anchor(t, s, sinv, 1.0).node;
       },
       1e-5},
      {"scored_anchor(sym_log,K=1)",
       [=](Tape& t, const ScoreMatrix& s) {
         return loss_scored_anchor(t, s, sym_log, 1.0, 1).node;
       },
       1e-5},
      {"generalized_dv(beta=1)",
       [](Tape& t, const ScoreMatrix& s) { return loss_generalized_dv(t, s, 1.0).node; },
       1e-5},
      {"generalized_dv(beta=inf)",
       [](Tape& t, const ScoreMatrix& s) {
         return loss_generalized_dv(t, s, 0.0, true).node;
       },
       1e-5},
      {"asym_dre(log)",
       [=](Tape& t, const ScoreMatrix& s) { return loss_asym_dre(t, s, alog).node; },
       1e-5},
      {"asym_dre(power,2)",
       [=](Tape& t, const ScoreMatrix& s) { return loss_asym_dre(t, s, apow).node; },
       1e-5},
      {"asym_dre(inverse_log)",
       [=](Tape& t, const ScoreMatrix& s) { return loss_asym_dre(t, s, ainv).node; },
       1e-5},
      {"joint_marginal_anchor(nu=1)",
       [](Tape& t, const ScoreMatrix& s) {
         return loss_joint_marginal_anchor(t, s, 1.0).node;
       },
       1e-5},
      {"joint_marginal_anchor(nu=0)",
       [](Tape& t, const ScoreMatrix& s) {
         return loss_joint_marginal_anchor(t, s, 0.0).node;
       },
       1e-3},
  };

  std::vector<GradSweepResult> out;
  for (int seed = 1; seed <= seeds; ++seed) {
    std::mt19937_64 rng(mix_seed(seed, 0x9cad));
    std::normal_distribution<double> nd(0.0, 1.0);
    int b = 5, dx = 3, dy = 2;
    Mat xs(b, dx), ys(b, dy);
    for (int i = 0; i < b; ++i) {
      for (int d = 0; d < dx; ++d) xs(i, d) = nd(rng);
      for (int d = 0; d < dy; ++d) ys(i, d) = nd(rng);
    }
    CriticSpec spec;
    spec.kind = CriticKind::joint;
    spec.x_dim = dx;
    spec.y_dim = dy;
    spec.hidden = {8};
    spec.embed_dim = 4;
    Critic critic = make_critic(spec, mix_seed(seed, 0xC0FE));
    critic.params.rng_seed = mix_seed(seed, 0xC0FE);
    // Keep every preactivation clear of the relu kink: a weight perturbed by
    // eps moves a preactivation by at most eps * |input|, so a 0.02 floor
    // leaves a wide margin at eps = 1e-3.
    Mat pair_inputs(b * b, dx + dy);
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        pair_inputs.block(static_cast<Eigen::Index>(i) * b + j, 0, 1, dx) = xs.row(i);
        pair_inputs.block(static_cast<Eigen::Index>(i) * b + j, dx, 1, dy) = ys.row(j);
      }
    std::uniform_real_distribution<double> jitter(0.01, 0.09);
    for (int guard = 0; guard < 500; ++guard) {
      if (detail::min_abs_preactivation(critic, pair_inputs) > 0.02) break;
      for (auto& e : critic.params.entries)
        if (e.name[0] == 'b')
          for (Eigen::Index i = 0; i < e.value.size(); ++i)
            e.value(i) += jitter(rng);
    }
    for (const auto& c : cases) {
      LossBuilder build = [&](Tape& tape, ParamStore&) {
        ScoreMatrix s = score_matrix(tape, critic, xs, ys);
        return c.loss(tape, s);
      };
      out.push_back({c.name, seed, c.eps, finite_diff_check(build, critic.params, c.eps)});
    }
  }
  return out;
}

}  // namespace anchormi
