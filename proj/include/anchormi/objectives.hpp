#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "anchormi/critics.hpp"
#include "anchormi/errors.hpp"
#include "anchormi/scoring.hpp"
#include "anchormi/tape.hpp"

namespace anchormi {

constexpr double kLn2 = 0.6931471805599453;

enum class Family {
  dv,
  nwj,
  mine,
  js,
  smile,
  infonce,
  infonce_anchor,
  scored_anchor,
  generalized_dv,
  asym_dre,
  joint_marginal_anchor,
};

inline Family family_from_name(const std::string& s) {
  if (s == "dv") return Family::dv;
  if (s == "nwj") return Family::nwj;
  if (s == "mine") return Family::mine;
  if (s == "js") return Family::js;
  if (s == "smile") return Family::smile;
  if (s == "infonce") return Family::infonce;
  if (s == "infonce_anchor") return Family::infonce_anchor;
  if (s == "scored_anchor") return Family::scored_anchor;
  if (s == "generalized_dv") return Family::generalized_dv;
  if (s == "asym_dre") return Family::asym_dre;
  if (s == "joint_marginal_anchor") return Family::joint_marginal_anchor;
  throw ConfigError("unknown objective family '" + s + "'");
}

inline std::string family_name(Family f) {
  switch (f) {
    case Family::dv: return "dv";
    case Family::nwj: return "nwj";
    case Family::mine: return "mine";
    case Family::js: return "js";
    case Family::smile: return "smile";
    case Family::infonce: return "infonce";
    case Family::infonce_anchor: return "infonce_anchor";
    case Family::scored_anchor: return "scored_anchor";
    case Family::generalized_dv: return "generalized_dv";
    case Family::asym_dre: return "asym_dre";
    case Family::joint_marginal_anchor: return "joint_marginal_anchor";
  }
  return "?";
}

struct ObjectiveSpec {
  Family family = Family::infonce_anchor;
  int k = 0;                  // 0 selects the minibatch default K = B - 1
  double nu = 1.0;
  double beta = 0.0;          // generalized_dv
  bool beta_infinite = false;
  double tau_clip = 5.0;      // smile
  double ema_rate = 0.99;     // mine
  GeneratingFunction rule;    // scored_anchor / asym_dre

  void validate() const {
    switch (family) {
      case Family::infonce:
        if (k != 0 && k < 2) throw ConfigError("infonce: K must be >= 2");
        break;
      case Family::infonce_anchor:
      case Family::joint_marginal_anchor:
        if (!(nu > 0.0) && !(nu == 0.0 && (k == 0 || k >= 2)))
          throw ConfigError("anchor objectives: need nu > 0, or nu = 0 with K >= 2");
        break;
      case Family::scored_anchor:
        if (!rule.symmetric())
          throw ConfigError("scored_anchor: rule must be symmetric-invariant");
        rule.validate();
        if (!(nu > 0.0) && !(nu == 0.0 && (k == 0 || k >= 2)))
          throw ConfigError("scored_anchor: need nu > 0, or nu = 0 with K >= 2");
        break;
      case Family::asym_dre:
        if (rule.symmetric()) throw ConfigError("asym_dre: rule must be asymmetric");
        rule.validate();
        break;
      case Family::smile:
        if (!(tau_clip > 0.0)) throw ConfigError("smile: tau_clip must be > 0");
        break;
      case Family::mine:
        if (!(ema_rate > 0.0 && ema_rate <= 1.0))
          throw ConfigError("mine: ema_rate must lie in (0, 1]");
        break;
      case Family::generalized_dv:
        if (!beta_infinite && beta < 0.0)
          throw ConfigError("generalized_dv: beta must be >= 0");
        break;
      default:
        break;
    }
  }
};

// Scalar training loss in nats plus its two-term decomposition; the stored
// terms sum to the value exactly.
struct LossValue {
  Tape::NodeId node = -1;
  double value = 0.0;
  double joint_term = 0.0;
  double anchor_term = 0.0;
};

namespace detail {

inline Mat offdiag_mask(int b) {
  Mat m = Mat::Ones(b, b);
  m.diagonal().setZero();
  return m;
}

// Joint-tuple mask of the minibatch anchor loss: row b keeps its diagonal
// score and drops column (b - 1) mod B, leaving exactly K = B - 1 scores.
inline Mat joint_tuple_mask(int b) {
  Mat m = Mat::Ones(b, b);
  for (int r = 0; r < b; ++r) m(r, (r - 1 + b) % b) = 0.0;
  return m;
}

inline LossValue finish_two_term(Tape& tape, Tape::NodeId joint_node,
                                 double w_joint, Tape::NodeId anchor_node,
                                 double w_anchor) {
  LossValue out;
  Tape::NodeId j = tape.scale(joint_node, w_joint);
  if (anchor_node >= 0) {
    Tape::NodeId a = tape.scale(anchor_node, w_anchor);
    out.node = tape.add(j, a);
    out.anchor_term = tape.scalar(a);
  } else {
    out.node = j;
    out.anchor_term = 0.0;
  }
  out.joint_term = tape.scalar(j);
  out.value = tape.scalar(out.node);
  if (!std::isfinite(out.value)) throw NumericError("loss: non-finite value");
  return out;
}

inline void check_exp_safe(const Mat& log_scores, double factor,
                           const char* what) {
  double mx = log_scores.maxCoeff();
  if (mx * factor > 700.0)
    throw NumericError(std::string(what) +
                       ": score overflow, max log-score = " + std::to_string(mx));
}

// mean over off-diagonal entries of exp(scale * S) as a tape node.
inline Tape::NodeId offdiag_exp_mean(Tape& tape, const ScoreMatrix& s,
                                     double factor, const char* what) {
  check_exp_safe(tape.val(s.log_scores), factor, what);
  int b = s.batch;
  Tape::NodeId scaled = factor == 1.0 ? s.log_scores : tape.scale(s.log_scores, factor);
  Tape::NodeId masked = tape.hadamard(tape.exp_(scaled), tape.constant(offdiag_mask(b)));
  return tape.scale(tape.sum_all(masked), 1.0 / (static_cast<double>(b) * (b - 1)));
}

// Elementwise log(nu + e^s) for singleton tuples, stable for small/large s.
inline Tape::NodeId log_nu_plus_exp(Tape& tape, Tape::NodeId s, double nu) {
  double log_nu = std::log(nu);
  return tape.add_scalar(tape.softplus(tape.add_scalar(s, -log_nu)), log_nu);
}

}  // namespace detail

// L_DV = -E_joint[log r] + log E_marg[r]; diagonal entries are the joint
// samples, the B(B-1) off-diagonal entries the marginal ones.
inline LossValue loss_dv(Tape& tape, const ScoreMatrix& s) {
  int b = s.batch;
  Tape::NodeId joint = tape.scale(tape.mean_all(tape.diag(s.log_scores)), -1.0);
  Tape::NodeId row_lse = tape.log_sumexp_rows(
      {{s.log_scores, tape.constant(detail::offdiag_mask(b))}}, Tape::kNegInf);
  Tape::NodeId total_lse =
      tape.log_sumexp_rows({{tape.reshape(row_lse, 1, b), -1}}, Tape::kNegInf);
  Tape::NodeId log_mean =
      tape.add_scalar(total_lse, -std::log(static_cast<double>(b) * (b - 1)));
  return detail::finish_two_term(tape, joint, 1.0, log_mean, 1.0);
}

// L_NWJ = -E_joint[c] + E_marg[e^{c-1}] with c = log r. The bound attains
// the KL divergence at score e * (q1/q0), i.e. c = 1 + log ratio.
inline LossValue loss_nwj(Tape& tape, const ScoreMatrix& s) {
  Tape::NodeId joint = tape.scale(tape.mean_all(tape.diag(s.log_scores)), -1.0);
  Tape::NodeId marg = detail::offdiag_exp_mean(tape, s, 1.0, "loss_nwj");
  return detail::finish_two_term(tape, joint, 1.0, marg, std::exp(-1.0));
}

// MINE training loss: the marginal term is divided by a caller-held EMA of
// the marginal mean, which is treated as a constant by the gradient.
inline LossValue loss_mine(Tape& tape, const ScoreMatrix& s, double ema) {
  if (!(ema > 0.0)) throw NumericError("loss_mine: EMA must be positive");
  Tape::NodeId joint = tape.scale(tape.mean_all(tape.diag(s.log_scores)), -1.0);
  Tape::NodeId marg = detail::offdiag_exp_mean(tape, s, 1.0, "loss_mine");
  return detail::finish_two_term(tape, joint, 1.0, marg, 1.0 / ema);
}

// Current-batch marginal mean of the score, for seeding/updating MINE's EMA.
inline double marginal_mean(const Tape& tape, const ScoreMatrix& s) {
  const Mat& logS = tape.val(s.log_scores);
  detail::check_exp_safe(logS, 1.0, "marginal_mean");
  int b = s.batch;
  double sum = 0.0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      if (i != j) sum += std::exp(logS(i, j));
  return sum / (static_cast<double>(b) * (b - 1));
}

// L_JS = E_joint[sp(-c)] + E_marg[sp(c)].
inline LossValue loss_js(Tape& tape, const ScoreMatrix& s) {
  int b = s.batch;
  Tape::NodeId joint =
      tape.mean_all(tape.softplus(tape.scale(tape.diag(s.log_scores), -1.0)));
  Tape::NodeId sp = tape.softplus(s.log_scores);
  Tape::NodeId marg =
      tape.scale(tape.sum_all(tape.hadamard(sp, tape.constant(detail::offdiag_mask(b)))),
                 1.0 / (static_cast<double>(b) * (b - 1)));
  return detail::finish_two_term(tape, joint, 1.0, marg, 1.0);
}

// L_InfoNCE = -(1/B) sum_b log( r_bb / ((1/B) sum_j r_bj) ). The negated
// loss is capped at ln B.
inline LossValue loss_infonce(Tape& tape, const ScoreMatrix& s) {
  int b = s.batch;
  Tape::NodeId row_lse = tape.log_sumexp_rows({{s.log_scores, -1}}, Tape::kNegInf);
  Tape::NodeId denom = tape.add_scalar(tape.mean_all(row_lse),
                                       -std::log(static_cast<double>(b)));
  Tape::NodeId joint = tape.scale(tape.mean_all(tape.diag(s.log_scores)), -1.0);
  return detail::finish_two_term(tape, joint, 1.0, denom, 1.0);
}

// Minibatch InfoNCE-anchor with K = B - 1. Row b's joint denominator is
// nu + the K scores of row b excluding column (b-1) mod B; the anchor
// denominator is nu + the B-1 off-diagonal scores. Both are evaluated in
// log space with an implicit log(nu) column.
inline LossValue loss_infonce_anchor(Tape& tape, const ScoreMatrix& s, double nu) {
  int b = s.batch;
  int k = b - 1;
  if (!(nu > 0.0) && !(nu == 0.0 && k >= 2))
    throw ConfigError("loss_infonce_anchor: need nu > 0, or nu = 0 with K >= 2");
  double log_nu = nu > 0.0 ? std::log(nu) : Tape::kNegInf;

  Tape::NodeId lse_joint = tape.log_sumexp_rows(
      {{s.log_scores, tape.constant(detail::joint_tuple_mask(b))}}, log_nu);
  Tape::NodeId joint =
      tape.sub(tape.mean_all(lse_joint), tape.mean_all(tape.diag(s.log_scores)));

  Tape::NodeId anchor = -1;
  if (nu > 0.0) {
    Tape::NodeId lse_anchor = tape.log_sumexp_rows(
        {{s.log_scores, tape.constant(detail::offdiag_mask(b))}}, log_nu);
    anchor = tape.add_scalar(tape.mean_all(lse_anchor), -log_nu);
  }
  return detail::finish_two_term(tape, joint, k / (k + nu), anchor, nu / (k + nu));
}

// Scoring-rule anchored objective (symmetric-invariant rules), with the same
// minibatch index layout as loss_infonce_anchor. k = 1 uses diagonal
// singletons as joint tuples and off-diagonal singletons as anchor tuples;
// the only other supported layout is the default k = B - 1.
inline LossValue loss_scored_anchor(Tape& tape, const ScoreMatrix& s,
                                    const GeneratingFunction& rule, double nu,
                                    int k = 0) {
  if (!rule.symmetric())
    throw ConfigError("loss_scored_anchor: rule must be symmetric-invariant");
  rule.validate();
  int b = s.batch;
  if (k == 0) k = b - 1;
  if (k != 1 && k != b - 1)
    throw ConfigError("loss_scored_anchor: minibatch layout supports K = 1 or K = B-1");
  if (!(nu > 0.0) && !(nu == 0.0 && k >= 2))
    throw ConfigError("loss_scored_anchor: need nu > 0, or nu = 0 with K >= 2");
  if (rule.kind == RuleKind::sym_inverse_log && !(nu > 0.0))
    throw ConfigError("loss_scored_anchor: sym_inverse_log needs nu > 0");

  const double a = rule.alpha;
  const double log_nu = nu > 0.0 ? std::log(nu) : Tape::kNegInf;
  const int classes = k + 1;

  Tape::NodeId lambda1 = -1, lambda0 = -1;

  if (k == b - 1) {
    Tape::NodeId jm = tape.constant(detail::joint_tuple_mask(b));
    Tape::NodeId am = tape.constant(detail::offdiag_mask(b));
    Tape::NodeId d = tape.diag(s.log_scores);
    Tape::NodeId dj = tape.log_sumexp_rows({{s.log_scores, jm}}, log_nu);
    Tape::NodeId da = nu > 0.0
                          ? tape.log_sumexp_rows({{s.log_scores, am}}, log_nu)
                          : -1;
    switch (rule.kind) {
      case RuleKind::sym_log:
        lambda1 = tape.sub(dj, d);
        if (nu > 0.0) lambda0 = tape.add_scalar(da, -log_nu);
        break;
      case RuleKind::sym_power: {
        Tape::NodeId pj = tape.log_sumexp_rows({{tape.scale(s.log_scores, a), jm}},
                                               nu > 0.0 ? a * log_nu : Tape::kNegInf);
        Tape::NodeId t1 = tape.scale(tape.exp_(tape.sub(pj, tape.scale(dj, a))), 1.0 / a);
        Tape::NodeId t2 = tape.scale(
            tape.exp_(tape.scale(tape.sub(d, dj), a - 1.0)), 1.0 / (a - 1.0));
        lambda1 = tape.sub(t1, t2);
        if (nu > 0.0) {
          Tape::NodeId pa = tape.log_sumexp_rows(
              {{tape.scale(s.log_scores, a), am}}, a * log_nu);
          Tape::NodeId u1 =
              tape.scale(tape.exp_(tape.sub(pa, tape.scale(da, a))), 1.0 / a);
          Tape::NodeId u2 = tape.scale(
              tape.exp_(tape.scale(tape.add_scalar(tape.scale(da, -1.0), log_nu), a - 1.0)),
              1.0 / (a - 1.0));
          lambda0 = tape.sub(u1, u2);
        }
        break;
      }
      case RuleKind::sym_inverse_log: {
        Tape::NodeId tj = tape.rowsum(tape.hadamard(s.log_scores, jm));
        Tape::NodeId base1 = tape.add_scalar(
            tape.sub(tj, tape.scale(dj, static_cast<double>(classes))),
            log_nu - classes);
        lambda1 = tape.add(base1, tape.exp_(tape.sub(dj, d)));
        Tape::NodeId ta = tape.rowsum(tape.hadamard(s.log_scores, am));
        Tape::NodeId base0 = tape.add_scalar(
            tape.sub(ta, tape.scale(da, static_cast<double>(classes))),
            log_nu - classes);
        lambda0 = tape.add(base0, tape.exp_(tape.add_scalar(da, -log_nu)));
        break;
      }
      case RuleKind::sym_pseudospherical: {
        double c = std::pow(static_cast<double>(classes), -1.0 / a) / (a - 1.0);
        Tape::NodeId pj = tape.log_sumexp_rows({{tape.scale(s.log_scores, a), jm}},
                                               nu > 0.0 ? a * log_nu : Tape::kNegInf);
        lambda1 = tape.scale(
            tape.exp_(tape.scale(tape.sub(d, tape.scale(pj, 1.0 / a)), a - 1.0)), -c);
        if (nu > 0.0) {
          Tape::NodeId pa = tape.log_sumexp_rows(
              {{tape.scale(s.log_scores, a), am}}, a * log_nu);
          lambda0 = tape.scale(
              tape.exp_(tape.scale(tape.add_scalar(tape.scale(pa, -1.0 / a), log_nu),
                                   a - 1.0)),
              -c);
        }
        break;
      }
      default:
        throw ContractError("loss_scored_anchor: unreachable");
    }
    Tape::NodeId joint = tape.mean_all(lambda1);
    Tape::NodeId anchor = lambda0 >= 0 ? tape.mean_all(lambda0) : -1;
    return detail::finish_two_term(tape, joint, k / (k + nu), anchor, nu / (k + nu));
  }

  // k == 1: singleton tuples, elementwise log(nu + r) composition.
  if (!(nu > 0.0)) throw ConfigError("loss_scored_anchor: K = 1 needs nu > 0");
  Tape::NodeId d = tape.diag(s.log_scores);
  Tape::NodeId off_mask = tape.constant(detail::offdiag_mask(b));
  double off_n = static_cast<double>(b) * (b - 1);
  Tape::NodeId d1 = detail::log_nu_plus_exp(tape, d, nu);             // log(nu + r_bb)
  Tape::NodeId dm = detail::log_nu_plus_exp(tape, s.log_scores, nu);  // log(nu + r_bj)
  auto p_of = [&](Tape::NodeId logs) {  // log(nu^a + r^a)
    return tape.add_scalar(
        tape.softplus(tape.add_scalar(tape.scale(logs, a), -a * log_nu)), a * log_nu);
  };
  switch (rule.kind) {
    case RuleKind::sym_log: {
      lambda1 = tape.sub(d1, d);
      lambda0 = tape.add_scalar(dm, -log_nu);
      break;
    }
    case RuleKind::sym_power: {
      Tape::NodeId p1 = p_of(d);
      lambda1 = tape.sub(
          tape.scale(tape.exp_(tape.sub(p1, tape.scale(d1, a))), 1.0 / a),
          tape.scale(tape.exp_(tape.scale(tape.sub(d, d1), a - 1.0)), 1.0 / (a - 1.0)));
      Tape::NodeId pm = p_of(s.log_scores);
      lambda0 = tape.sub(
          tape.scale(tape.exp_(tape.sub(pm, tape.scale(dm, a))), 1.0 / a),
          tape.scale(tape.exp_(tape.scale(tape.add_scalar(tape.scale(dm, -1.0), log_nu),
                                          a - 1.0)),
                     1.0 / (a - 1.0)));
      break;
    }
    case RuleKind::sym_inverse_log: {
      Tape::NodeId base1 =
          tape.add_scalar(tape.sub(d, tape.scale(d1, 2.0)), log_nu - 2.0);
      lambda1 = tape.add(base1, tape.exp_(tape.sub(d1, d)));
      Tape::NodeId base0 =
          tape.add_scalar(tape.sub(s.log_scores, tape.scale(dm, 2.0)), log_nu - 2.0);
      lambda0 = tape.add(base0, tape.exp_(tape.add_scalar(dm, -log_nu)));
      break;
    }
    case RuleKind::sym_pseudospherical: {
      double c = std::pow(2.0, -1.0 / a) / (a - 1.0);
      Tape::NodeId p1 = p_of(d);
      lambda1 = tape.scale(
          tape.exp_(tape.scale(tape.sub(d, tape.scale(p1, 1.0 / a)), a - 1.0)), -c);
      Tape::NodeId pm = p_of(s.log_scores);
      lambda0 = tape.scale(
          tape.exp_(tape.scale(tape.add_scalar(tape.scale(pm, -1.0 / a), log_nu), a - 1.0)),
          -c);
      break;
    }
    default:
      throw ContractError("loss_scored_anchor: unreachable");
  }
  Tape::NodeId joint = tape.mean_all(lambda1);
  Tape::NodeId anchor =
      tape.scale(tape.sum_all(tape.hadamard(lambda0, off_mask)), 1.0 / off_n);
  return detail::finish_two_term(tape, joint, 1.0 / (1.0 + nu), anchor, nu / (1.0 + nu));
}

// Generalized DV loss
//   -[ E_joint[log r] - (beta+1) log( beta/(beta+1) + E_marg[r]/(beta+1) ) ];
// beta = 0 is DV, beta = infinity the ratio-form NWJ bound
//   E[log r] - E[r] + 1.
inline LossValue loss_generalized_dv(Tape& tape, const ScoreMatrix& s, double beta,
                                     bool beta_infinite = false) {
  Tape::NodeId joint = tape.scale(tape.mean_all(tape.diag(s.log_scores)), -1.0);
  Tape::NodeId marg_mean = detail::offdiag_exp_mean(tape, s, 1.0, "loss_generalized_dv");
  if (beta_infinite) {
    Tape::NodeId rest = tape.add_scalar(marg_mean, -1.0);
    return detail::finish_two_term(tape, joint, 1.0, rest, 1.0);
  }
  if (beta < 0.0) throw ConfigError("loss_generalized_dv: beta must be >= 0");
  Tape::NodeId inside =
      tape.add_scalar(tape.scale(marg_mean, 1.0 / (beta + 1.0)), beta / (beta + 1.0));
  Tape::NodeId rest = tape.scale(tape.log_(inside), beta + 1.0);
  return detail::finish_two_term(tape, joint, 1.0, rest, 1.0);
}

// Binary DRE losses from asymmetric rules; independent of K and nu.
inline LossValue loss_asym_dre(Tape& tape, const ScoreMatrix& s,
                               const GeneratingFunction& rule) {
  if (rule.symmetric()) throw ConfigError("loss_asym_dre: rule must be asymmetric");
  rule.validate();
  int b = s.batch;
  double off_n = static_cast<double>(b) * (b - 1);
  Tape::NodeId off_mask = tape.constant(detail::offdiag_mask(b));
  Tape::NodeId d = tape.diag(s.log_scores);
  Tape::NodeId joint = -1, marg = -1;
  switch (rule.kind) {
    case RuleKind::asym_log:
      joint = tape.scale(tape.mean_all(d), -1.0);
      marg = detail::offdiag_exp_mean(tape, s, 1.0, "loss_asym_dre");
      break;
    case RuleKind::asym_power: {
      double a = rule.alpha;
      detail::check_exp_safe(tape.val(s.log_scores), std::abs(a - 1.0), "loss_asym_dre");
      joint = tape.scale(tape.mean_all(tape.exp_(tape.scale(d, a - 1.0))),
                         1.0 / (1.0 - a));
      marg = tape.scale(detail::offdiag_exp_mean(tape, s, a, "loss_asym_dre"), 1.0 / a);
      break;
    }
    case RuleKind::asym_inverse_log: {
      detail::check_exp_safe(Mat(-tape.val(s.log_scores)), 1.0, "loss_asym_dre");
      joint = tape.mean_all(tape.exp_(tape.scale(d, -1.0)));
      marg = tape.scale(tape.sum_all(tape.hadamard(s.log_scores, off_mask)), 1.0 / off_n);
      break;
    }
    default:
      throw ContractError("loss_asym_dre: unreachable");
  }
  return detail::finish_two_term(tape, joint, 1.0, marg, 1.0);
}

// Anchored objective over (x, y) pairs contrasting p(x,y) against
// p(x)p(y): joint pair scores come from the diagonal and product pair
// scores from the cyclic shift y_{b+1}.
inline LossValue loss_joint_marginal_anchor(Tape& tape, const ScoreMatrix& s,
                                            double nu, int k = 0) {
  int b = s.batch;
  if (k == 0) k = b - 1;
  if (k != 1 && k != b - 1)
    throw ConfigError("loss_joint_marginal_anchor: supports K = 1 or K = B-1");
  if (!(nu > 0.0) && !(nu == 0.0 && k >= 2))
    throw ConfigError("loss_joint_marginal_anchor: need nu > 0, or nu = 0 with K >= 2");
  double log_nu = nu > 0.0 ? std::log(nu) : Tape::kNegInf;
  Tape::NodeId s_joint = tape.diag(s.log_scores);
  Tape::NodeId s_prod = tape.cyclic_diag(s.log_scores, 1);

  if (k == 1) {
    if (!(nu > 0.0))
      throw ConfigError("loss_joint_marginal_anchor: K = 1 needs nu > 0");
    Tape::NodeId joint = tape.mean_all(
        tape.sub(detail::log_nu_plus_exp(tape, s_joint, nu), s_joint));
    Tape::NodeId anchor = tape.add_scalar(
        tape.mean_all(detail::log_nu_plus_exp(tape, s_prod, nu)), -log_nu);
    return detail::finish_two_term(tape, joint, 1.0 / (1.0 + nu), anchor,
                                   nu / (1.0 + nu));
  }

  // Tile the product scores so row b sees s_prod[j] in column j.
  Tape::NodeId tiled =
      tape.matmul(tape.constant(Mat::Ones(b, 1)), tape.reshape(s_prod, 1, b));
  Mat jm = Mat::Ones(b, b);
  for (int r = 0; r < b; ++r) {
    jm(r, r) = 0.0;
    jm(r, (r - 1 + b) % b) = 0.0;
  }
  Tape::NodeId lse_joint = tape.log_sumexp_rows(
      {{tiled, tape.constant(std::move(jm))}, {s_joint, -1}}, log_nu);
  Tape::NodeId joint = tape.sub(tape.mean_all(lse_joint), tape.mean_all(s_joint));

  Tape::NodeId anchor = -1;
  if (nu > 0.0) {
    Tape::NodeId lse_anchor = tape.log_sumexp_rows(
        {{tiled, tape.constant(detail::offdiag_mask(b))}}, log_nu);
    anchor = tape.add_scalar(tape.mean_all(lse_anchor), -log_nu);
  }
  return detail::finish_two_term(tape, joint, k / (k + nu), anchor, nu / (k + nu));
}

// ---- Evaluation-side helpers (no tape) -------------------------------

inline double eval_dv_nats(const Mat& logS) {
  int b = static_cast<int>(logS.rows());
  double diag_mean = logS.diagonal().mean();
  double mx = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      if (i != j) mx = std::max(mx, logS(i, j));
  double sum = 0.0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      if (i != j) sum += std::exp(logS(i, j) - mx);
  double log_mean = mx + std::log(sum / (static_cast<double>(b) * (b - 1)));
  return diag_mean - log_mean;  // the DV estimate -L_DV
}

inline double eval_clipped_dv_nats(const Mat& logS, double tau_clip) {
  if (!std::isfinite(tau_clip)) return eval_dv_nats(logS);
  Mat clipped = logS.cwiseMax(-tau_clip).cwiseMin(tau_clip);
  return eval_dv_nats(clipped);
}

inline double eval_nwj_nats(const Mat& logS) {
  int b = static_cast<int>(logS.rows());
  detail::check_exp_safe(logS, 1.0, "eval_nwj");
  double diag_mean = logS.diagonal().mean();
  double sum = 0.0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      if (i != j) sum += std::exp(logS(i, j) - 1.0);
  return diag_mean - sum / (static_cast<double>(b) * (b - 1));
}

inline double eval_infonce_nats(const Mat& logS) {
  int b = static_cast<int>(logS.rows());
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    double mx = logS.row(i).maxCoeff();
    double lse = mx + std::log((logS.row(i).array() - mx).exp().sum());
    total += logS(i, i) - (lse - std::log(static_cast<double>(b)));
  }
  return total / b;
}

// Plug-in estimate: mean of the diagonal log-scores, in nats.
inline double plug_in_mi_nats(const Mat& logS) { return logS.diagonal().mean(); }

// Whether a family's population optimum is the density ratio itself, making
// the plug-in estimator unbiased at the optimum.
inline bool fisher_consistent(const ObjectiveSpec& spec) {
  switch (spec.family) {
    case Family::js:
    case Family::asym_dre:
      return true;
    case Family::smile:
      return true;  // trains with the JS loss
    case Family::infonce_anchor:
    case Family::scored_anchor:
    case Family::joint_marginal_anchor:
      return spec.nu > 0.0;
    case Family::generalized_dv:
      return spec.beta_infinite || spec.beta > 0.0;
    default:
      return false;
  }
}

}  // namespace anchormi
