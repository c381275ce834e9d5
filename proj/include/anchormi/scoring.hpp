#pragma once

#include <cmath>
#include <string>
#include <utility>

#include "anchormi/errors.hpp"
#include "anchormi/matrix.hpp"

namespace anchormi {

// Strictly convex generating functions. Asymmetric kinds act coordinatewise
// on ratio vectors rho with rho_0 fixed to 1; symmetric kinds are convex
// functions Phi on the probability simplex, lifted to ratio space by the
// perspective transform.
enum class RuleKind {
  asym_log,
  asym_power,
  asym_inverse_log,
  sym_log,
  sym_power,
  sym_inverse_log,
  sym_pseudospherical,
};

struct GeneratingFunction {
  RuleKind kind = RuleKind::sym_log;
  double alpha = 2.0;

  bool symmetric() const {
    return kind == RuleKind::sym_log || kind == RuleKind::sym_power ||
           kind == RuleKind::sym_inverse_log ||
           kind == RuleKind::sym_pseudospherical;
  }

  bool uses_alpha() const {
    return kind == RuleKind::asym_power || kind == RuleKind::sym_power ||
           kind == RuleKind::sym_pseudospherical;
  }

  void validate() const {
    if (uses_alpha() && (alpha == 0.0 || alpha == 1.0))
      throw ConfigError("generating function: alpha must avoid {0, 1}");
  }
};

inline GeneratingFunction rule_from_name(const std::string& name, double alpha) {
  GeneratingFunction g;
  g.alpha = alpha;
  if (name == "asym_log") g.kind = RuleKind::asym_log;
  else if (name == "asym_power") g.kind = RuleKind::asym_power;
  else if (name == "asym_inverse_log") g.kind = RuleKind::asym_inverse_log;
  else if (name == "sym_log") g.kind = RuleKind::sym_log;
  else if (name == "sym_power") g.kind = RuleKind::sym_power;
  else if (name == "sym_inverse_log") g.kind = RuleKind::sym_inverse_log;
  else if (name == "sym_pseudospherical") g.kind = RuleKind::sym_pseudospherical;
  else throw ConfigError("unknown scoring rule '" + name + "'");
  g.validate();
  return g;
}

inline std::string rule_name(const GeneratingFunction& g) {
  switch (g.kind) {
    case RuleKind::asym_log: return "asym_log";
    case RuleKind::asym_power: return "asym_power";
    case RuleKind::asym_inverse_log: return "asym_inverse_log";
    case RuleKind::sym_log: return "sym_log";
    case RuleKind::sym_power: return "sym_power";
    case RuleKind::sym_inverse_log: return "sym_inverse_log";
    case RuleKind::sym_pseudospherical: return "sym_pseudospherical";
  }
  return "?";
}

// Class-probability vector eta over {0, .., M}; entries >= 0 and summing to
// one within 1e-12.
struct SimplexPoint {
  Vec eta;

  void validate() const {
    if (eta.size() < 2) throw DomainError("SimplexPoint: need at least 2 classes");
    if ((eta.array() < 0.0).any()) throw DomainError("SimplexPoint: negative entry");
    if (std::abs(eta.sum() - 1.0) > 1e-12)
      throw DomainError("SimplexPoint: entries do not sum to 1");
  }

  bool interior() const { return (eta.array() > 0.0).all(); }
};

// Ratio vector rho = (1, tail); tail entries are eta_z / eta_0.
struct RatioVector {
  Vec tail;

  void check_interior() const {
    if (tail.size() < 1) throw DomainError("RatioVector: empty tail");
    if (!((tail.array() > 0.0).all()) || !tail.allFinite())
      throw DomainError("RatioVector: tail must be strictly positive and finite");
  }
};

inline RatioVector ratio_from_simplex(const SimplexPoint& p) {
  p.validate();
  if (!(p.eta(0) > 0.0)) throw DomainError("ratio_from_simplex: eta_0 = 0");
  RatioVector r;
  r.tail = p.eta.tail(p.eta.size() - 1) / p.eta(0);
  return r;
}

namespace detail {

// Scalar psi for the asymmetric kinds (rho > 0).
inline double psi1(const GeneratingFunction& g, double rho) {
  switch (g.kind) {
    case RuleKind::asym_log: return rho * std::log(rho);
    case RuleKind::asym_power:
      return std::pow(rho, g.alpha) / (g.alpha * (g.alpha - 1.0));
    case RuleKind::asym_inverse_log: return -std::log(rho);
    default: throw ContractError("psi1: symmetric rule");
  }
}

inline double psi1_d(const GeneratingFunction& g, double rho) {
  switch (g.kind) {
    case RuleKind::asym_log: return std::log(rho) + 1.0;
    case RuleKind::asym_power: return std::pow(rho, g.alpha - 1.0) / (g.alpha - 1.0);
    case RuleKind::asym_inverse_log: return -1.0 / rho;
    default: throw ContractError("psi1_d: symmetric rule");
  }
}

}  // namespace detail

// Phi, grad Phi, Hessian Phi at an interior simplex point (symmetric kinds).
inline double phi_value(const GeneratingFunction& g, const Vec& eta) {
  const double a = g.alpha;
  switch (g.kind) {
    case RuleKind::sym_log: {
      // 0 log 0 = 0, so the value extends to the simplex boundary.
      double s = 0.0;
      for (Eigen::Index z = 0; z < eta.size(); ++z)
        if (eta(z) > 0.0) s += eta(z) * std::log(eta(z));
      return s;
    }
    case RuleKind::sym_power:
      return eta.array().pow(a).sum() / (a * (a - 1.0));
    case RuleKind::sym_inverse_log:
      return -eta.array().log().sum();
    case RuleKind::sym_pseudospherical: {
      double c = std::pow(static_cast<double>(eta.size()), -1.0 / a);
      double norm = std::pow(eta.array().pow(a).sum(), 1.0 / a);
      return c / (a - 1.0) * norm;
    }
    default:
      throw ContractError("phi_value: asymmetric rule");
  }
}

inline Vec phi_grad(const GeneratingFunction& g, const Vec& eta) {
  const double a = g.alpha;
  switch (g.kind) {
    case RuleKind::sym_log:
      return (eta.array().log() + 1.0).matrix();
    case RuleKind::sym_power:
      return (eta.array().pow(a - 1.0) / (a - 1.0)).matrix();
    case RuleKind::sym_inverse_log:
      return (-eta.array().inverse()).matrix();
    case RuleKind::sym_pseudospherical: {
      double c = std::pow(static_cast<double>(eta.size()), -1.0 / a);
      double norm = std::pow(eta.array().pow(a).sum(), 1.0 / a);
      return (c / (a - 1.0) * eta.array().pow(a - 1.0) * std::pow(norm, 1.0 - a))
          .matrix();
    }
    default:
      throw ContractError("phi_grad: asymmetric rule");
  }
}

inline Mat phi_hess(const GeneratingFunction& g, const Vec& eta) {
  const double a = g.alpha;
  const Eigen::Index m = eta.size();
  switch (g.kind) {
    case RuleKind::sym_log:
      return Mat(eta.array().inverse().matrix().asDiagonal());
    case RuleKind::sym_power:
      return Mat(eta.array().pow(a - 2.0).matrix().asDiagonal());
    case RuleKind::sym_inverse_log:
      return Mat(eta.array().square().inverse().matrix().asDiagonal());
    case RuleKind::sym_pseudospherical: {
      double c = std::pow(static_cast<double>(m), -1.0 / a);
      double norm = std::pow(eta.array().pow(a).sum(), 1.0 / a);
      Vec p = eta.array().pow(a - 1.0).matrix();
      Mat h = Mat(
          (c * std::pow(norm, 1.0 - a) * eta.array().pow(a - 2.0)).matrix().asDiagonal());
      h.noalias() -= c * std::pow(norm, 1.0 - 2.0 * a) * p * p.transpose();
      return h;
    }
    default:
      throw ContractError("phi_hess: asymmetric rule");
  }
}

// Perspective lift of a symmetric Phi to ratio space:
//   Psi_Phi(rho) = (1 + sum tail) * Phi((1, tail) / (1 + sum tail)),
// with gradient taken in the tail coordinates.
inline std::pair<double, Vec> phi_to_psi(const GeneratingFunction& g,
                                         const RatioVector& rho) {
  if (!g.symmetric()) throw ContractError("phi_to_psi: asymmetric rule");
  rho.check_interior();
  const Eigen::Index m = rho.tail.size();
  double s = 1.0 + rho.tail.sum();
  Vec eta(m + 1);
  eta(0) = 1.0 / s;
  eta.tail(m) = rho.tail / s;
  double value = s * phi_value(g, eta);
  Vec grad_phi = phi_grad(g, eta);
  double inner = eta.dot(grad_phi);
  double phi = phi_value(g, eta);
  Vec grad(m);
  for (Eigen::Index j = 0; j < m; ++j)
    grad(j) = phi + grad_phi(j + 1) - inner;
  return {value, grad};
}

// Psi value and tail gradient at rho = (1, tail). Asymmetric kinds act
// coordinatewise; symmetric kinds go through the perspective transform.
inline std::pair<double, Vec> psi_value_grad(const GeneratingFunction& g,
                                             const RatioVector& rho) {
  g.validate();
  if (g.symmetric()) return phi_to_psi(g, rho);
  rho.check_interior();
  double value = 0.0;
  Vec grad(rho.tail.size());
  for (Eigen::Index j = 0; j < rho.tail.size(); ++j) {
    value += detail::psi1(g, rho.tail(j));
    grad(j) = detail::psi1_d(g, rho.tail(j));
  }
  return {value, grad};
}

// Loss vector induced by Psi:
//   lambda_0 = <rho, grad Psi> - Psi,  lambda_z = -(grad Psi)_z,
// evaluated at rho = (1, eta_1/eta_0, ..., eta_M/eta_0).
inline Vec induced_loss(const GeneratingFunction& g, const SimplexPoint& p) {
  RatioVector rho = ratio_from_simplex(p);
  auto [value, grad] = psi_value_grad(g, rho);
  Vec lambda(p.eta.size());
  lambda(0) = rho.tail.dot(grad) - value;
  for (Eigen::Index z = 1; z < p.eta.size(); ++z) lambda(z) = -grad(z - 1);
  return lambda;
}

// Closed form for symmetric rules:
//   lambda(eta) = (<eta, grad Phi> - Phi) 1 - grad Phi.
// Unlike the ratio route this stays defined when eta_0 = 0 (needed by the
// anchors-off case), provided the rule itself tolerates the boundary.
inline Vec induced_loss_phi(const GeneratingFunction& g, const Vec& eta) {
  if (!g.symmetric()) throw ContractError("induced_loss_phi: asymmetric rule");
  double phi = phi_value(g, eta);
  Vec grad = phi_grad(g, eta);
  // Zero-probability coordinates contribute nothing to <eta, grad Phi>;
  // skipping them keeps the face eta_z = 0 well defined where the rule
  // itself extends there (their own lambda entries may still be infinite).
  double inner = 0.0;
  for (Eigen::Index z = 0; z < eta.size(); ++z)
    if (eta(z) > 0.0) inner += eta(z) * grad(z);
  double common = inner - phi;
  return (Vec::Constant(eta.size(), common) - grad).eval();
}

// Ambient Jacobian d lambda_z / d eta_w of the symmetric closed form. Rows
// index z, columns w. Valid for chain rules along simplex-tangent
// directions.
inline Mat induced_loss_phi_jacobian(const GeneratingFunction& g, const Vec& eta) {
  Mat h = phi_hess(g, eta);
  Vec heta = h * eta;
  Mat jac(eta.size(), eta.size());
  for (Eigen::Index z = 0; z < eta.size(); ++z)
    for (Eigen::Index w = 0; w < eta.size(); ++w)
      jac(z, w) = heta(w) - h(z, w);
  return jac;
}

// B_Psi(u, v) = Psi(u) - Psi(v) - <grad Psi(v), u - v> over tail vectors.
inline double bregman(const GeneratingFunction& g, const RatioVector& u,
                      const RatioVector& v) {
  if (u.tail.size() != v.tail.size())
    throw DimensionError("bregman: length mismatch");
  auto [pu, gu] = psi_value_grad(g, u);
  auto [pv, gv] = psi_value_grad(g, v);
  (void)gu;
  return pu - pv - gv.dot(u.tail - v.tail);
}

}  // namespace anchormi
