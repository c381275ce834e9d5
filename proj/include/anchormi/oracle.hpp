#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/matrix.hpp"
#include "anchormi/scoring.hpp"

namespace anchormi {

constexpr double kEnumerationBudget = 1e7;

// Finite-alphabet contrast (q1, q0). q0 must be positive wherever q1 is, so
// the ratio q1/q0 exists.
struct DiscretePair {
  Vec q1, q0;

  void validate() const {
    if (q1.size() < 2 || q1.size() != q0.size())
      throw DomainError("DiscretePair: need matching alphabets with >= 2 symbols");
    if ((q1.array() < 0.0).any() || (q0.array() < 0.0).any())
      throw DomainError("DiscretePair: negative probability");
    if (std::abs(q1.sum() - 1.0) > 1e-12 || std::abs(q0.sum() - 1.0) > 1e-12)
      throw DomainError("DiscretePair: probabilities must sum to 1");
    for (Eigen::Index i = 0; i < q1.size(); ++i)
      if (q1(i) > 0.0 && q0(i) == 0.0)
        throw DomainError("DiscretePair: q1 not absolutely continuous w.r.t. q0");
  }

  int alphabet() const { return static_cast<int>(q1.size()); }

  Vec ratio() const {
    Vec r(q1.size());
    for (Eigen::Index i = 0; i < q1.size(); ++i)
      r(i) = q0(i) > 0.0 ? q1(i) / q0(i) : 0.0;
    return r;
  }
};

struct TabularCritic {
  Vec r;

  void validate() const {
    if (!(r.array() > 0.0).all() || !r.allFinite())
      throw DomainError("TabularCritic: entries must be strictly positive and finite");
  }
};

// Posterior of the (K+1)-way classification: p(z=0) = nu / (nu + sum r),
// p(z=i) = r_i / (nu + sum r).
inline Vec exact_posterior(const Vec& ratios, double nu) {
  if ((ratios.array() < 0.0).any() || nu < 0.0)
    throw DomainError("exact_posterior: ratios and nu must be nonnegative");
  double denom = nu + ratios.sum();
  if (!(denom > 0.0)) throw DomainError("exact_posterior: nu and ratios all zero");
  Vec eta(ratios.size() + 1);
  eta(0) = nu / denom;
  eta.tail(ratios.size()) = ratios / denom;
  return eta;
}

inline double exact_kl_bits(const DiscretePair& pair) {
  pair.validate();
  double kl = 0.0;
  for (Eigen::Index i = 0; i < pair.q1.size(); ++i)
    if (pair.q1(i) > 0.0) kl += pair.q1(i) * std::log2(pair.q1(i) / pair.q0(i));
  return kl;
}

inline double exact_chi2(const DiscretePair& pair) {
  pair.validate();
  double c = 0.0;
  for (Eigen::Index i = 0; i < pair.q1.size(); ++i)
    if (pair.q1(i) > 0.0) c += pair.q1(i) * pair.q1(i) / pair.q0(i);
  return c - 1.0;
}

// min{ log2 K, D - log2( (2^D - 1)/K + 1 ) } -- the sharp cap on what the
// K-negative contrastive objective can reach given the KL divergence D.
inline double theorem1_bound_bits(double kl_bits, int K) {
  if (kl_bits < 0.0) throw DomainError("theorem1_bound: kl_bits must be >= 0");
  if (K < 1) throw DomainError("theorem1_bound: K must be >= 1");
  double second =
      kl_bits - std::log2((std::pow(2.0, kl_bits) - 1.0) / K + 1.0);
  return std::min(std::log2(static_cast<double>(K)), second);
}

namespace detail {

inline void check_budget(double terms, const char* what) {
  if (terms > kEnumerationBudget)
    throw BudgetError(std::string(what) + ": enumeration over " +
                      std::to_string(static_cast<long long>(terms)) +
                      " terms exceeds the 1e7 budget");
}

template <class F>
void for_each_tuple(int alphabet, int k, F&& body) {
  std::vector<int> idx(k, 0);
  while (true) {
    body(idx);
    int pos = k - 1;
    while (pos >= 0) {
      if (++idx[pos] < alphabet) break;
      idx[pos] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

}  // namespace detail

// Exact K-way mixture divergence via the single-class expectation
//   E_{q1 x q0^(K-1)} log2( r*(x_1) / ((1/K) sum_z r*(x_z)) );
// the K class terms are equal by exchangeability.
inline double exact_kjsd_bits(const DiscretePair& pair, int k) {
  pair.validate();
  if (k < 1) throw DomainError("exact_kjsd: K must be >= 1");
  if (k == 1) return 0.0;  // a single mixture component
  int a = pair.alphabet();
  detail::check_budget(static_cast<double>(k) * std::pow(a, k), "exact_kjsd");
  Vec ratio = pair.ratio();
  double total = 0.0;
  detail::for_each_tuple(a, k, [&](const std::vector<int>& idx) {
    double w = pair.q1(idx[0]);
    if (w == 0.0) return;
    double mean_r = 0.0;
    for (int i = 1; i < k; ++i) w *= pair.q0(idx[i]);
    if (w == 0.0) return;
    for (int i = 0; i < k; ++i) mean_r += ratio(idx[i]);
    mean_r /= k;
    total += w * std::log2(ratio(idx[0]) / mean_r);
  });
  return total;
}

// The same divergence through its mixture-KL definition
//   (1/K) sum_z D( p(.|z) || (1/K) sum_z' p(.|z') );
// agrees with exact_kjsd_bits to enumeration precision.
inline double exact_kjsd_bits_mixture(const DiscretePair& pair, int k) {
  pair.validate();
  if (k < 1) throw DomainError("exact_kjsd: K must be >= 1");
  if (k == 1) return 0.0;
  int a = pair.alphabet();
  detail::check_budget(static_cast<double>(k) * std::pow(a, k),
                       "exact_kjsd_mixture");
  double total = 0.0;
  detail::for_each_tuple(a, k, [&](const std::vector<int>& idx) {
    double q0_prod = 1.0;
    for (int i = 0; i < k; ++i) q0_prod *= pair.q0(idx[i]);
    // p(x|z) = q0_prod * ratio(x_z); the mixture averages over z.
    double mix = 0.0;
    std::vector<double> pz(k);
    for (int z = 0; z < k; ++z) {
      double r = pair.q0(idx[z]) > 0.0 ? pair.q1(idx[z]) / pair.q0(idx[z]) : 0.0;
      pz[z] = q0_prod * r;
      mix += pz[z];
    }
    mix /= k;
    for (int z = 0; z < k; ++z)
      if (pz[z] > 0.0) total += pz[z] * std::log2(pz[z] / mix) / k;
  });
  return total;
}

// Population contrastive objective at an arbitrary tabular critic,
//   E_{q1 x q0^(K-1)} log2( r(x_1) / ((1/K) sum_z r(x_z)) ),
// the quantity Theorem-1-bounded by the K-way divergence.
inline double exact_infonce_objective_bits(const DiscretePair& pair, int k,
                                           const TabularCritic& critic) {
  pair.validate();
  critic.validate();
  if (k < 1) throw DomainError("exact_infonce_objective: K must be >= 1");
  int a = pair.alphabet();
  detail::check_budget(std::pow(a, k), "exact_infonce_objective");
  double total = 0.0;
  detail::for_each_tuple(a, k, [&](const std::vector<int>& idx) {
    double w = pair.q1(idx[0]);
    for (int i = 1; i < k; ++i) w *= pair.q0(idx[i]);
    if (w == 0.0) return;
    double mean_r = 0.0;
    for (int i = 0; i < k; ++i) mean_r += critic.r(idx[i]);
    mean_r /= k;
    total += w * std::log2(critic.r(idx[0]) / mean_r);
  });
  return total;
}

namespace detail {

// Loss vector of the anchored classification at one tuple. Symmetric rules
// use the simplex closed form (defined at the nu = 0 boundary); asymmetric
// rules go through the ratio route and need nu > 0.
inline Vec tuple_lambda(const GeneratingFunction& rule, const Vec& eta) {
  if (rule.symmetric()) return induced_loss_phi(rule, eta);
  SimplexPoint p{eta};
  return induced_loss(rule, p);
}

}  // namespace detail

// Exact population loss E_{p(z) p(x|z)}[ lambda_z(eta_theta(x)) ] in nats.
inline double exact_population_loss_nats(const DiscretePair& pair, int k, double nu,
                                         const TabularCritic& critic,
                                         const GeneratingFunction& rule) {
  pair.validate();
  critic.validate();
  rule.validate();
  if (k < 1) throw DomainError("exact_population_loss: K must be >= 1");
  if (nu < 0.0) throw DomainError("exact_population_loss: nu must be >= 0");
  if (nu == 0.0 && k < 2)
    throw DomainError("exact_population_loss: nu = 0 needs K >= 2");
  if (nu == 0.0) {
    bool face_ok = rule.kind == RuleKind::sym_log ||
                   (rule.kind == RuleKind::sym_power && rule.alpha > 1.0) ||
                   (rule.kind == RuleKind::sym_pseudospherical && rule.alpha > 1.0);
    if (!face_ok)
      throw DomainError(
          "exact_population_loss: nu = 0 needs a rule defined at eta_0 = 0 "
          "(sym_log, sym_power/sym_pseudospherical with alpha > 1)");
  }
  int a = pair.alphabet();
  detail::check_budget(static_cast<double>(k + 1) * std::pow(a, k),
                       "exact_population_loss");
  Vec ratio = pair.ratio();
  double total = 0.0;
  detail::for_each_tuple(a, k, [&](const std::vector<int>& idx) {
    double w0 = 1.0;
    for (int i = 0; i < k; ++i) w0 *= pair.q0(idx[i]);
    if (w0 == 0.0) return;
    Vec r(k);
    for (int i = 0; i < k; ++i) r(i) = critic.r(idx[i]);
    Vec eta = exact_posterior(r, nu);
    Vec lambda = detail::tuple_lambda(rule, eta);
    double acc = nu > 0.0 ? nu * lambda(0) : 0.0;
    for (int z = 0; z < k; ++z) acc += ratio(idx[z]) * lambda(z + 1);
    total += w0 * acc / (k + nu);
  });
  return total;
}

// Gradient of the exact population loss w.r.t. u_a = log r_a. At nu = 0 the
// posterior lives on the eta_0 = 0 face, where d eta_0 = 0 exactly; the
// index-0 row and column are excluded there so boundary Hessian blowups
// never multiply in.
inline Vec exact_population_loss_grad(const DiscretePair& pair, int k, double nu,
                                      const TabularCritic& critic,
                                      const GeneratingFunction& rule) {
  pair.validate();
  critic.validate();
  if (!rule.symmetric())
    throw ContractError("population gradient implemented for symmetric rules");
  int a = pair.alphabet();
  detail::check_budget(static_cast<double>(k + 1) * std::pow(a, k),
                       "exact_population_loss_grad");
  const int w0class = nu > 0.0 ? 0 : 1;
  Vec ratio = pair.ratio();
  Vec grad = Vec::Zero(a);
  detail::for_each_tuple(a, k, [&](const std::vector<int>& idx) {
    double w0 = 1.0;
    for (int i = 0; i < k; ++i) w0 *= pair.q0(idx[i]);
    if (w0 == 0.0) return;
    Vec r(k);
    for (int i = 0; i < k; ++i) r(i) = critic.r(idx[i]);
    double denom = nu + r.sum();
    Vec eta = exact_posterior(r, nu);
    Mat hess = phi_hess(rule, eta);
    Vec heta = Vec::Zero(k + 1);
    for (int w = w0class; w <= k; ++w)
      for (int v = w0class; v <= k; ++v) heta(w) += hess(w, v) * eta(v);
    // Class weights at this tuple: p(z) p(x|z) / w0.
    Vec cw(k + 1);
    cw(0) = nu;
    for (int z = 0; z < k; ++z) cw(z + 1) = ratio(idx[z]);
    cw /= (k + nu);
    std::vector<int> count(a, 0);
    for (int i = 0; i < k; ++i) count[idx[i]] += 1;
    for (int sym = 0; sym < a; ++sym) {
      if (count[sym] == 0) continue;
      Vec deta(k + 1);
      deta(0) = -eta(0) * count[sym] / denom;
      for (int i = 0; i < k; ++i)
        deta(i + 1) = ((idx[i] == sym ? 1.0 : 0.0) - eta(i + 1) * count[sym]) / denom;
      double acc = 0.0;
      for (int z = w0class; z <= k; ++z) {
        if (cw(z) == 0.0) continue;
        // d lambda_z / d eta_w = (H eta)_w - H_{z,w}
        double dz = 0.0;
        for (int w = w0class; w <= k; ++w) dz += (heta(w) - hess(z, w)) * deta(w);
        acc += cw(z) * dz;
      }
      grad(sym) += w0 * acc * critic.r(sym);  // chain through r = e^u
    }
  });
  return grad;
}

// Monte-Carlo estimate of the population loss with its standard error.
inline double mc_population_loss_nats(const DiscretePair& pair, int k, double nu,
                                      const TabularCritic& critic,
                                      const GeneratingFunction& rule,
                                      int n_samples, std::uint64_t seed,
                                      double* standard_error = nullptr) {
  pair.validate();
  critic.validate();
  std::mt19937_64 rng(seed);
  int a = pair.alphabet();
  std::discrete_distribution<int> d1(pair.q1.data(), pair.q1.data() + a);
  std::discrete_distribution<int> d0(pair.q0.data(), pair.q0.data() + a);
  double p0 = nu / (k + nu);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> which(1, k);
  double sum = 0.0, sum2 = 0.0;
  for (int s = 0; s < n_samples; ++s) {
    int z = unif(rng) < p0 ? 0 : which(rng);
    Vec r(k);
    for (int i = 0; i < k; ++i) {
      int sym = (z == i + 1) ? d1(rng) : d0(rng);
      r(i) = critic.r(sym);
    }
    Vec eta = exact_posterior(r, nu);
    double lz = detail::tuple_lambda(rule, eta)(z);
    sum += lz;
    sum2 += lz * lz;
  }
  double mean = sum / n_samples;
  if (standard_error) {
    double var = std::max(0.0, sum2 / n_samples - mean * mean);
    *standard_error = std::sqrt(var / n_samples);
  }
  return mean;
}

namespace detail {

// Binary DRE objectives of the asymmetric rules (the anchored form reduces
// to these up to affine constants): value and d/du with u = log r.
inline double asym_binary_loss(const GeneratingFunction& rule,
                               const DiscretePair& pair, const Vec& r, Vec* grad_u) {
  const double a = rule.alpha;
  double loss = 0.0;
  if (grad_u) grad_u->setZero();
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    double q1 = pair.q1(i), q0 = pair.q0(i), ri = r(i);
    double l = 0.0, du = 0.0;
    switch (rule.kind) {
      case RuleKind::asym_log:
        l = -q1 * std::log(ri) + q0 * ri;
        du = -q1 + q0 * ri;
        break;
      case RuleKind::asym_power:
        l = q1 * std::pow(ri, a - 1.0) / (1.0 - a) + q0 * std::pow(ri, a) / a;
        du = -q1 * std::pow(ri, a - 1.0) + q0 * std::pow(ri, a);
        break;
      case RuleKind::asym_inverse_log:
        l = q1 / ri + q0 * std::log(ri);
        du = -q1 / ri + q0;
        break;
      default:
        throw ContractError("asym_binary_loss: symmetric rule");
    }
    loss += l;
    if (grad_u) (*grad_u)(i) += du;
  }
  return loss;
}

}  // namespace detail

struct BruteForceResult {
  TabularCritic critic;
  double loss_nats = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
};

// Full-gradient descent on log r with backtracking line search and three
// restarts (zero and two seeded random starts); keeps the lowest-loss
// solution. Positivity holds by construction.
inline BruteForceResult brute_force_optimum(const DiscretePair& pair, int k,
                                            double nu,
                                            const GeneratingFunction& rule,
                                            std::uint64_t seed = 0) {
  pair.validate();
  rule.validate();
  int a = pair.alphabet();
  constexpr int kMaxIters = 100000;
  constexpr double kGradTol = 1e-10;

  auto loss_of = [&](const Vec& u, Vec* grad) {
    Vec r = u.array().exp().matrix();
    if (rule.symmetric()) {
      TabularCritic c{r};
      double l = exact_population_loss_nats(pair, k, nu, c, rule);
      if (grad) *grad = exact_population_loss_grad(pair, k, nu, c, rule);
      return l;
    }
    Vec g(a);
    double l = detail::asym_binary_loss(rule, pair, r, grad ? &g : nullptr);
    if (grad) *grad = g;
    return l;
  };

  BruteForceResult best;
  best.loss_nats = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(mix_seed(seed, 0xB0F0));
  std::normal_distribution<double> nd(0.0, 1.0);

  for (int restart = 0; restart < 3; ++restart) {
    Vec u = Vec::Zero(a);
    if (restart > 0)
      for (int i = 0; i < a; ++i) u(i) = 0.5 * nd(rng);
    Vec g(a);
    double l = loss_of(u, &g);
    Vec u_prev = u, g_prev = g;
    double step = 1.0;
    int iter = 0;
    for (; iter < kMaxIters; ++iter) {
      double gn = g.norm();
      if (gn < kGradTol) break;
      // Barzilai-Borwein step length, clamped and Armijo-safeguarded.
      if (iter > 0) {
        Vec du = u - u_prev, dg = g - g_prev;
        double dgg = dg.squaredNorm();
        if (dgg > 0.0) {
          double bb = std::abs(du.dot(dg)) / dgg;
          if (std::isfinite(bb) && bb > 0.0)
            step = std::min(std::max(bb, 1e-12), 1e6);
        }
      }
      u_prev = u;
      g_prev = g;
      bool moved = false;
      double t = step;
      while (t >= 1e-18) {
        Vec u_try = u - t * g;
        double l_try = loss_of(u_try, nullptr);
        if (l_try <= l - 1e-4 * t * gn * gn) {
          u = u_try;
          l = l_try;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) break;
      l = loss_of(u, &g);
    }
    double gn = g.norm();
    if (l < best.loss_nats) {
      best.critic.r = u.array().exp().matrix();
      best.loss_nats = l;
      best.grad_norm = gn;
      best.iterations = iter;
    }
  }
  return best;
}

// Flattens a joint table p(x, y) into the (q1, q0) = (joint, product of
// marginals) contrast whose ratio is the pointwise dependence.
inline DiscretePair pointwise_dependence_pair(const Mat& joint) {
  if ((joint.array() < 0.0).any() || std::abs(joint.sum() - 1.0) > 1e-12)
    throw DomainError("pointwise_dependence_pair: invalid joint table");
  Vec px = joint.rowwise().sum();
  Vec py = joint.colwise().sum();
  DiscretePair pair;
  pair.q1.resize(joint.size());
  pair.q0.resize(joint.size());
  int idx = 0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i)
    for (Eigen::Index j = 0; j < joint.cols(); ++j, ++idx) {
      pair.q1(idx) = joint(i, j);
      pair.q0(idx) = px(i) * py(j);
    }
  // Normalize away accumulated rounding so validate()'s 1e-12 gate holds.
  pair.q1 /= pair.q1.sum();
  pair.q0 /= pair.q0.sum();
  pair.validate();
  return pair;
}

}  // namespace anchormi
