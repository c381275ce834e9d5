#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "anchormi/critics.hpp"
#include "anchormi/objectives.hpp"
#include "anchormi/oracle.hpp"
#include "anchormi/optimizer.hpp"

using namespace anchormi;

namespace {

ScoreMatrix matrix_of(Tape& tape, const Mat& log_scores) {
  return ScoreMatrix{static_cast<int>(log_scores.rows()),
                     tape.constant(log_scores)};
}

Mat random_log_scores(int b, std::mt19937_64& rng, double scale = 2.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(b, b);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = u(rng);
  return m;
}

}  // namespace

TEST_CASE("dv loss vanishes on constant scores") {
  Tape tape;
  ScoreMatrix ones = matrix_of(tape, Mat::Zero(4, 4));
  CHECK(loss_dv(tape, ones).value == Catch::Approx(0.0).margin(1e-14));
  Tape tape2;
  ScoreMatrix c = matrix_of(tape2, Mat::Constant(4, 4, 1.7));
  CHECK(loss_dv(tape2, c).value == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("dv tape loss equals the evaluation helper") {
  std::mt19937_64 rng(1);
  Mat s = random_log_scores(6, rng);
  Tape tape;
  CHECK(loss_dv(tape, matrix_of(tape, s)).value ==
        Catch::Approx(-eval_dv_nats(s)).margin(1e-12));
}

TEST_CASE("nwj loss at the constant-e score is zero") {
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Ones(4, 4));  // log score 1, score e
  CHECK(loss_nwj(tape, s).value == Catch::Approx(0.0).margin(1e-13));
}

TEST_CASE("nwj is not shift invariant") {
  std::mt19937_64 rng(2);
  Mat s = random_log_scores(5, rng);
  Tape t1, t2;
  double l1 = loss_nwj(t1, matrix_of(t1, s)).value;
  double l2 = loss_nwj(t2, matrix_of(t2, Mat(s.array() + std::log(2.0)))).value;
  CHECK(std::abs(l1 - l2) > 1e-3);
  Tape t3, t4;
  // while DV is
  double d1 = loss_dv(t3, matrix_of(t3, s)).value;
  double d2 = loss_dv(t4, matrix_of(t4, Mat(s.array() + std::log(2.0)))).value;
  CHECK(std::abs(d1 - d2) < 1e-12);
}

TEST_CASE("asym_log differs from nwj by the 1/e marginal scaling") {
  std::mt19937_64 rng(3);
  GeneratingFunction alog{RuleKind::asym_log};
  for (int trial = 0; trial < 20; ++trial) {
    Mat s = random_log_scores(5, rng);
    Tape t1, t2;
    double kliep = loss_asym_dre(t1, matrix_of(t1, s), alog).value;
    double nwj = loss_nwj(t2, matrix_of(t2, s)).value;
    double mean_off = 0.0;
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        if (i != j) mean_off += std::exp(s(i, j));
    mean_off /= 20.0;
    CHECK(kliep - nwj ==
          Catch::Approx((1.0 - std::exp(-1.0)) * mean_off).margin(1e-12));
  }
}

TEST_CASE("mine gradient coincides with dv when the EMA equals the batch mean") {
  std::mt19937_64 rng(4);
  CriticSpec spec;
  spec.kind = CriticKind::joint;
  spec.x_dim = 2;
  spec.y_dim = 2;
  spec.hidden = {6};
  spec.embed_dim = 0;
  Critic ca = make_critic(spec, 3), cb = make_critic(spec, 3);
  std::normal_distribution<double> nd;
  Mat xs(5, 2), ys(5, 2);
  for (Eigen::Index i = 0; i < xs.size(); ++i) xs(i) = nd(rng);
  for (Eigen::Index i = 0; i < ys.size(); ++i) ys(i) = nd(rng);

  Tape t1;
  ScoreMatrix s1 = score_matrix(t1, ca, xs, ys);
  GradList g_dv = t1.backward(loss_dv(t1, s1).node);

  Tape t2;
  ScoreMatrix s2 = score_matrix(t2, cb, xs, ys);
  double ema = marginal_mean(t2, s2);
  GradList g_mine = t2.backward(loss_mine(t2, s2, ema).node);

  for (std::size_t i = 0; i < g_dv.size(); ++i)
    CHECK((g_dv[i] - g_mine[i]).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("mine rejects nonpositive EMA") {
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Zero(3, 3));
  CHECK_THROWS_AS(loss_mine(tape, s, 0.0), NumericError);
}

TEST_CASE("js loss on all-ones scores is 2 ln 2") {
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Zero(4, 4));
  CHECK(loss_js(tape, s).value == Catch::Approx(2.0 * std::log(2.0)).margin(1e-14));
}

TEST_CASE("js equals twice the anchored K=1 log-score loss") {
  std::mt19937_64 rng(5);
  GeneratingFunction sym_log{RuleKind::sym_log};
  for (int trial = 0; trial < 100; ++trial) {
    Mat s = random_log_scores(4 + trial % 3, rng);
    Tape t1, t2;
    double js = loss_js(t1, matrix_of(t1, s)).value;
    double anchored =
        loss_scored_anchor(t2, matrix_of(t2, s), sym_log, 1.0, 1).value;
    CHECK(std::abs(js - 2.0 * anchored) < 1e-10);
  }
}

TEST_CASE("smile evaluation reduces to dv without clipping") {
  std::mt19937_64 rng(6);
  Mat s = random_log_scores(5, rng);
  CHECK(eval_clipped_dv_nats(s, std::numeric_limits<double>::infinity()) ==
        Catch::Approx(eval_dv_nats(s)).margin(1e-14));
  // logs within the clip range: identical as well
  CHECK(eval_clipped_dv_nats(s, 10.0) == Catch::Approx(eval_dv_nats(s)).margin(1e-14));
}

TEST_CASE("smile with a tight clip sits strictly below the KL at the true ratio") {
  // Population computation on a discrete pair whose log-ratio spans about
  // +/- 2: clipping to +/- 1 must lose tightness.
  DiscretePair pair{Vec(2), Vec(2)};
  pair.q1 << 0.88, 0.12;
  pair.q0 << 0.12, 0.88;
  double kl_nats = exact_kl_bits(pair) * kLn2;
  double tau = 1.0;
  double joint = 0.0, marg = 0.0;
  for (int i = 0; i < 2; ++i) {
    double logr = std::log(pair.q1(i) / pair.q0(i));
    double clipped = std::min(tau, std::max(-tau, logr));
    joint += pair.q1(i) * clipped;
    marg += pair.q0(i) * std::exp(clipped);
  }
  double clipped_dv = joint - std::log(marg);
  CHECK(clipped_dv < kl_nats - 1e-3);
}

TEST_CASE("infonce loss zero on equal scores and exact on the 2x2 example") {
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Constant(4, 4, 0.7));
  CHECK(loss_infonce(tape, s).value == Catch::Approx(0.0).margin(1e-14));

  Mat m(2, 2);
  m << 1, 0, 0, 1;  // scores [[e,1],[1,e]]
  Tape t2;
  double minus_loss = -loss_infonce(t2, matrix_of(t2, m)).value;
  CHECK(minus_loss ==
        Catch::Approx(1.0 - std::log((std::exp(1.0) + 1.0) / 2.0)).margin(1e-12));
}

TEST_CASE("infonce estimate never exceeds ln B") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    int b = 2 + trial % 6;
    Mat s = random_log_scores(b, rng, 4.0);
    Tape tape;
    double est = -loss_infonce(tape, matrix_of(tape, s)).value;
    CHECK(est <= std::log(static_cast<double>(b)) + 1e-9);
    CHECK(eval_infonce_nats(s) <= std::log(static_cast<double>(b)) + 1e-9);
  }
}

TEST_CASE("anchor loss on the 2x2 all-ones example is ln 2") {
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Zero(2, 2));
  LossValue l = loss_infonce_anchor(tape, s, 1.0);
  CHECK(l.value == Catch::Approx(std::log(2.0)).margin(1e-14));
  CHECK(l.joint_term == Catch::Approx(0.5 * std::log(2.0)).margin(1e-14));
  CHECK(l.anchor_term == Catch::Approx(0.5 * std::log(2.0)).margin(1e-14));
}

TEST_CASE("loss decompositions add up exactly") {
  std::mt19937_64 rng(8);
  Mat s = random_log_scores(6, rng);
  Tape t;
  auto check_sum = [](const LossValue& l) {
    CHECK(std::abs(l.joint_term + l.anchor_term - l.value) < 1e-12);
  };
  check_sum(loss_dv(t, matrix_of(t, s)));
  check_sum(loss_nwj(t, matrix_of(t, s)));
  check_sum(loss_js(t, matrix_of(t, s)));
  check_sum(loss_infonce(t, matrix_of(t, s)));
  check_sum(loss_infonce_anchor(t, matrix_of(t, s), 0.7));
  check_sum(loss_generalized_dv(t, matrix_of(t, s), 2.0));
  check_sum(loss_joint_marginal_anchor(t, matrix_of(t, s), 1.0));
}

TEST_CASE("anchor loss is continuous at nu = 0") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    Mat s = random_log_scores(5, rng);
    Tape t1, t2;
    double at_zero = loss_infonce_anchor(t1, matrix_of(t1, s), 0.0).value;
    double near_zero = loss_infonce_anchor(t2, matrix_of(t2, s), 1e-8).value;
    CHECK(std::abs(at_zero - near_zero) < 1e-6);
  }
}

TEST_CASE("anchor rejects invalid nu") {
  Tape tape;
  ScoreMatrix s2 = matrix_of(tape, Mat::Zero(2, 2));  // K = 1
  CHECK_THROWS_AS(loss_infonce_anchor(tape, s2, 0.0), ConfigError);
  CHECK_THROWS_AS(loss_infonce_anchor(tape, s2, -1.0), ConfigError);
}

TEST_CASE("scored anchor with the log score reproduces infonce_anchor") {
  std::mt19937_64 rng(10);
  GeneratingFunction sym_log{RuleKind::sym_log};
  for (int trial = 0; trial < 100; ++trial) {
    int b = 3 + trial % 5;
    Mat s = random_log_scores(b, rng);
    double nu = trial % 3 == 0 ? 1.0 : 0.25 * (1 + trial % 4);
    Tape t1, t2;
    double a = loss_infonce_anchor(t1, matrix_of(t1, s), nu).value;
    double b2 = loss_scored_anchor(t2, matrix_of(t2, s), sym_log, nu).value;
    CHECK(std::abs(a - b2) < 1e-10);
  }
}

TEST_CASE("pseudospherical anchored loss on all-ones scores, K = 1") {
  // eta = (1/2, 1/2): each lambda is -(2)^(-1/2) * (eta_z / ||eta||_2) = -1/2,
  // keeping the (M+1)^(-1/alpha) prefactor of the generating function.
  GeneratingFunction psph{RuleKind::sym_pseudospherical, 2.0};
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Zero(3, 3));
  double l = loss_scored_anchor(tape, s, psph, 1.0, 1).value;
  CHECK(l == Catch::Approx(-0.5).margin(1e-12));
}

TEST_CASE("generalized dv: beta = 0 is dv, huge beta approaches nwj") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Mat s = random_log_scores(5, rng);
    Tape t1, t2, t3, t4;
    CHECK(std::abs(loss_generalized_dv(t1, matrix_of(t1, s), 0.0).value -
                   loss_dv(t2, matrix_of(t2, s)).value) < 1e-12);
    double big = loss_generalized_dv(t3, matrix_of(t3, s), 1e6).value;
    double nwj_ratio_form =
        loss_generalized_dv(t4, matrix_of(t4, s), 0.0, true).value;
    CHECK(std::abs(big - nwj_ratio_form) < 1e-4);
  }
}

TEST_CASE("generalized dv bound is non-increasing in beta") {
  std::mt19937_64 rng(12);
  std::vector<double> betas{0.0, 0.25, 1.0, 4.0, 16.0, 256.0};
  for (int trial = 0; trial < 20; ++trial) {
    Mat s = random_log_scores(6, rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double beta : betas) {
      Tape t;
      double bound = -loss_generalized_dv(t, matrix_of(t, s), beta).value;
      CHECK(bound <= prev + 1e-12);
      prev = bound;
    }
    Tape t;
    double nwj = -loss_generalized_dv(t, matrix_of(t, s), 0.0, true).value;
    CHECK(nwj <= prev + 1e-9);
  }
}

TEST_CASE("chi-squared loss at unit scores is minus one half") {
  GeneratingFunction apow{RuleKind::asym_power, 2.0};
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Zero(4, 4));
  CHECK(loss_asym_dre(tape, s, apow).value == Catch::Approx(-0.5).margin(1e-14));
}

TEST_CASE("asym power at alpha 2 equals the chi-squared formula and the scored route") {
  std::mt19937_64 rng(13);
  GeneratingFunction apow{RuleKind::asym_power, 2.0};
  for (int trial = 0; trial < 100; ++trial) {
    int b = 4 + trial % 3;
    Mat s = random_log_scores(b, rng, 1.5);
    Tape t1;
    double table_form = loss_asym_dre(t1, matrix_of(t1, s), apow).value;
    // hand chi^2 / DRF form: -E_joint[r] + (1/2) E_marg[r^2]
    double joint = 0.0, marg = 0.0;
    for (int i = 0; i < b; ++i) joint += std::exp(s(i, i));
    joint /= b;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j)
        if (i != j) marg += std::exp(2.0 * s(i, j));
    marg /= static_cast<double>(b) * (b - 1);
    CHECK(std::abs(table_form - (-joint + 0.5 * marg)) < 1e-10);
    // generic ratio-route evaluation at K = 1, nu = 1 carries weight 1/2
    double via_rule = 0.0;
    for (int i = 0; i < b; ++i) {
      SimplexPoint eta{Vec(2)};
      double r = std::exp(s(i, i));
      eta.eta << 1.0 / (1.0 + r), r / (1.0 + r);
      via_rule += 0.5 * induced_loss(apow, eta)(1) / b;
    }
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        if (i == j) continue;
        SimplexPoint eta{Vec(2)};
        double r = std::exp(s(i, j));
        eta.eta << 1.0 / (1.0 + r), r / (1.0 + r);
        via_rule +=
            0.5 * induced_loss(apow, eta)(0) / (static_cast<double>(b) * (b - 1));
      }
    CHECK(std::abs(table_form - 2.0 * via_rule) < 1e-10);
  }
}

TEST_CASE("joint marginal anchor on all-ones scores, K = 1") {
  Tape tape;
  ScoreMatrix s = matrix_of(tape, Mat::Zero(3, 3));
  CHECK(loss_joint_marginal_anchor(tape, s, 1.0, 1).value ==
        Catch::Approx(std::log(2.0)).margin(1e-14));
}

TEST_CASE("plug-in of unit scores is zero bits") {
  Mat s = Mat::Zero(4, 4);
  CHECK(plug_in_mi_nats(s) == 0.0);
}

TEST_CASE("mine training converges to the dv optimum on a discrete pair") {
  // Tabular critic (linear over one-hot symbols); stochastic minibatches
  // with a decaying learning rate. The DV family's population optimum is
  // the ratio up to a constant; after normalizing by the q0-mean, both
  // trained critics must agree with the exact ratio.
  DiscretePair pair{Vec(3), Vec(3)};
  pair.q1 << 0.5, 0.3, 0.2;
  pair.q0 << 0.25, 0.35, 0.4;
  int b = 128;
  auto train = [&](bool use_mine, std::uint64_t seed) {
    CriticSpec spec;
    spec.kind = CriticKind::joint;
    spec.x_dim = 3;
    spec.y_dim = 0;
    spec.hidden = {};
    spec.embed_dim = 0;
    Critic critic = make_critic(spec, seed);
    OptimizerState opt = make_optimizer(critic.params, 1e-2);
    std::mt19937_64 rng(mix_seed(seed, 0xD15C));
    std::discrete_distribution<int> d1(pair.q1.data(), pair.q1.data() + 3);
    std::discrete_distribution<int> d0(pair.q0.data(), pair.q0.data() + 3);
    double ema = std::numeric_limits<double>::quiet_NaN();
    Vec avg = Vec::Zero(3);
    int avg_n = 0;
    const int steps = 9000;
    for (int step = 1; step <= steps; ++step) {
      if (step == 3000) opt.learning_rate = 1e-3;
      if (step == 6000) opt.learning_rate = 1e-4;
      Mat flat = Mat::Zero(static_cast<Eigen::Index>(b) * b, 3);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
          flat(static_cast<Eigen::Index>(i) * b + j, i == j ? d1(rng) : d0(rng)) = 1.0;
      Tape tape;
      Tape::NodeId raw = mlp_forward(tape, critic.params, tape.constant(std::move(flat)));
      ScoreMatrix s{b, tape.reshape(raw, b, b)};
      LossValue loss;
      if (use_mine) {
        double bm = marginal_mean(tape, s);
        ema = std::isnan(ema) ? bm : 0.01 * ema + 0.99 * bm;
        loss = loss_mine(tape, s, ema);
      } else {
        loss = loss_dv(tape, s);
      }
      optimizer_step(opt, critic.params, tape.backward(loss.node));
      if (step > steps - 2000) {
        avg += critic.params.at("W0");
        avg_n += 1;
      }
    }
    Vec u = avg / avg_n;
    Vec bias = Vec::Constant(3, critic.params.at("b0")(0, 0));
    Vec r = (u + bias).array().exp().matrix();
    r /= pair.q0.dot(r);  // normalize out the DV shift ambiguity
    return r;
  };
  Vec ratio = pair.ratio();
  Vec r_mine = train(true, 101);
  Vec r_dv = train(false, 101);
  // Both share the O(1/B) within-batch log-partition bias, so they land on
  // the same point much more tightly than either lands on the exact ratio.
  CHECK((r_mine - r_dv).cwiseAbs().maxCoeff() < 1e-3);
  CHECK((r_dv - ratio).cwiseAbs().maxCoeff() < 2e-2);
  CHECK((r_mine - ratio).cwiseAbs().maxCoeff() < 2e-2);
}
