#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <limits>
#include <locale>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "anchormi/critics.hpp"
#include "anchormi/errors.hpp"
#include "anchormi/objectives.hpp"
#include "anchormi/optimizer.hpp"
#include "anchormi/tape.hpp"
#include "anchormi/version.hpp"

namespace anchormi {

enum class DataKind { gaussian, gaussian_cubic, discrete };

inline DataKind data_from_name(const std::string& s) {
  if (s == "gaussian") return DataKind::gaussian;
  if (s == "gaussian_cubic") return DataKind::gaussian_cubic;
  if (s == "discrete") return DataKind::discrete;
  throw ConfigError("unknown data kind '" + s + "'");
}

inline std::string data_name(DataKind d) {
  switch (d) {
    case DataKind::gaussian: return "gaussian";
    case DataKind::gaussian_cubic: return "gaussian_cubic";
    case DataKind::discrete: return "discrete";
  }
  return "?";
}

enum class EvalMode { type1_bound, type2_bound, type3_plugin };

inline EvalMode eval_mode_from_name(const std::string& s) {
  if (s == "type1_bound") return EvalMode::type1_bound;
  if (s == "type2_bound") return EvalMode::type2_bound;
  if (s == "type3_plugin") return EvalMode::type3_plugin;
  throw ConfigError("unknown eval mode '" + s + "'");
}

inline std::string eval_mode_name(EvalMode m) {
  switch (m) {
    case EvalMode::type1_bound: return "type1_bound";
    case EvalMode::type2_bound: return "type2_bound";
    case EvalMode::type3_plugin: return "type3_plugin";
  }
  return "?";
}

// The taxonomy's default evaluation per family.
inline EvalMode default_eval_mode(Family f) {
  switch (f) {
    case Family::dv:
    case Family::nwj:
    case Family::infonce:
    case Family::generalized_dv:
      return EvalMode::type1_bound;
    case Family::mine:
    case Family::js:
    case Family::smile:
      return EvalMode::type2_bound;
    default:
      return EvalMode::type3_plugin;
  }
}

struct BenchmarkConfig {
  DataKind data = DataKind::gaussian;
  int dim = 10;
  double target_mi_bits = 2.0;
  Vec q1, q0;  // discrete mode only
  int batch_size = 64;
  int steps = 20000;
  std::uint64_t seed = 0;
  double learning_rate = 1e-4;
  CriticSpec critic;
  ObjectiveSpec objective;
  EvalMode eval_mode = EvalMode::type3_plugin;
  int eval_batches = 8;
  int report_every = 500;
  bool eval_fresh = true;  // fresh eval batches; false reuses the train batch

  void validate() const {
    if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
    if (steps <= 0) throw ConfigError("config: steps must be positive");
    if (eval_batches <= 0) throw ConfigError("config: eval_batches must be positive");
    if (report_every <= 0) throw ConfigError("config: report_every must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("config: learning_rate must be > 0");
    if (data != DataKind::discrete) {
      if (dim < 1) throw ConfigError("config: dim must be >= 1");
      if (!(target_mi_bits > 0.0))
        throw ConfigError("config: target_mi_bits must be > 0 for gaussian data");
    } else {
      if (q1.size() < 2 || q1.size() != q0.size())
        throw ConfigError("config: discrete data needs matching q1/q0 with >= 2 symbols");
    }
    objective.validate();
  }
};

struct TrajectoryPoint {
  int step = 0;
  double loss_nats = 0.0;
  double mi_bits = 0.0;
};

struct EstimateReport {
  std::vector<TrajectoryPoint> trajectory;
  double final_mi_bits = std::numeric_limits<double>::quiet_NaN();
  double ground_truth_bits = 0.0;
  int estimator_type = 3;
  double wall_time_s = 0.0;
  bool plugin_warning = false;
  BenchmarkConfig config;
  std::string version = kVersion;
};

// Training diverged; carries the partial trajectory for persistence.
struct DivergenceError : NumericError {
  EstimateReport partial;
  DivergenceError(const std::string& what, EstimateReport r)
      : NumericError(what), partial(std::move(r)) {}
};

inline double gaussian_rho(int dim, double target_mi_bits) {
  return std::sqrt(1.0 - std::pow(2.0, -2.0 * target_mi_bits / dim));
}

// Correlated standard-normal coordinate pairs with per-coordinate
// correlation rho = sqrt(1 - 2^(-2 target / dim)), so that
// I(X;Y) = -(dim/2) log2(1 - rho^2) = target exactly. cubic applies an
// invertible y -> y^3 map, leaving the MI unchanged.
inline void gen_gaussian_pair(int dim, double target_mi_bits, bool cubic,
                              std::mt19937_64& rng, int n, Mat& xs, Mat& ys) {
  if (!(target_mi_bits > 0.0))
    throw ConfigError("gen_gaussian_pair: target_mi_bits must be > 0");
  double rho = gaussian_rho(dim, target_mi_bits);
  std::normal_distribution<double> normal(0.0, 1.0);
  xs.resize(n, dim);
  ys.resize(n, dim);
  double w = std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d) {
      double z1 = normal(rng), z2 = normal(rng);
      xs(i, d) = z1;
      double y = rho * z1 + w * z2;
      ys(i, d) = cubic ? y * y * y : y;
    }
}

namespace detail {

// Symbols for one score matrix of the single-variable contrast: diagonal
// cells drawn from q1, off-diagonal from q0, one-hot encoded.
inline Mat discrete_contrast_inputs(const Vec& q1, const Vec& q0, int b,
                                    std::mt19937_64& rng) {
  int a = static_cast<int>(q1.size());
  std::discrete_distribution<int> d1(q1.data(), q1.data() + a);
  std::discrete_distribution<int> d0(q0.data(), q0.data() + a);
  Mat flat = Mat::Zero(static_cast<Eigen::Index>(b) * b, a);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      int sym = i == j ? d1(rng) : d0(rng);
      flat(static_cast<Eigen::Index>(i) * b + j, sym) = 1.0;
    }
  return flat;
}

}  // namespace detail

// Keep large freed blocks on the heap freelist instead of returning them to
// the kernel: the per-step tapes reallocate multi-MB activation buffers, and
// the default mmap threshold makes every step re-fault those pages.
inline void tune_allocator_once() {
#if defined(__GLIBC__)
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

class BenchmarkRun {
 public:
  explicit BenchmarkRun(const BenchmarkConfig& config) : cfg_(config) {
    tune_allocator_once();
    cfg_.validate();
    // Resolve the critic's input widths from the data.
    if (cfg_.data == DataKind::discrete) {
      if (cfg_.critic.kind != CriticKind::joint)
        throw ConfigError("discrete data needs a joint (single-input) critic");
      cfg_.critic.x_dim = static_cast<int>(cfg_.q1.size());
      cfg_.critic.y_dim = 0;
      ground_truth_bits_ = discrete_kl_bits(cfg_.q1, cfg_.q0);
    } else {
      cfg_.critic.x_dim = cfg_.dim;
      cfg_.critic.y_dim = cfg_.dim;
      ground_truth_bits_ = cfg_.target_mi_bits;
    }
    critic_ = make_critic(cfg_.critic, mix_seed(cfg_.seed, 0xC817));
    opt_ = make_optimizer(critic_.params, cfg_.learning_rate);
    data_rng_.seed(mix_seed(cfg_.seed, 0xDA7A));
    eval_rng_.seed(mix_seed(cfg_.seed, 0xE7A1));
  }

  EstimateReport run() {
    auto t0 = std::chrono::steady_clock::now();
    EstimateReport report;
    report.config = cfg_;
    report.ground_truth_bits = ground_truth_bits_;
    report.estimator_type = cfg_.eval_mode == EvalMode::type1_bound   ? 1
                            : cfg_.eval_mode == EvalMode::type2_bound ? 2
                                                                      : 3;
    report.plugin_warning = cfg_.eval_mode == EvalMode::type3_plugin &&
                            !fisher_consistent(cfg_.objective);

    Mat last_train_logS;
    for (int step = 1; step <= cfg_.steps; ++step) {
      Tape tape;
      LossValue loss;
      try {
        ScoreMatrix scores = next_train_scores(tape);
        loss = training_loss(tape, scores);
        if (!std::isfinite(loss.value))
          throw NumericError("training loss is non-finite");
        if (!cfg_.eval_fresh) last_train_logS = tape.val(scores.log_scores);
        optimizer_step(opt_, critic_.params, tape.backward(loss.node));
      } catch (const NumericError& e) {
        finalize(report, t0);
        throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(step),
                              report);
      }
      bool do_eval = step % cfg_.report_every == 0 ||
                     (step == cfg_.steps && cfg_.steps % cfg_.report_every != 0);
      if (do_eval) {
        double est = evaluate_bits(cfg_.eval_fresh ? nullptr : &last_train_logS);
        if (cfg_.objective.family == Family::infonce &&
            cfg_.eval_mode == EvalMode::type1_bound &&
            est > std::log2(static_cast<double>(cfg_.batch_size)) + 0.1) {
          finalize(report, t0);
          throw DivergenceError(
              "InfoNCE type-1 estimate exceeded the log2(B) cap: " + std::to_string(est),
              report);
        }
        report.trajectory.push_back({step, loss.value, est});
      }
    }
    finalize(report, t0);
    int n_tail = std::min<std::size_t>(10, report.trajectory.size());
    double sum = 0.0;
    for (int i = 0; i < n_tail; ++i)
      sum += report.trajectory[report.trajectory.size() - 1 - i].mi_bits;
    report.final_mi_bits = n_tail > 0 ? sum / n_tail
                                      : std::numeric_limits<double>::quiet_NaN();
    return report;
  }

  static double discrete_kl_bits(const Vec& q1, const Vec& q0) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < q1.size(); ++i) {
      if (q1(i) == 0.0) continue;
      if (q0(i) == 0.0) throw ConfigError("discrete pair violates absolute continuity");
      kl += q1(i) * std::log2(q1(i) / q0(i));
    }
    return kl;
  }

 private:
  ScoreMatrix next_train_scores(Tape& tape) {
    if (cfg_.data == DataKind::discrete) {
      Mat flat =
          detail::discrete_contrast_inputs(cfg_.q1, cfg_.q0, cfg_.batch_size, data_rng_);
      Tape::NodeId raw = mlp_forward(tape, critic_.params, tape.constant(std::move(flat)));
      Tape::NodeId logs =
          tape.reshape(detail_apply_form(tape, raw), cfg_.batch_size, cfg_.batch_size);
      return ScoreMatrix{cfg_.batch_size, logs};
    }
    Mat xs, ys;
    gen_gaussian_pair(cfg_.dim, cfg_.target_mi_bits, cfg_.data == DataKind::gaussian_cubic,
                      data_rng_, cfg_.batch_size, xs, ys);
    return score_matrix(tape, critic_, xs, ys);
  }

  Tape::NodeId detail_apply_form(Tape& tape, Tape::NodeId raw) {
    return critic_.spec.form == CriticForm::pmi_exp ? raw
                                                    : tape.log_(tape.softplus(raw));
  }

  LossValue training_loss(Tape& tape, const ScoreMatrix& s) {
    const ObjectiveSpec& o = cfg_.objective;
    switch (o.family) {
      case Family::dv: return loss_dv(tape, s);
      case Family::nwj: return loss_nwj(tape, s);
      case Family::mine: {
        double batch_mean = marginal_mean(tape, s);
        mine_ema_ = std::isnan(mine_ema_)
                        ? batch_mean
                        : (1.0 - o.ema_rate) * mine_ema_ + o.ema_rate * batch_mean;
        return loss_mine(tape, s, mine_ema_);
      }
      case Family::js: return loss_js(tape, s);
      case Family::smile: return loss_js(tape, s);  // SMILE trains with L_JS
      case Family::infonce: return loss_infonce(tape, s);
      case Family::infonce_anchor: return loss_infonce_anchor(tape, s, o.nu);
      case Family::scored_anchor:
        return loss_scored_anchor(tape, s, o.rule, o.nu, o.k);
      case Family::generalized_dv:
        return loss_generalized_dv(tape, s, o.beta, o.beta_infinite);
      case Family::asym_dre: return loss_asym_dre(tape, s, o.rule);
      case Family::joint_marginal_anchor:
        return loss_joint_marginal_anchor(tape, s, o.nu, o.k);
    }
    throw ContractError("training_loss: unreachable");
  }

  // One evaluation pass; `reuse` substitutes the current train batch when
  // eval_fresh is off.
  double evaluate_bits(const Mat* reuse) {
    const ObjectiveSpec& o = cfg_.objective;
    int n_batches = reuse ? 1 : cfg_.eval_batches;
    double total = 0.0;
    for (int e = 0; e < n_batches; ++e) {
      Mat logS;
      if (reuse) {
        logS = *reuse;
      } else if (cfg_.eval_mode == EvalMode::type3_plugin &&
                 cfg_.data != DataKind::discrete) {
        total += plugin_bits_fresh_batch();
        continue;
      } else {
        Tape tape;
        ScoreMatrix s = eval_scores(tape);
        logS = tape.val(s.log_scores);
      }
      total += estimate_from_matrix_bits(logS, o, cfg_.eval_mode);
    }
    return total / n_batches;
  }

  // Plug-in evaluation needs only the B diagonal pairs.
  double plugin_bits_fresh_batch() {
    Mat xs, ys;
    gen_gaussian_pair(cfg_.dim, cfg_.target_mi_bits, cfg_.data == DataKind::gaussian_cubic,
                      eval_rng_, cfg_.batch_size, xs, ys);
    Tape tape;
    Tape::NodeId logs;
    if (critic_.spec.kind == CriticKind::joint) {
      Mat pairs(xs.rows(), xs.cols() + ys.cols());
      pairs << xs, ys;
      logs = detail_apply_form(
          tape, mlp_forward(tape, critic_.params, tape.constant(std::move(pairs))));
    } else {
      Tape::NodeId f = mlp_forward(tape, critic_.params, tape.constant(xs), "f_");
      Tape::NodeId g = mlp_forward(tape, critic_.params, tape.constant(ys), "g_");
      Tape::NodeId fn = tape.div_rowbroadcast(f, tape.row_l2norm(f));
      Tape::NodeId gn = tape.div_rowbroadcast(g, tape.row_l2norm(g));
      // Row-wise cosine of matched pairs: diag of fn gn^T.
      logs = detail_apply_form(
          tape, tape.scale(tape.diag(tape.matmul_nt(fn, gn)),
                           1.0 / critic_.spec.temperature));
    }
    return tape.val(logs).mean() / kLn2;
  }

  ScoreMatrix eval_scores(Tape& tape) {
    if (cfg_.data == DataKind::discrete) {
      Mat flat =
          detail::discrete_contrast_inputs(cfg_.q1, cfg_.q0, cfg_.batch_size, eval_rng_);
      Tape::NodeId raw = mlp_forward(tape, critic_.params, tape.constant(std::move(flat)));
      Tape::NodeId logs =
          tape.reshape(detail_apply_form(tape, raw), cfg_.batch_size, cfg_.batch_size);
      return ScoreMatrix{cfg_.batch_size, logs};
    }
    Mat xs, ys;
    gen_gaussian_pair(cfg_.dim, cfg_.target_mi_bits, cfg_.data == DataKind::gaussian_cubic,
                      eval_rng_, cfg_.batch_size, xs, ys);
    return score_matrix(tape, critic_, xs, ys);
  }

 public:
  // Bound/plug-in estimate in bits from a log-score matrix.
  static double estimate_from_matrix_bits(const Mat& logS, const ObjectiveSpec& o,
                                          EvalMode mode) {
    switch (mode) {
      case EvalMode::type3_plugin:
        return plug_in_mi_nats(logS) / kLn2;
      case EvalMode::type1_bound:
        switch (o.family) {
          case Family::dv: return eval_dv_nats(logS) / kLn2;
          case Family::nwj: return eval_nwj_nats(logS) / kLn2;
          case Family::infonce: return eval_infonce_nats(logS) / kLn2;
          case Family::generalized_dv: {
            if (o.beta_infinite) {
              double m = 0.0;
              int b = static_cast<int>(logS.rows());
              for (int i = 0; i < b; ++i)
                for (int j = 0; j < b; ++j)
                  if (i != j) m += std::exp(logS(i, j));
              m /= static_cast<double>(b) * (b - 1);
              return (logS.diagonal().mean() - m + 1.0) / kLn2;
            }
            double m = 0.0;
            int b = static_cast<int>(logS.rows());
            for (int i = 0; i < b; ++i)
              for (int j = 0; j < b; ++j)
                if (i != j) m += std::exp(logS(i, j));
            m /= static_cast<double>(b) * (b - 1);
            double bound = logS.diagonal().mean() -
                           (o.beta + 1.0) *
                               std::log(o.beta / (o.beta + 1.0) + m / (o.beta + 1.0));
            return bound / kLn2;
          }
          default:
            throw ConfigError("type1_bound is undefined for objective family " +
                              family_name(o.family));
        }
      case EvalMode::type2_bound:
        switch (o.family) {
          case Family::mine: return eval_dv_nats(logS) / kLn2;
          case Family::js: return eval_nwj_nats(logS) / kLn2;
          case Family::smile: return eval_clipped_dv_nats(logS, o.tau_clip) / kLn2;
          default:
            throw ConfigError("type2_bound is undefined for objective family " +
                              family_name(o.family));
        }
    }
    throw ContractError("estimate_from_matrix_bits: unreachable");
  }

 private:
  void finalize(EstimateReport& report, std::chrono::steady_clock::time_point t0) {
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  BenchmarkConfig cfg_;
  Critic critic_;
  OptimizerState opt_;
  std::mt19937_64 data_rng_, eval_rng_;
  double ground_truth_bits_ = 0.0;
  double mine_ema_ = std::numeric_limits<double>::quiet_NaN();
};

inline EstimateReport run_benchmark(const BenchmarkConfig& config) {
  return BenchmarkRun(config).run();
}

// ---- Suite ------------------------------------------------------------

struct SuiteRow {
  std::string objective;
  int k = 0;
  double nu = 0.0;
  double target_bits = 0.0;
  std::uint64_t seed = 0;
  double final_bits = std::numeric_limits<double>::quiet_NaN();
  double err_bits = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
};

inline std::string suite_csv_header() {
  return "objective,K,nu,target_bits,seed,final_bits,err_bits,wall_s";
}

inline std::string suite_row_csv(const SuiteRow& r) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);  // round-trips f64 exactly
  os << r.objective << ',' << r.k << ',' << r.nu << ',' << r.target_bits << ','
     << r.seed << ',' << r.final_bits << ',' << r.err_bits << ',' << r.wall_s;
  return os.str();
}

// Label for one suite cell; resumed runs are matched on this.
inline std::string suite_cell_key(const std::string& objective, int k, double nu,
                                  double target_bits, std::uint64_t seed) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(10);
  os << objective << '|' << k << '|' << nu << '|' << target_bits << '|' << seed;
  return os.str();
}

inline std::vector<SuiteRow> read_suite_csv(const std::string& path) {
  std::vector<SuiteRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    SuiteRow r;
    std::string tok;
    auto next = [&]() {
      if (!std::getline(ls, tok, ',')) throw ConfigError("suite csv: short row");
      return tok;
    };
    r.objective = next();
    r.k = std::stoi(next());
    r.nu = std::stod(next());
    r.target_bits = std::stod(next());
    r.seed = std::stoull(next());
    r.final_bits = std::stod(next());
    r.err_bits = std::stod(next());
    r.wall_s = std::stod(next());
    rows.push_back(std::move(r));
  }
  return rows;
}

// Runs every cell, appending one CSV row as each finishes so interrupted
// suites can resume. A failed cell records NaNs and the suite continues.
inline std::vector<SuiteRow> run_suite(const std::vector<BenchmarkConfig>& cells,
                                       const std::string& csv_path, bool resume,
                                       int parallelism = 0) {
  std::vector<SuiteRow> done;
  std::map<std::string, SuiteRow> cached;
  if (resume)
    for (auto& r : read_suite_csv(csv_path))
      cached[suite_cell_key(r.objective, r.k, r.nu, r.target_bits, r.seed)] = r;

  bool header_needed = true;
  {
    std::ifstream probe(csv_path);
    header_needed = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  }
  std::ofstream out;
  if (!resume)
    out.open(csv_path, std::ios::trunc);
  else
    out.open(csv_path, std::ios::app);
  if (!out) throw ConfigError("run_suite: cannot open " + csv_path);
  if (header_needed || !resume) out << suite_csv_header() << '\n' << std::flush;

  struct Cell {
    BenchmarkConfig config;
    std::string key;
    SuiteRow row;
    bool from_cache = false;
  };
  std::vector<Cell> work;
  for (const auto& cfg : cells) {
    Cell c;
    c.config = cfg;
    std::string obj = family_name(cfg.objective.family);
    int k_eff = cfg.objective.k == 0 ? cfg.batch_size - 1 : cfg.objective.k;
    double target = cfg.data == DataKind::discrete
                        ? BenchmarkRun::discrete_kl_bits(cfg.q1, cfg.q0)
                        : cfg.target_mi_bits;
    c.key = suite_cell_key(obj, k_eff, cfg.objective.nu, target, cfg.seed);
    c.row.objective = obj;
    c.row.k = k_eff;
    c.row.nu = cfg.objective.nu;
    c.row.target_bits = target;
    c.row.seed = cfg.seed;
    if (auto it = cached.find(c.key); it != cached.end()) {
      c.row = it->second;
      c.from_cache = true;
    }
    work.push_back(std::move(c));
  }

  std::mutex io_mutex;
  std::atomic<std::size_t> next_cell{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next_cell.fetch_add(1);
      if (i >= work.size()) break;
      Cell& c = work[i];
      if (c.from_cache) continue;
      try {
        EstimateReport rep = run_benchmark(c.config);
        c.row.final_bits = rep.final_mi_bits;
        c.row.err_bits = rep.final_mi_bits - rep.ground_truth_bits;
        c.row.wall_s = rep.wall_time_s;
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(io_mutex);
        std::fprintf(stderr, "suite cell %s failed: %s\n", c.key.c_str(), e.what());
      }
      std::lock_guard<std::mutex> lk(io_mutex);
      out << suite_row_csv(c.row) << '\n' << std::flush;
    }
  };

  int n_threads = parallelism > 0
                      ? parallelism
                      : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<int>(n_threads, static_cast<int>(work.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (auto& c : work) done.push_back(c.row);
  return done;
}

struct SuiteSummary {
  std::string objective;
  double target_bits = 0.0;
  int n = 0;
  double mean_bits = 0.0;
  double std_bits = 0.0;
  double mae_bits = 0.0;
};

// One row per (objective, target): mean +/- std of finals plus the mean
// absolute error. NaN cells are skipped but counted out of n.
inline std::vector<SuiteSummary> summarize_suite(const std::vector<SuiteRow>& rows) {
  std::map<std::pair<std::string, double>, std::vector<const SuiteRow*>> groups;
  for (const auto& r : rows) groups[{r.objective, r.target_bits}].push_back(&r);
  std::vector<SuiteSummary> out;
  for (auto& [key, grp] : groups) {
    SuiteSummary s;
    s.objective = key.first;
    s.target_bits = key.second;
    double sum = 0.0, sum2 = 0.0, mae = 0.0;
    for (const SuiteRow* r : grp) {
      if (std::isnan(r->final_bits)) continue;
      s.n += 1;
      sum += r->final_bits;
      sum2 += r->final_bits * r->final_bits;
      mae += std::abs(r->err_bits);
    }
    if (s.n > 0) {
      s.mean_bits = sum / s.n;
      double var = sum2 / s.n - s.mean_bits * s.mean_bits;
      s.std_bits = std::sqrt(std::max(0.0, var));
      s.mae_bits = mae / s.n;
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace anchormi
