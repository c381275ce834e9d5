// anchormi: contrastive mutual-information and density-ratio estimation.
//
// Subcommands:
//   estimate   train one configuration, write a JSON report
//   bench      run an (objective x target x seed) suite, write CSV
//   oracle     exact finite-alphabet quantities and bound-chain verdicts
//   gradcheck  finite-difference sweep over every objective family
//
// Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
// 4 oracle enumeration budget exceeded.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "anchormi/gradcheck_sweep.hpp"
#include "anchormi/harness.hpp"
#include "anchormi/oracle.hpp"
#include "anchormi/report_io.hpp"
#include "anchormi/version.hpp"

namespace {

using namespace anchormi;

struct RunFlags {
  std::string data = "gaussian";
  int dim = 10;
  double target_bits = 2.0;
  std::vector<double> q1, q0;
  int batch_size = 64;
  int steps = 20000;
  std::uint64_t seed = 0;
  double lr = 1e-4;
  std::string objective = "infonce_anchor";
  double nu = 1.0;
  int k = 0;
  std::string beta = "0";
  std::string rule = "sym_log";
  double alpha = 2.0;
  double tau_clip = 5.0;
  double ema_rate = 0.99;
  std::string critic_kind = "joint";
  std::string critic_form = "pmi_exp";
  std::vector<int> hidden = {512, 512};
  int embed_dim = 16;
  double temperature = 0.2;
  std::string eval_mode = "default";
  int eval_batches = 8;
  int report_every = 500;
  bool eval_on_train = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--data", f.data, "gaussian | gaussian_cubic | discrete");
  cmd->add_option("--dim", f.dim, "coordinate count of x and y (gaussian)");
  cmd->add_option("--target-bits", f.target_bits, "ground-truth MI in bits (gaussian)");
  cmd->add_option("--q1", f.q1, "discrete data: positive-class pmf")->delimiter(',');
  cmd->add_option("--q0", f.q0, "discrete data: reference pmf")->delimiter(',');
  cmd->add_option("--batch-size", f.batch_size, "minibatch size B");
  cmd->add_option("--steps", f.steps, "training steps");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--lr", f.lr, "Adam learning rate");
  cmd->add_option("--objective", f.objective,
                  "dv | nwj | mine | js | smile | infonce | infonce_anchor | "
                  "scored_anchor | generalized_dv | asym_dre | joint_marginal_anchor");
  cmd->add_option("--nu", f.nu, "anchor prior weight");
  cmd->add_option("--K", f.k, "negatives per tuple (0 selects B-1)");
  cmd->add_option("--beta", f.beta, "generalized_dv interpolation (number or 'inf')");
  cmd->add_option("--rule", f.rule, "scoring rule for scored_anchor / asym_dre");
  cmd->add_option("--alpha", f.alpha, "scoring-rule alpha");
  cmd->add_option("--tau-clip", f.tau_clip, "smile clip half-width");
  cmd->add_option("--ema-rate", f.ema_rate, "mine EMA weight on the current batch");
  cmd->add_option("--critic-kind", f.critic_kind, "joint | separable");
  cmd->add_option("--critic-form", f.critic_form, "pmi_exp | pd_direct");
  cmd->add_option("--hidden", f.hidden, "hidden layer sizes")->delimiter(',');
  cmd->add_option("--embed-dim", f.embed_dim, "embedding width (0 for none)");
  cmd->add_option("--temperature", f.temperature, "separable critic temperature");
  cmd->add_option("--eval-mode", f.eval_mode,
                  "type1_bound | type2_bound | type3_plugin | default");
  cmd->add_option("--eval-batches", f.eval_batches, "fresh batches per evaluation");
  cmd->add_option("--report-every", f.report_every, "evaluation period in steps");
  cmd->add_flag("--eval-on-train", f.eval_on_train,
                "evaluate on the current training batch instead of fresh batches");
}

BenchmarkConfig config_from_flags(const RunFlags& f) {
  BenchmarkConfig c;
  c.data = data_from_name(f.data);
  c.dim = f.dim;
  c.target_mi_bits = f.target_bits;
  if (c.data == DataKind::discrete) {
    if (f.q1.empty() || f.q0.empty())
      throw ConfigError("discrete data needs --q1 and --q0");
    c.q1 = Eigen::Map<const Vec>(f.q1.data(), static_cast<Eigen::Index>(f.q1.size()));
    c.q0 = Eigen::Map<const Vec>(f.q0.data(), static_cast<Eigen::Index>(f.q0.size()));
  }
  c.batch_size = f.batch_size;
  c.steps = f.steps;
  c.seed = f.seed;
  c.learning_rate = f.lr;
  c.critic.kind = f.critic_kind == "separable" ? CriticKind::separable : CriticKind::joint;
  if (f.critic_kind != "separable" && f.critic_kind != "joint")
    throw ConfigError("unknown critic kind '" + f.critic_kind + "'");
  c.critic.form = f.critic_form == "pd_direct" ? CriticForm::pd_direct : CriticForm::pmi_exp;
  if (f.critic_form != "pd_direct" && f.critic_form != "pmi_exp")
    throw ConfigError("unknown critic form '" + f.critic_form + "'");
  c.critic.hidden = f.hidden;
  c.critic.embed_dim = f.embed_dim;
  c.critic.temperature = f.temperature;
  c.objective.family = family_from_name(f.objective);
  c.objective.nu = f.nu;
  c.objective.k = f.k;
  if (f.beta == "inf" || f.beta == "infinity") {
    c.objective.beta_infinite = true;
  } else {
    c.objective.beta = std::stod(f.beta);
  }
  c.objective.tau_clip = f.tau_clip;
  c.objective.ema_rate = f.ema_rate;
  c.objective.rule = rule_from_name(f.rule, f.alpha);
  c.eval_mode = f.eval_mode == "default" ? default_eval_mode(c.objective.family)
                                         : eval_mode_from_name(f.eval_mode);
  c.eval_batches = f.eval_batches;
  c.report_every = f.report_every;
  c.eval_fresh = !f.eval_on_train;
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  if (path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open output file " + path);
  out << text << '\n';
}

int cmd_estimate(const RunFlags& flags, const std::string& out_path) {
  BenchmarkConfig cfg = config_from_flags(flags);
  EstimateReport report;
  try {
    report = run_benchmark(cfg);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "estimate: %s (partial trajectory persisted)\n", e.what());
    write_text(out_path, report_to_json(e.partial).dump(2));
    return 3;
  }
  if (report.plugin_warning)
    std::fprintf(stderr,
                 "warning: plug-in evaluation of a non Fisher-consistent objective; "
                 "the estimate carries an uncontrolled offset\n");
  write_text(out_path, report_to_json(report).dump(2));
  std::fprintf(stderr, "final estimate %.4f bits (ground truth %.4f), %.1f s\n",
               report.final_mi_bits, report.ground_truth_bits, report.wall_time_s);
  return 0;
}

int cmd_bench(const RunFlags& flags, const std::string& objectives,
              const std::string& targets, int n_seeds, const std::string& out_csv,
              const std::string& summary_csv, bool resume, int parallelism) {
  std::vector<BenchmarkConfig> cells;
  std::istringstream objs(objectives);
  std::string obj;
  while (std::getline(objs, obj, ',')) {
    std::istringstream tgts(targets);
    std::string tgt;
    while (std::getline(tgts, tgt, ',')) {
      for (int s = 1; s <= n_seeds; ++s) {
        RunFlags f = flags;
        f.objective = obj;
        f.target_bits = std::stod(tgt);
        f.seed = static_cast<std::uint64_t>(s);
        if (family_from_name(obj) == Family::infonce) f.nu = 0.0;
        cells.push_back(config_from_flags(f));
      }
    }
  }
  auto rows = run_suite(cells, out_csv, resume, parallelism);
  auto summary = summarize_suite(rows);
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(10);
  os << "objective,target_bits,n,mean_bits,std_bits,mae_bits\n";
  for (const auto& s : summary)
    os << s.objective << ',' << s.target_bits << ',' << s.n << ',' << s.mean_bits
       << ',' << s.std_bits << ',' << s.mae_bits << '\n';
  if (!summary_csv.empty()) write_text(summary_csv, os.str());
  std::fprintf(stderr, "%s", os.str().c_str());
  return 0;
}

int cmd_oracle(const std::string& spec_path, const std::string& out_path) {
  json spec;
  if (spec_path == "-") {
    std::cin >> spec;
  } else {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open oracle spec " + spec_path);
    in >> spec;
  }
  DiscretePair pair;
  auto v1 = spec.at("q1").get<std::vector<double>>();
  auto v0 = spec.at("q0").get<std::vector<double>>();
  pair.q1 = Eigen::Map<Vec>(v1.data(), static_cast<Eigen::Index>(v1.size()));
  pair.q0 = Eigen::Map<Vec>(v0.data(), static_cast<Eigen::Index>(v0.size()));
  int k = spec.value("K", 2);
  double nu = spec.value("nu", 1.0);
  GeneratingFunction rule =
      rule_from_name(spec.value("rule", "sym_log"), spec.value("alpha", 2.0));

  pair.validate();
  double kl = exact_kl_bits(pair);
  double chi2 = exact_chi2(pair);
  double kjsd = exact_kjsd_bits(pair, k);
  double kjsd_mix = exact_kjsd_bits_mixture(pair, k);
  double thm1 = theorem1_bound_bits(kl, k);
  double cap = std::min(std::log2(static_cast<double>(k)), kl);

  TabularCritic at_ratio{pair.ratio()};
  double objective_at_ratio = exact_infonce_objective_bits(pair, k, at_ratio);

  auto bf = brute_force_optimum(pair, k, nu, rule, spec.value("seed", 0ull));
  Vec ratio = pair.ratio();
  double fisher_sup = (bf.critic.r - ratio).cwiseAbs().maxCoeff();
  Vec rel = bf.critic.r.cwiseQuotient(ratio);
  double fisher_spread = (rel.maxCoeff() - rel.minCoeff()) / std::abs(rel.mean());

  double loss_at_opt = std::numeric_limits<double>::quiet_NaN();
  double loss_at_ratio = std::numeric_limits<double>::quiet_NaN();
  if (rule.symmetric() || nu > 0.0) {
    loss_at_opt = exact_population_loss_nats(pair, k, nu, bf.critic, rule);
    loss_at_ratio = exact_population_loss_nats(pair, k, nu, at_ratio, rule);
  }

  json verdicts{
      {"kjsd_paths_agree", std::abs(kjsd - kjsd_mix) < 1e-12},
      {"objective_equals_kjsd_at_ratio", std::abs(objective_at_ratio - kjsd) < 1e-10},
      {"kjsd_below_theorem1", kjsd <= thm1 + 1e-9},
      {"theorem1_below_cap", thm1 <= cap + 1e-9},
      {"fisher_recovery",
       nu > 0.0 ? fisher_sup < 1e-3 : fisher_spread < 1e-3},
  };
  json report{{"version", kVersion},
              {"kl_bits", kl},
              {"chi2", chi2},
              {"kjsd_bits", kjsd},
              {"kjsd_bits_mixture_path", kjsd_mix},
              {"theorem1_bound_bits", thm1},
              {"min_log2K_kl_bits", cap},
              {"objective_at_ratio_bits", objective_at_ratio},
              {"brute_force",
               json{{"r", std::vector<double>(bf.critic.r.data(),
                                              bf.critic.r.data() + bf.critic.r.size())},
                    {"grad_norm", bf.grad_norm},
                    {"iterations", bf.iterations},
                    {"loss_nats", bf.loss_nats},
                    {"fisher_sup_error", fisher_sup},
                    {"fisher_relative_spread", fisher_spread}}},
              {"population_loss_nats",
               json{{"at_optimum", loss_at_opt}, {"at_ratio", loss_at_ratio}}},
              {"verdicts", verdicts}};
  write_text(out_path, report.dump(2));
  bool all_ok = true;
  for (auto& [key, val] : verdicts.items()) {
    std::fprintf(stderr, "%-34s %s\n", key.c_str(), val.get<bool>() ? "pass" : "FAIL");
    all_ok = all_ok && val.get<bool>();
  }
  return all_ok ? 0 : 3;
}

int cmd_gradcheck(int seeds, double tolerance) {
  std::printf("finite-difference sweep, tolerance %.1e\n", tolerance);
  bool all_ok = true;
  for (const auto& r : gradcheck_sweep(seeds)) {
    bool ok = r.rel_err < tolerance;
    all_ok = all_ok && ok;
    std::printf("seed %d  %-34s eps %.0e  rel_err %.3e  %s\n", r.seed, r.name.c_str(),
                r.eps, r.rel_err, ok ? "ok" : "FAIL");
  }
  return all_ok ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive MI / density-ratio estimation"};
  app.set_version_flag("--version", anchormi::kVersion);
  app.set_config("--config", "", "read options from an INI/TOML file");
  app.require_subcommand(1);

  RunFlags flags;
  std::string out_path = "report.json";
  auto* est = app.add_subcommand("estimate", "train one configuration");
  add_run_flags(est, flags);
  est->add_option("--out", out_path, "JSON report path ('-' for stdout)");

  RunFlags bench_flags;
  std::string objectives = "infonce_anchor,infonce";
  std::string targets = "2,4,6,8";
  int n_seeds = 5;
  std::string out_csv = "results.csv";
  std::string summary_csv;
  bool resume = false;
  int parallelism = 0;
  auto* bench = app.add_subcommand("bench", "objective x target x seed suite");
  add_run_flags(bench, bench_flags);
  bench->add_option("--objectives", objectives, "comma-separated families");
  bench->add_option("--targets", targets, "comma-separated MI targets in bits");
  bench->add_option("--seeds", n_seeds, "seeds per cell (1..N)");
  bench->add_option("--out", out_csv, "per-run CSV path");
  bench->add_option("--summary", summary_csv, "aggregate CSV path");
  bench->add_flag("--resume", resume, "reuse rows already present in --out");
  bench->add_option("--parallelism", parallelism, "worker threads (0 = hardware)");

  std::string oracle_spec = "-";
  std::string oracle_out = "-";
  auto* orc = app.add_subcommand("oracle", "exact discrete-pair report");
  orc->add_option("--spec", oracle_spec, "JSON spec {q1,q0,K,nu,rule,alpha} ('-' = stdin)");
  orc->add_option("--out", oracle_out, "JSON report path ('-' for stdout)");

  int gc_seeds = 3;
  double gc_tol = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference sweep");
  gc->add_option("--seeds", gc_seeds, "critic seeds");
  gc->add_option("--tolerance", gc_tol, "max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    anchormi::tune_allocator_once();
    if (est->parsed()) return cmd_estimate(flags, out_path);
    if (bench->parsed())
      return cmd_bench(bench_flags, objectives, targets, n_seeds, out_csv, summary_csv,
                       resume, parallelism);
    if (orc->parsed()) return cmd_oracle(oracle_spec, oracle_out);
    if (gc->parsed()) return cmd_gradcheck(gc_seeds, gc_tol);
  } catch (const anchormi::BudgetError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const anchormi::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const anchormi::DomainError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const anchormi::NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
