#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "anchormi/harness.hpp"

namespace anchormi {

using nlohmann::json;

inline json critic_to_json(const CriticSpec& c) {
  return json{{"kind", c.kind == CriticKind::joint ? "joint" : "separable"},
              {"form", c.form == CriticForm::pmi_exp ? "pmi_exp" : "pd_direct"},
              {"x_dim", c.x_dim},
              {"y_dim", c.y_dim},
              {"hidden", c.hidden},
              {"embed_dim", c.embed_dim},
              {"temperature", c.temperature}};
}

inline CriticSpec critic_from_json(const json& j) {
  CriticSpec c;
  std::string kind = j.value("kind", "joint");
  c.kind = kind == "separable" ? CriticKind::separable : CriticKind::joint;
  std::string form = j.value("form", "pmi_exp");
  c.form = form == "pd_direct" ? CriticForm::pd_direct : CriticForm::pmi_exp;
  c.x_dim = j.value("x_dim", 0);
  c.y_dim = j.value("y_dim", 0);
  c.hidden = j.value("hidden", std::vector<int>{512, 512});
  c.embed_dim = j.value("embed_dim", 16);
  c.temperature = j.value("temperature", 0.2);
  return c;
}

inline json objective_to_json(const ObjectiveSpec& o) {
  return json{{"family", family_name(o.family)},
              {"K", o.k},
              {"nu", o.nu},
              {"beta", o.beta},
              {"beta_infinite", o.beta_infinite},
              {"tau_clip", o.tau_clip},
              {"ema_rate", o.ema_rate},
              {"rule", rule_name(o.rule)},
              {"alpha", o.rule.alpha}};
}

inline ObjectiveSpec objective_from_json(const json& j) {
  ObjectiveSpec o;
  o.family = family_from_name(j.value("family", "infonce_anchor"));
  o.k = j.value("K", 0);
  o.nu = j.value("nu", 1.0);
  o.beta = j.value("beta", 0.0);
  o.beta_infinite = j.value("beta_infinite", false);
  o.tau_clip = j.value("tau_clip", 5.0);
  o.ema_rate = j.value("ema_rate", 0.99);
  o.rule = rule_from_name(j.value("rule", "sym_log"), j.value("alpha", 2.0));
  return o;
}

inline json config_to_json(const BenchmarkConfig& c) {
  json j{{"data", data_name(c.data)},
         {"dim", c.dim},
         {"target_mi_bits", c.target_mi_bits},
         {"batch_size", c.batch_size},
         {"steps", c.steps},
         {"seed", c.seed},
         {"learning_rate", c.learning_rate},
         {"critic", critic_to_json(c.critic)},
         {"objective", objective_to_json(c.objective)},
         {"eval_mode", eval_mode_name(c.eval_mode)},
         {"eval_batches", c.eval_batches},
         {"report_every", c.report_every},
         {"eval_fresh", c.eval_fresh}};
  if (c.data == DataKind::discrete) {
    j["q1"] = std::vector<double>(c.q1.data(), c.q1.data() + c.q1.size());
    j["q0"] = std::vector<double>(c.q0.data(), c.q0.data() + c.q0.size());
  }
  return j;
}

inline BenchmarkConfig config_from_json(const json& j) {
  BenchmarkConfig c;
  c.data = data_from_name(j.value("data", "gaussian"));
  c.dim = j.value("dim", 10);
  c.target_mi_bits = j.value("target_mi_bits", 2.0);
  c.batch_size = j.value("batch_size", 64);
  c.steps = j.value("steps", 20000);
  c.seed = j.value("seed", 0ull);
  c.learning_rate = j.value("learning_rate", 1e-4);
  if (j.contains("critic")) c.critic = critic_from_json(j.at("critic"));
  if (j.contains("objective")) c.objective = objective_from_json(j.at("objective"));
  c.eval_mode = eval_mode_from_name(j.value("eval_mode", "type3_plugin"));
  c.eval_batches = j.value("eval_batches", 8);
  c.report_every = j.value("report_every", 500);
  c.eval_fresh = j.value("eval_fresh", true);
  if (j.contains("q1")) {
    auto v1 = j.at("q1").get<std::vector<double>>();
    auto v0 = j.at("q0").get<std::vector<double>>();
    c.q1 = Eigen::Map<Vec>(v1.data(), static_cast<Eigen::Index>(v1.size()));
    c.q0 = Eigen::Map<Vec>(v0.data(), static_cast<Eigen::Index>(v0.size()));
  }
  return c;
}

inline json report_to_json(const EstimateReport& r) {
  json traj = json::array();
  for (const auto& p : r.trajectory)
    traj.push_back(json{{"step", p.step}, {"loss_nats", p.loss_nats},
                        {"mi_bits", p.mi_bits}});
  return json{{"trajectory", traj},
              {"final_mi_bits", r.final_mi_bits},
              {"ground_truth_bits", r.ground_truth_bits},
              {"estimator_type", r.estimator_type},
              {"wall_time_s", r.wall_time_s},
              {"plugin_warning", r.plugin_warning},
              {"config", config_to_json(r.config)},
              {"version", r.version}};
}

inline EstimateReport report_from_json(const json& j) {
  EstimateReport r;
  // NaN serializes as null; read it back as NaN.
  auto num_or_nan = [](const json& v) {
    return v.is_number() ? v.get<double>()
                         : std::numeric_limits<double>::quiet_NaN();
  };
  for (const auto& p : j.at("trajectory"))
    r.trajectory.push_back({p.at("step").get<int>(), p.at("loss_nats").get<double>(),
                            p.at("mi_bits").get<double>()});
  r.final_mi_bits = num_or_nan(j.at("final_mi_bits"));
  r.ground_truth_bits = j.at("ground_truth_bits").get<double>();
  r.estimator_type = j.at("estimator_type").get<int>();
  r.wall_time_s = j.at("wall_time_s").get<double>();
  r.plugin_warning = j.value("plugin_warning", false);
  r.config = config_from_json(j.at("config"));
  r.version = j.value("version", "");
  return r;
}

}  // namespace anchormi
