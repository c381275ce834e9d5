#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/mlp.hpp"
#include "anchormi/param_store.hpp"
#include "anchormi/tape.hpp"

namespace anchormi {

enum class CriticKind { joint, separable };

// pmi_exp: the net output is the log of the ratio model (score = e^c).
// pd_direct: the net output is passed through softplus so the score itself
// stays positive; the raw direct form can go negative, which is invalid on
// ratio scale.
enum class CriticForm { pmi_exp, pd_direct };

struct CriticSpec {
  CriticKind kind = CriticKind::joint;
  CriticForm form = CriticForm::pmi_exp;
  int x_dim = 0;
  int y_dim = 0;
  std::vector<int> hidden = {512, 512};
  int embed_dim = 16;          // 0 collapses the joint head to [.., 1]
  double temperature = 0.2;    // separable only

  void validate() const {
    if (x_dim <= 0) throw ConfigError("critic: x_dim must be positive");
    if (kind == CriticKind::joint && y_dim < 0)
      throw ConfigError("critic: y_dim must be nonnegative");
    if (kind == CriticKind::separable && (y_dim <= 0 || embed_dim < 1))
      throw ConfigError("critic: separable needs y_dim > 0 and embed_dim >= 1");
    if (!(temperature > 0.0)) throw ConfigError("critic: temperature must be > 0");
    for (int h : hidden)
      if (h <= 0) throw ConfigError("critic: hidden sizes must be positive");
    if (embed_dim < 0) throw ConfigError("critic: embed_dim must be >= 0");
  }
};

struct Critic {
  CriticSpec spec;
  ParamStore params;
};

inline Critic make_critic(const CriticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Critic c;
  c.spec = spec;
  if (spec.kind == CriticKind::joint) {
    std::vector<int> layers;
    layers.push_back(spec.x_dim + spec.y_dim);
    for (int h : spec.hidden) layers.push_back(h);
    if (spec.embed_dim > 0) layers.push_back(spec.embed_dim);
    layers.push_back(1);
    c.params = build_mlp(layers, Activation::relu, seed);
  } else {
    std::vector<int> fl, gl;
    fl.push_back(spec.x_dim);
    gl.push_back(spec.y_dim);
    for (int h : spec.hidden) {
      fl.push_back(h);
      gl.push_back(h);
    }
    fl.push_back(spec.embed_dim);
    gl.push_back(spec.embed_dim);
    ParamStore f = build_mlp(fl, Activation::relu, mix_seed(seed, 1), "f_");
    ParamStore g = build_mlp(gl, Activation::relu, mix_seed(seed, 2), "g_");
    c.params.rng_seed = seed;
    for (auto& e : f.entries) c.params.add(e.name, std::move(e.value));
    for (auto& e : g.entries) c.params.add(e.name, std::move(e.value));
  }
  c.params.rng_seed = seed;
  return c;
}

// B x B log-score node: entry (b, j) = log r_theta(x_b, y_j).
struct ScoreMatrix {
  int batch = 0;
  Tape::NodeId log_scores = -1;
};

namespace detail {

inline Tape::NodeId apply_form(Tape& tape, Tape::NodeId raw, CriticForm form) {
  if (form == CriticForm::pmi_exp) return raw;
  return tape.log_(tape.softplus(raw));
}

}  // namespace detail

// All B x B pair scores in one differentiable pass.
inline ScoreMatrix score_matrix(Tape& tape, Critic& critic, const Mat& xs,
                                const Mat& ys) {
  const int b = static_cast<int>(xs.rows());
  if (b < 2 || ys.rows() != b)
    throw DimensionError("score_matrix: need matching batches with B >= 2");
  if (xs.cols() != critic.spec.x_dim || ys.cols() != critic.spec.y_dim)
    throw DimensionError("score_matrix: feature widths do not match critic");

  Tape::NodeId log_scores;
  if (critic.spec.kind == CriticKind::joint) {
    Mat pairs(static_cast<Eigen::Index>(b) * b, xs.cols() + ys.cols());
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j) {
        pairs.block(static_cast<Eigen::Index>(i) * b + j, 0, 1, xs.cols()) = xs.row(i);
        pairs.block(static_cast<Eigen::Index>(i) * b + j, xs.cols(), 1, ys.cols()) =
            ys.row(j);
      }
    Tape::NodeId raw = mlp_forward(tape, critic.params, tape.constant(std::move(pairs)));
    log_scores = tape.reshape(detail::apply_form(tape, raw, critic.spec.form), b, b);
  } else {
    Tape::NodeId f = mlp_forward(tape, critic.params, tape.constant(xs), "f_");
    Tape::NodeId g = mlp_forward(tape, critic.params, tape.constant(ys), "g_");
    Tape::NodeId fn = tape.div_rowbroadcast(f, tape.row_l2norm(f));
    Tape::NodeId gn = tape.div_rowbroadcast(g, tape.row_l2norm(g));
    Tape::NodeId cos = tape.matmul_nt(fn, gn);
    Tape::NodeId raw = tape.scale(cos, 1.0 / critic.spec.temperature);
    log_scores = detail::apply_form(tape, raw, critic.spec.form);
  }
  if (!tape.val(log_scores).allFinite())
    throw NumericError("score_matrix: non-finite log-scores");
  return ScoreMatrix{b, log_scores};
}

// Log-scores of single inputs, B x 1: log r_theta(x_b). Joint critics take
// the bare x; a separable critic is reduced to its f tower and so needs
// embed_dim == 1.
inline Tape::NodeId score_single_log(Tape& tape, Critic& critic, const Mat& xs) {
  if (xs.rows() < 1 || xs.cols() != critic.spec.x_dim)
    throw DimensionError("score_single: feature width does not match critic");
  Tape::NodeId raw;
  if (critic.spec.kind == CriticKind::joint) {
    if (critic.spec.y_dim != 0)
      throw ContractError("score_single: joint critic must have y_dim == 0");
    raw = mlp_forward(tape, critic.params, tape.constant(xs));
  } else {
    if (critic.spec.embed_dim != 1)
      throw ContractError("score_single: separable critic needs embed_dim == 1");
    raw = tape.scale(mlp_forward(tape, critic.params, tape.constant(xs), "f_"),
                     1.0 / critic.spec.temperature);
  }
  Tape::NodeId out = detail::apply_form(tape, raw, critic.spec.form);
  if (!tape.val(out).allFinite())
    throw NumericError("score_single: non-finite log-scores");
  return out;
}

}  // namespace anchormi
