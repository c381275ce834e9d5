#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "anchormi/errors.hpp"
#include "anchormi/param_store.hpp"
#include "anchormi/tape.hpp"

namespace anchormi {

enum class Activation { relu };

// Fully connected net with relu hidden layers and a linear last layer.
// Weights are uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out));
// biases start at zero. Deterministic for a fixed seed.
inline ParamStore build_mlp(const std::vector<int>& layer_sizes,
                            Activation /*activation*/, std::uint64_t seed,
                            const std::string& name_prefix = "") {
  if (layer_sizes.size() < 2)
    throw ConfigError("build_mlp: need at least input and output sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw ConfigError("build_mlp: layer sizes must be positive");

  ParamStore store;
  store.rng_seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
    double s = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-s, s);
    Mat w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
    store.add(name_prefix + "W" + std::to_string(l), std::move(w));
    store.add(name_prefix + "b" + std::to_string(l), Mat::Zero(1, fan_out));
  }
  return store;
}

// Applies the layers named `prefix(W|b)0..L-1` in `store` to `input`.
inline Tape::NodeId mlp_forward(Tape& tape, ParamStore& store,
                                Tape::NodeId input,
                                const std::string& name_prefix = "") {
  int n_layers = 0;
  while (true) {
    bool found = false;
    for (const auto& e : store.entries)
      if (e.name == name_prefix + "W" + std::to_string(n_layers)) found = true;
    if (!found) break;
    ++n_layers;
  }
  if (n_layers == 0) throw ContractError("mlp_forward: no layers under prefix");

  Tape::NodeId h = input;
  for (int l = 0; l < n_layers; ++l) {
    int wi = store.index_of(name_prefix + "W" + std::to_string(l));
    int bi = store.index_of(name_prefix + "b" + std::to_string(l));
    if (tape.val(h).cols() != store.entries[wi].value.rows())
      throw DimensionError("mlp_forward: input width does not match layer " +
                           std::to_string(l));
    h = tape.add_rowvec(tape.matmul(h, tape.param(store, wi)),
                        tape.param(store, bi));
    if (l + 1 < n_layers) h = tape.relu(h);
  }
  return h;
}

// Convenience single-shot forward matching the (output, tape) contract.
inline std::pair<Mat, Tape> forward(ParamStore& store, const Mat& input,
                                    const std::string& name_prefix = "") {
  Tape tape;
  Tape::NodeId out = mlp_forward(tape, store, tape.constant(input), name_prefix);
  Mat value = tape.val(out);
  return {std::move(value), std::move(tape)};
}

}  // namespace anchormi
