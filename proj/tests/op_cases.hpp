#pragma once

// Randomized per-op graph builders shared by the unit gradient checks and the
// acceptance suite.

#include "beliefgeo/nn/graph.hpp"

#include <memory>
#include <string>
#include <vector>

namespace op_cases {

using beliefgeo::Matd;
using beliefgeo::Rng;
using beliefgeo::nn::Graphd;
using ParamD = beliefgeo::nn::Parameter<double>;

struct Case {
  Graphd g;
  int loss = -1;
  std::vector<int> inputs;  // input node ids to perturb
  std::vector<std::unique_ptr<ParamD>> owned;
  std::vector<ParamD*> params;
};

inline Matd random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Matd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = scale * rng.normal();
  return m;
}

// Values bounded away from zero, for ops with kinks at the origin.
inline Matd random_mat_off_zero(Rng& rng, int r, int c, double min_abs = 0.1) {
  Matd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      m(i, j) = sign * (min_abs + rng.uniform());
    }
  return m;
}

inline const std::vector<std::string>& op_list() {
  static const std::vector<std::string> ops = {
      "matmul", "add",  "add_row_bias", "mul",       "scale",
      "layer_norm", "softmax", "gelu", "relu", "topk", "append_zero_col",
      "causal_attention", "embedding", "softmax_cross_entropy", "mse",
      "simplex_penalty", "mlp3"};
  return ops;
}

inline Case make(const std::string& op, Rng& rng) {
  Case c;
  Graphd& g = c.g;
  const auto in = [&](const Matd& m) {
    int id = g.input(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
    g.set_input(id, m);
    c.inputs.push_back(id);
    return id;
  };
  const auto par = [&](Matd m) {
    c.owned.push_back(std::make_unique<ParamD>("p", std::move(m)));
    c.params.push_back(c.owned.back().get());
    return g.param(*c.owned.back());
  };
  // reduce a matrix node to a scalar loss against a fixed random target
  const auto reduce = [&](int node) {
    Matd target = random_mat(rng, g.rows(node), g.cols(node));
    int t = g.input(static_cast<int>(target.rows()), static_cast<int>(target.cols()));
    g.set_input(t, target);
    return g.mse(node, t);
  };
  const auto dim = [&](int lo, int hi) { return lo + rng.index(hi - lo + 1); };

  if (op == "matmul") {
    const int m = dim(1, 5), k = dim(1, 5), n = dim(1, 5);
    c.loss = reduce(g.matmul(in(random_mat(rng, m, k)), par(random_mat(rng, k, n))));
  } else if (op == "add") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.add(in(random_mat(rng, m, n)), in(random_mat(rng, m, n))));
  } else if (op == "add_row_bias") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.add_row_bias(in(random_mat(rng, m, n)), par(random_mat(rng, 1, n))));
  } else if (op == "mul") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.mul(in(random_mat(rng, m, n)), in(random_mat(rng, m, n))));
  } else if (op == "scale") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.scale(in(random_mat(rng, m, n)), rng.uniform(-2.0, 2.0)));
  } else if (op == "layer_norm") {
    const int m = dim(1, 5), n = dim(2, 8);
    c.loss = reduce(g.layer_norm(in(random_mat(rng, m, n)), par(random_mat_off_zero(rng, 1, n)),
                                 par(random_mat(rng, 1, n))));
  } else if (op == "softmax") {
    const int m = dim(1, 5), n = dim(2, 8);
    c.loss = reduce(g.softmax(in(random_mat(rng, m, n))));
  } else if (op == "gelu") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.gelu(in(random_mat(rng, m, n))));
  } else if (op == "relu") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.relu(in(random_mat_off_zero(rng, m, n))));
  } else if (op == "topk") {
    const int m = dim(1, 4), n = dim(3, 8), k = dim(1, n - 1);
    // well-separated magnitudes so the finite-difference step cannot flip
    // the selected set
    Matd x(m, n);
    for (int i = 0; i < m; ++i) {
      std::vector<int> perm = rng.permutation(n);
      for (int j = 0; j < n; ++j) {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        x(i, perm[j]) = sign * (0.5 + static_cast<double>(j));
      }
    }
    c.loss = reduce(g.topk(in(x), k));
  } else if (op == "append_zero_col") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = reduce(g.append_zero_col(in(random_mat(rng, m, n))));
  } else if (op == "causal_attention") {
    const int B = dim(1, 2), T = dim(2, 4), H = dim(1, 2), dh = dim(2, 3);
    const int d = H * dh;
    c.loss = reduce(g.causal_attention(in(random_mat(rng, B * T, d)), in(random_mat(rng, B * T, d)),
                                       in(random_mat(rng, B * T, d)), H, T));
  } else if (op == "embedding") {
    const int V = dim(3, 8), d = dim(2, 5), N = dim(2, 6);
    std::vector<int> ids(N);
    for (int& id : ids) id = rng.index(V);  // repeats exercise scatter-add
    c.loss = reduce(g.embedding(par(random_mat(rng, V, d)), ids));
  } else if (op == "softmax_cross_entropy") {
    const int m = dim(1, 5), V = dim(2, 9);
    std::vector<int> t(m);
    for (int& v : t) v = rng.index(V);
    c.loss = g.softmax_cross_entropy(in(random_mat(rng, m, V)), t);
  } else if (op == "mse") {
    const int m = dim(1, 5), n = dim(1, 6);
    c.loss = g.mse(in(random_mat(rng, m, n)), in(random_mat(rng, m, n)));
  } else if (op == "simplex_penalty") {
    const int m = dim(1, 5), n = dim(2, 6);
    c.loss = g.simplex_penalty(in(random_mat_off_zero(rng, m, n)), rng.uniform(0.5, 1.5),
                               rng.uniform(0.5, 1.5));
  } else if (op == "mlp3") {
    const int B = dim(2, 4), d0 = dim(2, 5), d1 = dim(2, 5), d2 = dim(2, 5), d3 = dim(2, 4);
    int x = in(random_mat(rng, B, d0));
    int h1 = g.gelu(g.add_row_bias(g.matmul(x, par(random_mat(rng, d0, d1))), par(random_mat(rng, 1, d1))));
    int h2 = g.gelu(g.add_row_bias(g.matmul(h1, par(random_mat(rng, d1, d2))), par(random_mat(rng, 1, d2))));
    int h3 = g.add_row_bias(g.matmul(h2, par(random_mat(rng, d2, d3))), par(random_mat(rng, 1, d3)));
    std::vector<int> t(B);
    for (int& v : t) v = rng.index(d3);
    c.loss = g.softmax_cross_entropy(h3, t);
  } else {
    throw std::runtime_error("unknown op case: " + op);
  }
  return c;
}

}  // namespace op_cases
