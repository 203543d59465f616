#pragma once

// Central finite-difference oracle for gradient verification. Lives in test
// code only; it never reuses the analytic backward path it checks.

#include "beliefgeo/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace gradcheck {

using beliefgeo::Matd;
using beliefgeo::nn::Graphd;
using ParamD = beliefgeo::nn::Parameter<double>;

struct Result {
  double max_rel_err = 0.0;
  long n_checked = 0;
};

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
  return std::fabs(a - b) / denom;
}

// Compares analytic gradients of `loss` w.r.t. the given input nodes and
// parameters against central finite differences at step `eps`.
inline Result check(Graphd& g, int loss, const std::vector<int>& input_nodes,
                    const std::vector<ParamD*>& params, double eps = 1e-5) {
  Result res;
  g.forward();
  for (ParamD* p : params) p->zero_grad();
  g.backward(loss);

  std::vector<Matd> analytic_inputs;
  analytic_inputs.reserve(input_nodes.size());
  for (int id : input_nodes) analytic_inputs.push_back(g.gradient(id));
  std::vector<Matd> analytic_params;
  analytic_params.reserve(params.size());
  for (ParamD* p : params) analytic_params.push_back(p->grad);

  const auto probe = [&](double& cell) {
    const double keep = cell;
    cell = keep + eps;
    g.forward();
    const double up = g.scalar(loss);
    cell = keep - eps;
    g.forward();
    const double down = g.scalar(loss);
    cell = keep;
    return (up - down) / (2.0 * eps);
  };

  for (std::size_t s = 0; s < input_nodes.size(); ++s) {
    Matd value = g.value(input_nodes[s]);
    for (long i = 0; i < value.size(); ++i) {
      const double keep = value.data()[i];
      value.data()[i] = keep + eps;
      g.set_input(input_nodes[s], value);
      g.forward();
      const double up = g.scalar(loss);
      value.data()[i] = keep - eps;
      g.set_input(input_nodes[s], value);
      g.forward();
      const double down = g.scalar(loss);
      value.data()[i] = keep;
      g.set_input(input_nodes[s], value);
      const double fd = (up - down) / (2.0 * eps);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic_inputs[s].data()[i], fd));
      res.n_checked += 1;
    }
  }
  for (std::size_t s = 0; s < params.size(); ++s) {
    ParamD* p = params[s];
    for (long i = 0; i < p->value.size(); ++i) {
      const double fd = probe(p->value.data()[i]);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(analytic_params[s].data()[i], fd));
      res.n_checked += 1;
    }
  }
  g.forward();  // restore clean state
  return res;
}

}  // namespace gradcheck
