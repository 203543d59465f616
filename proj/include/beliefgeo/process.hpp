#pragma once

#include "beliefgeo/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace beliefgeo {

// A generative process in transition-operator form: T_y(i,j) is the joint
// probability (or signed weight, for generalized HMMs) of emitting y and
// moving i -> j. The Bayes filter is b' = b^T T_y / (b^T T_y 1).
struct ProcessSpec {
  std::string name;
  int n_states = 0;
  int n_symbols = 0;
  std::vector<Matd> transition_ops;
  Vecd initial_belief;
  bool is_hmm = true;  // entries >= 0 and sum_y T_y row-stochastic

  void validate() const;
};

struct BeliefPoint {
  Vecd w;
};

// Canonical Mess3: self-transition a (rest split evenly), emission of the own
// symbol with probability 1-2x and of each other symbol with probability x.
// The filter state lives on the 2-simplex.
ProcessSpec mess3_spec(double x, double a);

// Bloch-walk generalized HMM: a qubit is weakly measured in the Z or X basis
// (strength beta/2, basis chosen with probability 1/2 each, four outcome
// symbols) and then rotated about the y axis by alpha. States are tracked as
// tetrahedral-POVM probability 4-vectors, which keeps the filter non-negative
// while the transition operators carry signed entries.
ProcessSpec tom_quantum_spec(double alpha, double beta);

// p_y = b^T T_y 1 for every symbol; clamps float round-off below zero.
Vecd emission_probs(const ProcessSpec& spec, const Vecd& b);

// One Bayes-filter step. Throws FilterError when the observed symbol has zero
// probability under the current belief.
BeliefPoint belief_update(const ProcessSpec& spec, const BeliefPoint& b, int symbol);

// Left eigenvector of sum_y T_y at eigenvalue 1, normalized to sum 1.
Vecd stationary_belief(const ProcessSpec& spec);

struct CompositeSpec {
  std::vector<ProcessSpec> components;
  std::vector<int> radices;

  int vocab() const;
  // mixed-radix, most-significant component first
  int encode(std::span<const int> symbols) const;
  std::vector<int> decode(int token) const;
  int belief_dim() const;  // sum of component state counts
};

CompositeSpec compose(std::vector<ProcessSpec> components);

// Streaming sampler with exact per-component belief tracking.
class CompositeSampler {
 public:
  CompositeSampler(const CompositeSpec& spec, Rng rng);

  int step();  // samples the next joint token and advances all filters
  void reset();
  const std::vector<Vecd>& beliefs() const { return beliefs_; }
  // concatenated component beliefs, dimension spec.belief_dim()
  Vecd belief_concat() const;

 private:
  const CompositeSpec* spec_;
  Rng rng_;
  std::vector<Vecd> beliefs_;
  long t_ = 0;
};

struct PathSample {
  std::vector<int> tokens;
  // beliefs[t] = exact filter state after observing tokens[0..t], flattened
  // per component
  std::vector<std::vector<Vecd>> beliefs;
};

PathSample sample_path(const CompositeSpec& spec, int length, std::uint64_t seed);

// The five-component multipartite process of the toy setup.
struct ComponentParams {
  std::vector<std::pair<double, double>> tom_quantum;  // (alpha, beta)
  std::vector<std::pair<double, double>> mess3;        // (x, a)
};

CompositeSpec multipartite_spec(const ComponentParams& params);

}  // namespace beliefgeo
