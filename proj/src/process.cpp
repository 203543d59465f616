#include "beliefgeo/process.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <complex>
#include <sstream>

namespace beliefgeo {

void ProcessSpec::validate() const {
  BG_CHECK(n_states >= 1 && n_symbols >= 1, "ProcessSpec: empty state or symbol set");
  BG_CHECK(static_cast<int>(transition_ops.size()) == n_symbols, "ProcessSpec: one operator per symbol");
  Matd total = Matd::Zero(n_states, n_states);
  for (const Matd& t : transition_ops) {
    BG_CHECK(t.rows() == n_states && t.cols() == n_states, "ProcessSpec: operator shape");
    if (is_hmm) BG_CHECK(t.minCoeff() >= 0.0, "ProcessSpec: HMM operators must be non-negative");
    total += t;
  }
  if (is_hmm) {
    for (int i = 0; i < n_states; ++i) {
      BG_CHECK(std::fabs(total.row(i).sum() - 1.0) < 1e-12, "ProcessSpec: sum_y T_y must be row-stochastic");
    }
  }
  BG_CHECK(initial_belief.size() == n_states, "ProcessSpec: initial belief size");
  BG_CHECK(std::fabs(initial_belief.sum() - 1.0) < 1e-9, "ProcessSpec: initial belief must sum to 1");
}

ProcessSpec mess3_spec(double x, double a) {
  BG_CHECK(x > 0.0 && x < 0.5, "mess3_spec: x must lie in (0, 1/2)");
  BG_CHECK(a > 0.0 && a < 1.0, "mess3_spec: a must lie in (0, 1)");
  Matd A = Matd::Constant(3, 3, (1.0 - a) / 2.0);
  A.diagonal().setConstant(a);
  Matd E = Matd::Constant(3, 3, x);  // E(i, y) = P(emit y | state i)
  E.diagonal().setConstant(1.0 - 2.0 * x);

  ProcessSpec spec;
  std::ostringstream name;
  name << "mess3(" << x << "," << a << ")";
  spec.name = name.str();
  spec.n_states = 3;
  spec.n_symbols = 3;
  for (int y = 0; y < 3; ++y) {
    Matd t(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) t(i, j) = E(i, y) * A(i, j);
    spec.transition_ops.push_back(std::move(t));
  }
  spec.initial_belief = Vecd::Constant(3, 1.0 / 3.0);
  spec.is_hmm = true;
  spec.validate();
  return spec;
}

namespace {

using C = std::complex<double>;
using M2 = Eigen::Matrix2cd;

// unit tetrahedron directions for the qubit SIC frame
const double kTet[4][3] = {
    {1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};

M2 bloch_projector(const double* t) {
  const double s = 1.0 / std::sqrt(3.0);
  M2 p;
  p << C(1.0 + s * t[2], 0.0), C(s * t[0], -s * t[1]),
       C(s * t[0], s * t[1]), C(1.0 - s * t[2], 0.0);
  return 0.5 * p;
}

}  // namespace

ProcessSpec tom_quantum_spec(double alpha, double beta) {
  const double theta = beta / 2.0;
  M2 id = M2::Identity();
  M2 mplus, mminus, had, rot;
  mplus << C(std::cos(theta), 0), C(0, 0), C(0, 0), C(std::sin(theta), 0);
  mminus << C(std::sin(theta), 0), C(0, 0), C(0, 0), C(std::cos(theta), 0);
  const double r = 1.0 / std::sqrt(2.0);
  had << C(r, 0), C(r, 0), C(r, 0), C(-r, 0);
  rot << C(std::cos(alpha / 2), 0), C(-std::sin(alpha / 2), 0),
         C(std::sin(alpha / 2), 0), C(std::cos(alpha / 2), 0);  // R_y(alpha)

  std::vector<M2> kraus;
  kraus.push_back(r * rot * mplus);
  kraus.push_back(r * rot * mminus);
  kraus.push_back(r * rot * had * mplus * had);
  kraus.push_back(r * rot * had * mminus * had);

  M2 completeness = M2::Zero();
  for (const M2& k : kraus) completeness += k.adjoint() * k;
  if (!(completeness - id).isZero(1e-12)) {
    throw ContractError("tom_quantum_spec: instrument is not trace-preserving");
  }

  // SIC POVM elements E_k and dual frame G_j: rho = sum_j p_j G_j with
  // p_j = tr(rho E_j); then T_y[j,k] = Re tr(K_y G_j K_y^dag E_k).
  std::vector<M2> povm, dual;
  for (const double* t : kTet) {
    M2 proj = bloch_projector(t);
    povm.push_back(0.5 * proj);
    dual.push_back(3.0 * proj - id);
  }

  ProcessSpec spec;
  std::ostringstream name;
  name << "tom_quantum(" << alpha << "," << beta << ")";
  spec.name = name.str();
  spec.n_states = 4;
  spec.n_symbols = 4;
  spec.is_hmm = false;
  for (const M2& k : kraus) {
    Matd t(4, 4);
    for (int j = 0; j < 4; ++j) {
      const M2 mapped = k * dual[j] * k.adjoint();
      for (int c = 0; c < 4; ++c) t(j, c) = (mapped * povm[c]).trace().real();
    }
    spec.transition_ops.push_back(std::move(t));
  }
  spec.initial_belief = stationary_belief(spec);
  if (!(spec.initial_belief.minCoeff() >= -1e-12)) {
    throw ContractError("tom_quantum_spec: stationary filter state is not normalizable");
  }
  spec.validate();
  return spec;
}

Vecd emission_probs(const ProcessSpec& spec, const Vecd& b) {
  Vecd p(spec.n_symbols);
  for (int y = 0; y < spec.n_symbols; ++y) {
    p[y] = std::max(0.0, (b.transpose() * spec.transition_ops[y]).sum());
  }
  return p;
}

BeliefPoint belief_update(const ProcessSpec& spec, const BeliefPoint& b, int symbol) {
  BG_CHECK(symbol >= 0 && symbol < spec.n_symbols, "belief_update: symbol out of range");
  Vecd u = (b.w.transpose() * spec.transition_ops[symbol]).transpose();
  const double norm = u.sum();
  if (!(norm > 1e-300)) {
    std::ostringstream msg;
    msg << "belief_update: symbol " << symbol << " has zero probability under the current belief of "
        << spec.name;
    throw FilterError(msg.str());
  }
  u /= norm;
  u = u.cwiseMax(0.0);  // clip float round-off
  u /= u.sum();
  return BeliefPoint{std::move(u)};
}

Vecd stationary_belief(const ProcessSpec& spec) {
  Matd total = Matd::Zero(spec.n_states, spec.n_states);
  for (const Matd& t : spec.transition_ops) total += t;
  Eigen::EigenSolver<Matd> es(total.transpose());
  int best = 0;
  double best_dist = std::numeric_limits<double>::max();
  for (int i = 0; i < spec.n_states; ++i) {
    const double d = std::abs(es.eigenvalues()[i] - C(1.0, 0.0));
    if (d < best_dist) {
      best_dist = d;
      best = i;
    }
  }
  BG_CHECK(best_dist < 1e-8, "stationary_belief: no eigenvalue-1 left eigenvector");
  Vecd pi = es.eigenvectors().col(best).real();
  const double s = pi.sum();
  BG_CHECK(std::fabs(s) > 1e-12, "stationary_belief: degenerate eigenvector");
  return pi / s;
}

int CompositeSpec::vocab() const {
  int v = 1;
  for (int r : radices) v *= r;
  return v;
}

int CompositeSpec::encode(std::span<const int> symbols) const {
  BG_CHECK(symbols.size() == radices.size(), "encode: symbol count mismatch");
  int token = 0;
  for (std::size_t i = 0; i < radices.size(); ++i) {
    BG_CHECK(symbols[i] >= 0 && symbols[i] < radices[i], "encode: symbol out of range");
    token = token * radices[i] + symbols[i];
  }
  return token;
}

std::vector<int> CompositeSpec::decode(int token) const {
  BG_CHECK(token >= 0 && token < vocab(), "decode: token out of range");
  std::vector<int> symbols(radices.size());
  for (std::size_t i = radices.size(); i-- > 0;) {
    symbols[i] = token % radices[i];
    token /= radices[i];
  }
  return symbols;
}

int CompositeSpec::belief_dim() const {
  int d = 0;
  for (const ProcessSpec& c : components) d += c.n_states;
  return d;
}

CompositeSpec compose(std::vector<ProcessSpec> components) {
  BG_CHECK(!components.empty(), "compose: component list must be non-empty");
  CompositeSpec spec;
  for (ProcessSpec& c : components) {
    c.validate();
    spec.radices.push_back(c.n_symbols);
  }
  spec.components = std::move(components);
  return spec;
}

CompositeSampler::CompositeSampler(const CompositeSpec& spec, Rng rng)
    : spec_(&spec), rng_(rng) {
  reset();
}

void CompositeSampler::reset() {
  beliefs_.clear();
  for (const ProcessSpec& c : spec_->components) beliefs_.push_back(c.initial_belief);
  t_ = 0;
}

int CompositeSampler::step() {
  std::vector<int> symbols(spec_->components.size());
  for (std::size_t i = 0; i < spec_->components.size(); ++i) {
    const ProcessSpec& c = spec_->components[i];
    const Vecd probs = emission_probs(c, beliefs_[i]);
    symbols[i] = rng_.categorical(probs);
    try {
      beliefs_[i] = belief_update(c, BeliefPoint{beliefs_[i]}, symbols[i]).w;
    } catch (const FilterError& e) {
      std::ostringstream msg;
      msg << e.what() << " (step " << t_ << ")";
      throw FilterError(msg.str());
    }
  }
  ++t_;
  return spec_->encode(symbols);
}

Vecd CompositeSampler::belief_concat() const {
  Vecd out(spec_->belief_dim());
  int at = 0;
  for (const Vecd& b : beliefs_) {
    out.segment(at, b.size()) = b;
    at += static_cast<int>(b.size());
  }
  return out;
}

PathSample sample_path(const CompositeSpec& spec, int length, std::uint64_t seed) {
  BG_CHECK(length >= 1, "sample_path: length must be >= 1");
  CompositeSampler sampler(spec, rng_stream(seed, "sample_path"));
  PathSample out;
  out.tokens.reserve(length);
  out.beliefs.reserve(length);
  for (int t = 0; t < length; ++t) {
    out.tokens.push_back(sampler.step());
    out.beliefs.push_back(sampler.beliefs());
  }
  return out;
}

CompositeSpec multipartite_spec(const ComponentParams& params) {
  std::vector<ProcessSpec> comps;
  for (const auto& [alpha, beta] : params.tom_quantum) comps.push_back(tom_quantum_spec(alpha, beta));
  for (const auto& [x, a] : params.mess3) comps.push_back(mess3_spec(x, a));
  return compose(std::move(comps));
}

}  // namespace beliefgeo
