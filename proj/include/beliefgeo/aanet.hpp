#pragma once

#include "beliefgeo/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace beliefgeo {

struct AanetConfig {
  int hidden1 = 256;
  int hidden2 = 128;
  int steps = 10000;
  int batch = 64;
  double lr = 1e-3;
  double lambda1 = 1.0;  // simplex penalty weight
  double lambda2 = 1.0;  // non-negativity penalty weight
  int restarts = 5;
  double val_fraction = 0.1;
  int eval_every = 300;
  int patience_steps = 1500;  // stop when validation stops improving
  double elbow_theta = 0.15;

  void validate() const;
};

// Archetypal autoencoder: encoder to a (K-1)-dim bottleneck extended with a
// fixed zero logit, softmax onto the simplex, decoder back to data space.
// Archetypes are the decoder images of the one-hot barycentric points.
class SimplexFit {
 public:
  int K() const { return k_; }
  int data_dim() const { return static_cast<int>(enc_w1_.rows()); }
  int chosen_restart() const { return chosen_restart_; }
  double val_loss() const { return restart_val_losses_[chosen_restart_]; }
  const std::vector<double>& restart_val_losses() const { return restart_val_losses_; }
  const Matf& archetypes() const { return archetypes_; }  // [K x d]

  Vec<float> barycentric(const Vec<float>& x) const;  // non-negative, sums to 1
  Matf barycentric_rows(const Matf& X) const;
  Vec<float> decode_barycentric(const Vec<float>& bary) const;
  Vec<float> vertex_delta(int v_from, int v_to) const;

  void save(const std::string& path) const;
  static SimplexFit load(const std::string& path);

 private:
  friend SimplexFit fit_aanet(const Matf&, int, const AanetConfig&, std::uint64_t);

  int k_ = 0;
  Matf enc_w1_, enc_w2_, enc_w3_;
  Vec<float> enc_b1_, enc_b2_, enc_b3_;
  Matf dec_w1_, dec_w2_, dec_w3_;
  Vec<float> dec_b1_, dec_b2_, dec_b3_;
  Matf archetypes_;
  std::vector<double> restart_val_losses_;
  int chosen_restart_ = -1;
};

// Trains `restarts` independent fits and returns the one with the lowest
// validation reconstruction loss. Restarts whose loss diverges are marked
// failed (NaN in restart_val_losses); all restarts failing is an error.
SimplexFit fit_aanet(const Matf& X, int K, const AanetConfig& cfg, std::uint64_t seed);

// Mean-across-restarts validation loss used by the K sweep.
double fit_aanet_mean_loss(const Matf& X, int K, const AanetConfig& cfg, std::uint64_t seed,
                           std::optional<SimplexFit>* best_fit = nullptr);

struct ElbowCurve {
  std::vector<int> ks;
  std::vector<double> mean_losses;  // NaN for failed K
  int k_star = -1;                  // -1 = none
};

// Max normalized discrete second difference, accepted at threshold theta;
// K*=2 maps to none.
int detect_elbow(const std::vector<int>& ks, const std::vector<double>& losses, double theta);

ElbowCurve sweep_k(const Matf& X, const std::vector<int>& ks, const AanetConfig& cfg,
                   std::uint64_t seed);

}  // namespace beliefgeo
