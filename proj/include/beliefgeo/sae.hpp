#pragma once

#include "beliefgeo/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace beliefgeo {

struct SaeConfig {
  int d_sae = 256;
  int k = 12;
  int steps = 20000;
  int batch = 256;
  double lr = 1e-3;
  int dead_after_steps = 2000;  // reinitialize latents inactive this long
  double heldout_fraction = 0.1;

  void validate() const;
};

struct SaeMetrics {
  double train_loss = 0.0;          // mean squared error, normalized space
  double heldout_loss = 0.0;
  double relative_heldout_error = 0.0;  // sum residual^2 / sum centered^2
  double dead_fraction = 0.0;       // latents never active on held-out rows
  int reinits = 0;
};

// TopK sparse autoencoder over residual activations. Inputs are normalized
// (centered by the training mean, scaled to unit mean L2 norm); decoder rows
// are kept at unit norm throughout training.
class SaeModel {
 public:
  SaeModel(int d_model, SaeConfig cfg, std::uint64_t seed);

  static SaeModel from_weights(Matf w_enc, Vec<float> b_enc, Matf w_dec, Vec<float> b_dec,
                               int k, Vec<float> mean, float scale);

  SaeMetrics train(const Matf& rows, std::uint64_t seed);

  // TopK latent vector for one raw activation; selection key is the
  // preactivation scaled by the decoder row norm, ties broken toward the
  // lowest index, exact-zero preactivations never selected.
  Vec<float> encode(const Vec<float>& x) const;
  Matf encode_rows(const Matf& X) const;

  Vec<float> decode(const Vec<float>& f) const;             // back to raw space
  Vec<float> decode_normalized(const Vec<float>& f) const;  // f W_dec + b_dec

  // f restricted to `cluster` times W_dec; excludes b_dec. Empty cluster
  // yields the zero vector.
  Vec<float> cluster_contribution(const Vec<float>& f, std::span<const int> cluster) const;

  // decoder directions normalized to unit L2 norm, [d_sae x d_model]
  Matf decoder_directions() const;

  // multiplies latent i by s while rescaling decoder/encoder inversely;
  // the encode-decode map is unchanged
  void rescale_latent(int i, float s);

  int d_model() const { return static_cast<int>(w_enc_.rows()); }
  int d_sae() const { return cfg_.d_sae; }
  int k() const { return cfg_.k; }
  const SaeConfig& config() const { return cfg_; }
  const Matf& w_enc() const { return w_enc_; }
  const Vec<float>& b_enc() const { return b_enc_; }
  const Matf& w_dec() const { return w_dec_; }
  const Vec<float>& b_dec() const { return b_dec_; }
  const Vec<float>& activation_mean() const { return mean_; }
  float activation_scale() const { return scale_; }

  // maps a direction in normalized space back to a residual-stream direction
  Vec<float> to_residual_direction(const Vec<float>& v) const { return v / scale_; }

  void save(const std::string& path) const;
  static SaeModel load(const std::string& path);

 private:
  SaeModel() = default;

  Vec<float> normalize(const Vec<float>& x) const { return (x - mean_) * scale_; }

  SaeConfig cfg_;
  Matf w_enc_;       // [d_model x d_sae]
  Vec<float> b_enc_;  // [d_sae]
  Matf w_dec_;       // [d_sae x d_model]
  Vec<float> b_dec_;  // [d_model]
  Vec<float> mean_;   // activation normalization
  float scale_ = 1.0f;
};

}  // namespace beliefgeo
