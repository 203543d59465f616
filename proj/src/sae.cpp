#include "beliefgeo/sae.hpp"

#include "beliefgeo/binio.hpp"
#include "beliefgeo/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace beliefgeo {

using nn::Graphf;
using nn::Parameter;

void SaeConfig::validate() const {
  BG_CHECK(d_sae >= 1 && k >= 1, "SaeConfig: d_sae and k must be positive");
  BG_CHECK(k <= d_sae, "SaeConfig: k must not exceed d_sae");
  BG_CHECK(steps >= 1 && batch >= 1, "SaeConfig: training knobs must be positive");
  BG_CHECK(heldout_fraction > 0.0 && heldout_fraction < 1.0, "SaeConfig: heldout fraction in (0,1)");
}

SaeModel::SaeModel(int d_model, SaeConfig cfg, std::uint64_t seed) {
  cfg.validate();
  cfg_ = cfg;
  Rng rng = rng_stream(seed, "sae-init");
  w_dec_.resize(cfg.d_sae, d_model);
  for (int i = 0; i < cfg.d_sae; ++i) {
    for (int j = 0; j < d_model; ++j) w_dec_(i, j) = static_cast<float>(rng.normal());
    w_dec_.row(i).normalize();
  }
  w_enc_ = w_dec_.transpose();
  b_enc_ = Vec<float>::Zero(cfg.d_sae);
  b_dec_ = Vec<float>::Zero(d_model);
  mean_ = Vec<float>::Zero(d_model);
  scale_ = 1.0f;
}

SaeModel SaeModel::from_weights(Matf w_enc, Vec<float> b_enc, Matf w_dec, Vec<float> b_dec, int k,
                                Vec<float> mean, float scale) {
  BG_CHECK(w_enc.rows() == w_dec.cols() && w_enc.cols() == w_dec.rows(),
           "SaeModel: encoder/decoder shapes must be transposes");
  SaeModel m;
  m.cfg_.d_sae = static_cast<int>(w_dec.rows());
  m.cfg_.k = k;
  m.cfg_.validate();
  m.w_enc_ = std::move(w_enc);
  m.b_enc_ = std::move(b_enc);
  m.w_dec_ = std::move(w_dec);
  m.b_dec_ = std::move(b_dec);
  m.mean_ = std::move(mean);
  m.scale_ = scale;
  return m;
}

SaeMetrics SaeModel::train(const Matf& rows, std::uint64_t seed) {
  const int d = d_model();
  BG_CHECK(rows.cols() == d, "sae train: row width must equal d_model");
  BG_CHECK(rows.rows() >= cfg_.batch, "sae train: need at least one batch of rows");
  Rng rng = rng_stream(seed, "sae-train");

  // split, then fit the normalization on training rows only
  std::vector<int> order = rng.permutation(static_cast<int>(rows.rows()));
  const long n_held = std::max<long>(1, static_cast<long>(rows.rows() * cfg_.heldout_fraction));
  const long n_train = rows.rows() - n_held;
  BG_CHECK(n_train >= cfg_.batch, "sae train: too few training rows after the held-out split");

  Matf train_raw(n_train, d), held_raw(n_held, d);
  for (long i = 0; i < n_train; ++i) train_raw.row(i) = rows.row(order[i]);
  for (long i = 0; i < n_held; ++i) held_raw.row(i) = rows.row(order[n_train + i]);

  mean_ = train_raw.colwise().mean().transpose();
  Matf centered = train_raw.rowwise() - mean_.transpose();
  const double mean_norm = centered.rowwise().norm().mean();
  scale_ = static_cast<float>(1.0 / std::max(1e-12, mean_norm));
  Matf train_z = centered * scale_;
  Matf held_z = (held_raw.rowwise() - mean_.transpose()) * scale_;

  Parameter<float> p_wenc("w_enc", w_enc_);
  Parameter<float> p_benc("b_enc", Matf(b_enc_.transpose()), false);
  Parameter<float> p_wdec("w_dec", w_dec_);
  Parameter<float> p_bdec("b_dec", Matf(b_dec_.transpose()), false);
  std::vector<Parameter<float>*> ps = {&p_wenc, &p_benc, &p_wdec, &p_bdec};

  Graphf g;
  const int z_in = g.input(cfg_.batch, d, "z");
  const int wenc = g.param(p_wenc);
  const int benc = g.param(p_benc);
  const int wdec = g.param(p_wdec);
  const int bdec = g.param(p_bdec);
  const int neg_bdec = g.scale(bdec, -1.0f);
  const int zc = g.add_row_bias(z_in, neg_bdec);
  const int pre = g.add_row_bias(g.matmul(zc, wenc), benc);
  const int latents = g.topk(pre, cfg_.k);
  const int recon = g.add_row_bias(g.matmul(latents, wdec), bdec);
  const int loss = g.mse(recon, z_in);

  nn::AdamWConfig opt;
  opt.lr = cfg_.lr;
  opt.weight_decay = 0.0;

  SaeMetrics metrics;
  Matf batch(cfg_.batch, d);
  std::vector<int> last_active(cfg_.d_sae, 0);
  for (int step = 0; step < cfg_.steps; ++step) {
    for (int b = 0; b < cfg_.batch; ++b) batch.row(b) = train_z.row(rng.below(n_train));
    g.set_input(z_in, batch);
    g.forward();
    metrics.train_loss = g.scalar(loss);
    if (!std::isfinite(metrics.train_loss)) {
      throw NumericalError("sae training diverged at step " + std::to_string(step));
    }
    for (auto* p : ps) p->zero_grad();
    g.backward(loss);
    nn::adamw_step<float>(ps, opt);
    // decoder rows live on the unit sphere
    for (int i = 0; i < cfg_.d_sae; ++i) {
      const float nrm = p_wdec.value.row(i).norm();
      if (nrm > 1e-12f) p_wdec.value.row(i) /= nrm;
    }

    // track usage; revive latents that have gone quiet from the worst
    // reconstructed row of the current batch
    const Matf& f = g.value(latents);
    for (int b = 0; b < cfg_.batch; ++b)
      for (int i = 0; i < cfg_.d_sae; ++i)
        if (f(b, i) != 0.0f) last_active[i] = step;
    if (step >= cfg_.dead_after_steps && (step % 250) == 0) {
      const Matf& rec = g.value(recon);
      int worst = 0;
      float worst_err = -1.0f;
      for (int b = 0; b < cfg_.batch; ++b) {
        const float err = (rec.row(b) - batch.row(b)).squaredNorm();
        if (err > worst_err) {
          worst_err = err;
          worst = b;
        }
      }
      for (int i = 0; i < cfg_.d_sae; ++i) {
        if (step - last_active[i] < cfg_.dead_after_steps) continue;
        Vec<float> dir = (batch.row(worst) - rec.row(worst)).transpose();
        const float nrm = dir.norm();
        if (nrm < 1e-12f) break;
        dir /= nrm;
        p_wdec.value.row(i) = dir.transpose();
        p_wenc.value.col(i) = 0.1f * dir;
        p_benc.value(0, i) = 0.0f;
        p_wdec.m.row(i).setZero();
        p_wdec.v.row(i).setZero();
        p_wenc.m.col(i).setZero();
        p_wenc.v.col(i).setZero();
        p_benc.m(0, i) = 0.0f;
        p_benc.v(0, i) = 0.0f;
        last_active[i] = step;
        metrics.reinits += 1;
      }
    }
  }

  w_enc_ = p_wenc.value;
  b_enc_ = p_benc.value.row(0).transpose();
  w_dec_ = p_wdec.value;
  b_dec_ = p_bdec.value.row(0).transpose();

  // held-out evaluation in normalized space
  Matf f_held = Matf::Zero(n_held, cfg_.d_sae);
  for (long r = 0; r < n_held; ++r) {
    Vec<float> pre_r = (w_enc_.transpose() * (held_z.row(r).transpose() - b_dec_)) + b_enc_;
    Vec<float> keys = pre_r;  // unit decoder norms
    std::vector<int> idx(cfg_.d_sae);
    std::iota(idx.begin(), idx.end(), 0);
    const int keep = std::min(cfg_.k, cfg_.d_sae);
    std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), [&](int a, int b) {
      if (keys[a] != keys[b]) return keys[a] > keys[b];
      return a < b;
    });
    for (int t = 0; t < keep; ++t)
      if (pre_r[idx[t]] != 0.0f) f_held(r, idx[t]) = pre_r[idx[t]];
  }
  Matf recon_held = (f_held * w_dec_).rowwise() + b_dec_.transpose();
  metrics.heldout_loss = (recon_held - held_z).squaredNorm() / static_cast<double>(held_z.size());
  const double ss_res = (recon_held - held_z).squaredNorm();
  Matf hc = held_z.rowwise() - held_z.colwise().mean();
  metrics.relative_heldout_error = ss_res / std::max(1e-12, static_cast<double>(hc.squaredNorm()));
  int dead = 0;
  for (int i = 0; i < cfg_.d_sae; ++i) {
    if ((f_held.col(i).array() != 0.0f).count() == 0) ++dead;
  }
  metrics.dead_fraction = static_cast<double>(dead) / cfg_.d_sae;
  return metrics;
}

Vec<float> SaeModel::encode(const Vec<float>& x) const {
  BG_CHECK(x.size() == d_model(), "encode: input width must equal d_model");
  BG_CHECK(x.allFinite(), "encode: input must be finite");
  const Vec<float> z = normalize(x);
  Vec<float> pre = (w_enc_.transpose() * (z - b_dec_)) + b_enc_;
  Vec<float> out = Vec<float>::Zero(cfg_.d_sae);
  std::vector<int> idx;
  idx.reserve(cfg_.d_sae);
  for (int i = 0; i < cfg_.d_sae; ++i)
    if (pre[i] != 0.0f) idx.push_back(i);
  const int keep = std::min<int>(cfg_.k, static_cast<int>(idx.size()));
  // selection key: preactivation scaled by decoder row norm, so that
  // decoder renormalization plus inverse encoder rescaling is behavior
  // preserving
  std::partial_sort(idx.begin(), idx.begin() + keep, idx.end(), [&](int a, int b) {
    const float ka = pre[a] * w_dec_.row(a).norm();
    const float kb = pre[b] * w_dec_.row(b).norm();
    if (ka != kb) return ka > kb;
    return a < b;
  });
  for (int t = 0; t < keep; ++t) out[idx[t]] = pre[idx[t]];
  return out;
}

Matf SaeModel::encode_rows(const Matf& X) const {
  Matf out(X.rows(), cfg_.d_sae);
  for (long r = 0; r < X.rows(); ++r) out.row(r) = encode(X.row(r).transpose()).transpose();
  return out;
}

Vec<float> SaeModel::decode_normalized(const Vec<float>& f) const {
  return (f.transpose() * w_dec_).transpose() + b_dec_;
}

Vec<float> SaeModel::decode(const Vec<float>& f) const {
  return decode_normalized(f) / scale_ + mean_;
}

Vec<float> SaeModel::cluster_contribution(const Vec<float>& f, std::span<const int> cluster) const {
  BG_CHECK(f.size() == cfg_.d_sae, "cluster_contribution: latent width mismatch");
  Vec<float> out = Vec<float>::Zero(d_model());
  for (int i : cluster) {
    BG_CHECK(i >= 0 && i < cfg_.d_sae, "cluster_contribution: latent index out of range");
    if (f[i] != 0.0f) out += f[i] * w_dec_.row(i).transpose();
  }
  return out;
}

Matf SaeModel::decoder_directions() const {
  Matf dirs = w_dec_;
  for (long i = 0; i < dirs.rows(); ++i) {
    const float nrm = dirs.row(i).norm();
    if (nrm > 1e-12f) dirs.row(i) /= nrm;
  }
  return dirs;
}

void SaeModel::rescale_latent(int i, float s) {
  BG_CHECK(i >= 0 && i < cfg_.d_sae, "rescale_latent: index out of range");
  BG_CHECK(s != 0.0f, "rescale_latent: scale must be nonzero");
  w_dec_.row(i) /= s;
  w_enc_.col(i) *= s;
  b_enc_[i] *= s;
}

void SaeModel::save(const std::string& path) const {
  std::ofstream os = binio::open_out(path);
  binio::write_magic(os, "BGSA");
  binio::write_pod<std::uint32_t>(os, 1);
  binio::write_pod<std::int32_t>(os, d_model());
  binio::write_pod<std::int32_t>(os, cfg_.d_sae);
  binio::write_pod<std::int32_t>(os, cfg_.k);
  binio::write_pod<float>(os, scale_);
  binio::write_mat<float>(os, Matf(mean_.transpose()));
  binio::write_mat<float>(os, w_enc_);
  binio::write_mat<float>(os, Matf(b_enc_.transpose()));
  binio::write_mat<float>(os, w_dec_);
  binio::write_mat<float>(os, Matf(b_dec_.transpose()));
}

SaeModel SaeModel::load(const std::string& path) {
  std::ifstream is = binio::open_in(path);
  binio::expect_magic(is, "BGSA", "sae checkpoint");
  const auto version = binio::read_pod<std::uint32_t>(is);
  if (version != 1) throw FormatError("sae checkpoint: unsupported version");
  SaeModel m;
  const int d_model = binio::read_pod<std::int32_t>(is);
  m.cfg_.d_sae = binio::read_pod<std::int32_t>(is);
  m.cfg_.k = binio::read_pod<std::int32_t>(is);
  m.scale_ = binio::read_pod<float>(is);
  m.mean_ = binio::read_mat<float>(is).row(0).transpose();
  m.w_enc_ = binio::read_mat<float>(is);
  m.b_enc_ = binio::read_mat<float>(is).row(0).transpose();
  m.w_dec_ = binio::read_mat<float>(is);
  m.b_dec_ = binio::read_mat<float>(is).row(0).transpose();
  if (m.w_enc_.rows() != d_model || m.w_dec_.cols() != d_model) {
    throw FormatError("sae checkpoint: inconsistent dimensions");
  }
  return m;
}

}  // namespace beliefgeo
