#include "beliefgeo/transformer.hpp"

#include "beliefgeo/binio.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace beliefgeo {

using nn::AdamWConfig;
using nn::Graphf;
using nn::Parameter;

void LmConfig::validate() const {
  BG_CHECK(d_model > 0 && n_heads > 0 && n_layers > 0, "LmConfig: sizes must be positive");
  BG_CHECK(d_model % n_heads == 0, "LmConfig: d_model must be divisible by n_heads");
  BG_CHECK(context_length >= 2, "LmConfig: context_length must be >= 2");
  BG_CHECK(vocab >= 2, "LmConfig: vocab must be >= 2");
  BG_CHECK(batch >= 1 && steps >= 1, "LmConfig: training knobs must be positive");
}

SteerMode steer_mode_from_string(const std::string& s) {
  if (s == "type1") return SteerMode::kType1;
  if (s == "type2") return SteerMode::kType2;
  if (s == "type3") return SteerMode::kType3;
  throw ContractError("unknown steering mode: " + s);
}

std::string to_string(SteerMode m) {
  switch (m) {
    case SteerMode::kType1: return "type1";
    case SteerMode::kType2: return "type2";
    case SteerMode::kType3: return "type3";
  }
  return "?";
}

TransformerLM::TransformerLM(LmConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = rng_stream(seed, "lm-init");
  const int d = cfg_.d_model, h = 4 * cfg_.d_model;
  const auto uni = [&](int r, int c, int fan_in) { return nn::fan_in_init<float>(r, c, fan_in, rng); };

  add_param("tok_emb", uni(cfg_.vocab, d, d));
  add_param("pos_emb", uni(cfg_.context_length, d, d));
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add_param(p + "ln1.g", Matf::Ones(1, d), false);
    add_param(p + "ln1.b", Matf::Zero(1, d), false);
    add_param(p + "attn.wq", uni(d, d, d));
    add_param(p + "attn.bq", Matf::Zero(1, d), false);
    add_param(p + "attn.wk", uni(d, d, d));
    add_param(p + "attn.bk", Matf::Zero(1, d), false);
    add_param(p + "attn.wv", uni(d, d, d));
    add_param(p + "attn.bv", Matf::Zero(1, d), false);
    add_param(p + "attn.wo", uni(d, d, d));
    add_param(p + "attn.bo", Matf::Zero(1, d), false);
    add_param(p + "ln2.g", Matf::Ones(1, d), false);
    add_param(p + "ln2.b", Matf::Zero(1, d), false);
    add_param(p + "mlp.w1", uni(d, h, d));
    add_param(p + "mlp.b1", Matf::Zero(1, h), false);
    add_param(p + "mlp.w2", uni(h, d, h));
    add_param(p + "mlp.b2", Matf::Zero(1, d), false);
  }
  add_param("lnf.g", Matf::Ones(1, d), false);
  add_param("lnf.b", Matf::Zero(1, d), false);
  add_param("unembed.w", uni(d, cfg_.vocab, d));
  add_param("unembed.b", Matf::Zero(1, cfg_.vocab), false);
}

Parameter<float>& TransformerLM::add_param(const std::string& name, Matf init, bool decay) {
  params_.emplace_back(name, std::move(init), decay);
  return params_.back();
}

std::vector<Parameter<float>*> TransformerLM::param_ptrs() {
  std::vector<Parameter<float>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

TransformerLM::ForwardGraph TransformerLM::build_forward(int batch_sequences, bool with_loss) {
  const int T = cfg_.context_length, d = cfg_.d_model;
  const int n = batch_sequences * T;
  ForwardGraph f;
  f.batch = batch_sequences;
  Graphf& g = f.g;

  auto param_by_name = [&](const std::string& name) -> Parameter<float>& {
    for (auto& p : params_)
      if (p.name == name) return p;
    throw ContractError("missing parameter: " + name);
  };
  const auto P = [&](const std::string& name) { return g.param(param_by_name(name)); };

  std::vector<int> tok_ids(n, 0), pos_ids(n, 0);
  for (int i = 0; i < n; ++i) pos_ids[i] = i % T;
  f.tok_embed = g.embedding(P("tok_emb"), tok_ids);
  f.pos_embed = g.embedding(P("pos_emb"), pos_ids);
  int x = g.add(f.tok_embed, f.pos_embed);

  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    int norm1 = g.layer_norm(x, P(p + "ln1.g"), P(p + "ln1.b"));
    int q = g.add_row_bias(g.matmul(norm1, P(p + "attn.wq")), P(p + "attn.bq"));
    int k = g.add_row_bias(g.matmul(norm1, P(p + "attn.wk")), P(p + "attn.bk"));
    int v = g.add_row_bias(g.matmul(norm1, P(p + "attn.wv")), P(p + "attn.bv"));
    int att = g.causal_attention(q, k, v, cfg_.n_heads, T);
    int proj = g.add_row_bias(g.matmul(att, P(p + "attn.wo")), P(p + "attn.bo"));
    x = g.add(x, proj);
    int norm2 = g.layer_norm(x, P(p + "ln2.g"), P(p + "ln2.b"));
    int h1 = g.gelu(g.add_row_bias(g.matmul(norm2, P(p + "mlp.w1")), P(p + "mlp.b1")));
    int h2 = g.add_row_bias(g.matmul(h1, P(p + "mlp.w2")), P(p + "mlp.b2"));
    x = g.add(x, h2);
    const int steer = g.input(n, d, "steer");
    x = g.add(x, steer);
    f.steer.push_back(steer);
    f.residual.push_back(x);
  }

  int fin = g.layer_norm(x, P("lnf.g"), P("lnf.b"));
  f.logits = g.add_row_bias(g.matmul(fin, P("unembed.w")), P("unembed.b"));
  if (with_loss) {
    f.loss = g.softmax_cross_entropy(f.logits, std::vector<int>(n, 0));
  }
  return f;
}

namespace {

// n_seqs rows of length seq_len, each drawn from a fresh stationary start
std::vector<std::vector<int>> sample_token_rows(const CompositeSpec& spec, int n_seqs, int seq_len,
                                                Rng& rng) {
  std::vector<std::vector<int>> rows(n_seqs);
  for (auto& row : rows) {
    CompositeSampler sampler(spec, Rng(rng.bits()));
    row.resize(seq_len);
    for (int t = 0; t < seq_len; ++t) row[t] = sampler.step();
  }
  return rows;
}

}  // namespace

TrainMetrics TransformerLM::train(const CompositeSpec& spec, std::uint64_t seed) {
  BG_CHECK(spec.vocab() == cfg_.vocab, "train: composite vocabulary must match LmConfig.vocab");
  const int T = cfg_.context_length, B = cfg_.batch;
  Rng data_rng = rng_stream(seed, "lm-train-data");

  ForwardGraph tg = build_forward(B, true);
  std::vector<Parameter<float>*> ps = param_ptrs();

  TrainMetrics metrics;
  std::vector<int> tok_ids(B * T), targets(B * T);
  AdamWConfig opt;
  opt.beta1 = 0.9;
  opt.beta2 = 0.999;
  opt.eps = 1e-8;
  opt.weight_decay = cfg_.weight_decay;

  int step = 0;
  for (; step < cfg_.steps; ++step) {
    const auto rows = sample_token_rows(spec, B, T + 1, data_rng);
    for (int b = 0; b < B; ++b) {
      for (int t = 0; t < T; ++t) {
        tok_ids[b * T + t] = rows[b][t];
        targets[b * T + t] = rows[b][t + 1];
      }
    }
    tg.g.set_ids(tg.tok_embed, tok_ids);
    tg.g.set_ids(tg.loss, targets);
    try {
      tg.g.forward();
    } catch (const NumericalError& e) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": " << e.what();
      throw NumericalError(msg.str());
    }
    const double loss = tg.g.scalar(tg.loss);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": non-finite loss";
      throw NumericalError(msg.str());
    }
    if (step % 100 == 0) metrics.loss_curve.emplace_back(step, loss);
    metrics.final_loss = loss;

    for (auto* p : ps) p->zero_grad();
    tg.g.backward(tg.loss);
    opt.lr = cfg_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * step / cfg_.steps));
    nn::adamw_step<float>(ps, opt);

    if ((step + 1) % cfg_.eval_every == 0) {
      const double acc = heldout_accuracy(spec, cfg_.eval_sequences, seed + 1);
      metrics.accuracy_curve.emplace_back(step + 1, acc);
      if (cfg_.early_stop_accuracy > 0.0 && acc >= cfg_.early_stop_accuracy) {
        ++step;
        break;
      }
    }
  }
  metrics.steps_run = step;
  metrics.heldout_accuracy = heldout_accuracy(spec, cfg_.eval_sequences, seed + 1);
  return metrics;
}

double TransformerLM::heldout_accuracy(const CompositeSpec& spec, int n_sequences, std::uint64_t seed) {
  const int T = cfg_.context_length;
  Rng rng = rng_stream(seed, "lm-heldout");
  const int chunk = std::min(n_sequences, 50);
  ForwardGraph eg = build_forward(chunk, false);
  std::vector<int> tok_ids(chunk * T);
  long correct = 0, total = 0;
  int done = 0;
  while (done < n_sequences) {
    const int bsz = std::min(chunk, n_sequences - done);
    const auto rows = sample_token_rows(spec, chunk, T + 1, rng);
    for (int b = 0; b < chunk; ++b)
      for (int t = 0; t < T; ++t) tok_ids[b * T + t] = rows[b][t];
    eg.g.set_ids(eg.tok_embed, tok_ids);
    eg.g.forward();
    const Matf& lg = eg.g.value(eg.logits);
    for (int b = 0; b < bsz; ++b) {
      for (int t = 0; t < T; ++t) {
        int arg = 0;
        lg.row(b * T + t).maxCoeff(&arg);
        correct += (arg == rows[b][t + 1]);
        ++total;
      }
    }
    done += bsz;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

Matf TransformerLM::logits(std::span<const int> tokens) {
  const int T = cfg_.context_length;
  const int len = static_cast<int>(tokens.size());
  BG_CHECK(len >= 1 && len <= T, "logits: sequence length must be in [1, context_length]");
  ForwardGraph fg = build_forward(1, false);
  std::vector<int> tok_ids(T, 0);
  for (int t = 0; t < len; ++t) {
    BG_CHECK(tokens[t] >= 0 && tokens[t] < cfg_.vocab, "logits: token id out of range");
    tok_ids[t] = tokens[t];
  }
  fg.g.set_ids(fg.tok_embed, tok_ids);
  fg.g.forward();
  return fg.g.value(fg.logits).topRows(len);
}

Matf TransformerLM::residuals(std::span<const int> tokens, int layer) {
  BG_CHECK(layer >= 0 && layer < cfg_.n_layers, "residuals: layer out of range");
  const int T = cfg_.context_length;
  const int len = static_cast<int>(tokens.size());
  BG_CHECK(len >= 1 && len <= T, "residuals: sequence length must be in [1, context_length]");
  ForwardGraph fg = build_forward(1, false);
  std::vector<int> tok_ids(T, 0);
  for (int t = 0; t < len; ++t) tok_ids[t] = tokens[t];
  fg.g.set_ids(fg.tok_embed, tok_ids);
  fg.g.forward();
  return fg.g.value(fg.residual[layer]).topRows(len);
}

ResidualCapture TransformerLM::capture(const CompositeSpec& spec, int layer, int n_sequences,
                                       std::uint64_t seed) {
  BG_CHECK(layer >= 0 && layer < cfg_.n_layers, "capture: layer out of range");
  const int T = cfg_.context_length;
  const int bdim = spec.belief_dim();
  Rng rng = rng_stream(seed, "lm-capture");

  ResidualCapture cap;
  cap.layer = layer;
  cap.vectors.resize(static_cast<long>(n_sequences) * T, cfg_.d_model);
  cap.beliefs.resize(static_cast<long>(n_sequences) * T, bdim);
  cap.seq_ids.resize(static_cast<std::size_t>(n_sequences) * T);
  cap.positions.resize(static_cast<std::size_t>(n_sequences) * T);

  const int chunk = std::min(n_sequences, 50);
  ForwardGraph fg = build_forward(chunk, false);
  std::vector<int> tok_ids(chunk * T, 0);

  int done = 0;
  while (done < n_sequences) {
    const int bsz = std::min(chunk, n_sequences - done);
    std::vector<PathSample> paths(bsz);
    for (int b = 0; b < bsz; ++b) {
      paths[b] = sample_path(spec, T, rng.bits());
      for (int t = 0; t < T; ++t) tok_ids[b * T + t] = paths[b].tokens[t];
    }
    for (int b = bsz; b < chunk; ++b)
      for (int t = 0; t < T; ++t) tok_ids[b * T + t] = 0;
    fg.g.set_ids(fg.tok_embed, tok_ids);
    fg.g.forward();
    const Matf& res = fg.g.value(fg.residual[layer]);
    for (int b = 0; b < bsz; ++b) {
      for (int t = 0; t < T; ++t) {
        const long row = static_cast<long>(done + b) * T + t;
        cap.vectors.row(row) = res.row(b * T + t);
        cap.seq_ids[row] = done + b;
        cap.positions[row] = t;
        int at = 0;
        for (const Vecd& bv : paths[b].beliefs[t]) {
          for (int i = 0; i < bv.size(); ++i) cap.beliefs(row, at + i) = static_cast<float>(bv[i]);
          at += static_cast<int>(bv.size());
        }
      }
    }
    done += bsz;
  }
  return cap;
}

std::vector<int> TransformerLM::generate_steered(std::span<const int> prompt, int layer,
                                                 const Vec<float>& delta, double scale, SteerMode mode,
                                                 int k_sustain, int length) {
  BG_CHECK(!prompt.empty(), "generate_steered: prompt must be non-empty");
  BG_CHECK(layer >= 0 && layer < cfg_.n_layers, "generate_steered: layer out of range");
  BG_CHECK(delta.size() == cfg_.d_model, "generate_steered: delta must have d_model entries");
  if (mode == SteerMode::kType2) BG_CHECK(k_sustain >= 1, "generate_steered: k_sustain must be >= 1");

  const int T = cfg_.context_length;
  const bool steering = scale != 0.0 && !delta.isZero(0);
  const long prompt_len = static_cast<long>(prompt.size());

  ForwardGraph fg = build_forward(1, false);
  std::vector<int> all(prompt.begin(), prompt.end());
  std::vector<int> tok_ids(T, 0);
  Matf steer_rows = Matf::Zero(T, cfg_.d_model);
  Vec<float> step_delta = static_cast<float>(scale) * delta;

  const auto patched = [&](long global_pos) {
    switch (mode) {
      case SteerMode::kType1:
        return global_pos == prompt_len - 1;
      case SteerMode::kType2:
        return global_pos >= prompt_len && global_pos < prompt_len + k_sustain;
      case SteerMode::kType3:
        return global_pos >= prompt_len;
    }
    return false;
  };

  std::vector<int> out;
  out.reserve(length);
  for (int gstep = 0; gstep < length; ++gstep) {
    const long total = static_cast<long>(all.size());
    const long wlen = std::min<long>(total, T);
    const long start = total - wlen;
    for (long i = 0; i < wlen; ++i) tok_ids[i] = all[start + i];
    for (long i = wlen; i < T; ++i) tok_ids[i] = 0;
    fg.g.set_ids(fg.tok_embed, tok_ids);
    if (steering) {
      steer_rows.setZero();
      for (long i = 0; i < wlen; ++i) {
        if (patched(start + i)) steer_rows.row(i) = step_delta.transpose();
      }
      fg.g.set_input(fg.steer[layer], steer_rows);
    }
    fg.g.forward();
    int next = 0;
    fg.g.value(fg.logits).row(wlen - 1).maxCoeff(&next);
    out.push_back(next);
    all.push_back(next);
  }
  return out;
}

std::vector<int> TransformerLM::generate(std::span<const int> prompt, int length) {
  return generate_steered(prompt, 0, Vec<float>::Zero(cfg_.d_model), 0.0, SteerMode::kType3, 1, length);
}

void TransformerLM::save(const std::string& path) const {
  std::ofstream os = binio::open_out(path);
  binio::write_magic(os, "BGLM");
  binio::write_pod<std::uint32_t>(os, 1);  // version
  binio::write_pod<std::int32_t>(os, cfg_.d_model);
  binio::write_pod<std::int32_t>(os, cfg_.n_heads);
  binio::write_pod<std::int32_t>(os, cfg_.n_layers);
  binio::write_pod<std::int32_t>(os, cfg_.context_length);
  binio::write_pod<std::int32_t>(os, cfg_.vocab);
  binio::write_pod<std::int32_t>(os, cfg_.steps);
  binio::write_pod<std::int32_t>(os, cfg_.batch);
  binio::write_pod<double>(os, cfg_.lr);
  binio::write_pod<double>(os, cfg_.weight_decay);
  binio::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(params_.size()));
  for (const auto& p : params_) {
    binio::write_string(os, p.name);
    binio::write_mat<float>(os, p.value);
  }
}

TransformerLM TransformerLM::load(const std::string& path) {
  std::ifstream is = binio::open_in(path);
  binio::expect_magic(is, "BGLM", "transformer checkpoint");
  const auto version = binio::read_pod<std::uint32_t>(is);
  if (version != 1) throw FormatError("transformer checkpoint: unsupported version");
  LmConfig cfg;
  cfg.d_model = binio::read_pod<std::int32_t>(is);
  cfg.n_heads = binio::read_pod<std::int32_t>(is);
  cfg.n_layers = binio::read_pod<std::int32_t>(is);
  cfg.context_length = binio::read_pod<std::int32_t>(is);
  cfg.vocab = binio::read_pod<std::int32_t>(is);
  cfg.steps = binio::read_pod<std::int32_t>(is);
  cfg.batch = binio::read_pod<std::int32_t>(is);
  cfg.lr = binio::read_pod<double>(is);
  cfg.weight_decay = binio::read_pod<double>(is);
  TransformerLM model(cfg, 0);
  const auto count = binio::read_pod<std::uint32_t>(is);
  if (count != model.params_.size()) throw FormatError("transformer checkpoint: parameter count mismatch");
  for (auto& p : model.params_) {
    const std::string name = binio::read_string(is);
    if (name != p.name) throw FormatError("transformer checkpoint: unexpected tensor '" + name + "'");
    Matf value = binio::read_mat<float>(is);
    if (value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
      throw FormatError("transformer checkpoint: tensor shape mismatch for '" + name + "'");
    }
    p.value = std::move(value);
  }
  return model;
}

}  // namespace beliefgeo
