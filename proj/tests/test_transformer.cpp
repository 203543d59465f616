#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "beliefgeo/transformer.hpp"

#include <cstdio>
#include <filesystem>

using namespace beliefgeo;

namespace {

LmConfig tiny_config(int vocab) {
  LmConfig cfg;
  cfg.d_model = 32;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.context_length = 16;
  cfg.vocab = vocab;
  cfg.batch = 16;
  cfg.eval_every = 200;
  cfg.eval_sequences = 50;
  return cfg;
}

// deterministic cyclic process: state i emits symbol pattern[i], advances i+1
ProcessSpec cyclic_spec(const std::vector<int>& pattern, int n_symbols) {
  ProcessSpec spec;
  spec.name = "cycle";
  const int k = static_cast<int>(pattern.size());
  spec.n_states = k;
  spec.n_symbols = n_symbols;
  for (int y = 0; y < n_symbols; ++y) spec.transition_ops.push_back(Matd::Zero(k, k));
  for (int i = 0; i < k; ++i) spec.transition_ops[pattern[i]](i, (i + 1) % k) = 1.0;
  spec.initial_belief = Vecd::Zero(k);
  spec.initial_belief[0] = 1.0;
  spec.validate();
  return spec;
}

}  // namespace

TEST_CASE("capture shape, metadata alignment and determinism") {
  CompositeSpec proc = compose({mess3_spec(0.1, 0.9)});
  LmConfig cfg;
  cfg.vocab = proc.vocab();
  TransformerLM model(cfg, 42);
  ResidualCapture a = model.capture(proc, 1, 7, 99);
  CHECK(a.vectors.rows() == 7 * 16);
  CHECK(a.vectors.cols() == 128);
  CHECK(a.beliefs.cols() == 3);
  CHECK(a.seq_ids.size() == a.positions.size());
  CHECK(a.seq_ids[16] == 1);
  CHECK(a.positions[16] == 0);
  ResidualCapture b = model.capture(proc, 1, 7, 99);
  CHECK((a.vectors - b.vectors).cwiseAbs().maxCoeff() == 0.0f);
  CHECK((a.beliefs - b.beliefs).cwiseAbs().maxCoeff() == 0.0f);
  CHECK_THROWS_AS((void)model.capture(proc, 3, 2, 1), ContractError);
}

TEST_CASE("causal masking: earlier logits ignore later tokens") {
  CompositeSpec proc = compose({mess3_spec(0.1, 0.9)});
  TransformerLM model(tiny_config(proc.vocab()), 7);
  std::vector<int> tokens = {0, 1, 2, 0, 1, 2, 2, 1};
  Matf base = model.logits(tokens);
  for (std::size_t flip = 2; flip < tokens.size(); ++flip) {
    std::vector<int> perturbed = tokens;
    perturbed[flip] = (perturbed[flip] + 1) % 3;
    Matf out = model.logits(perturbed);
    for (std::size_t t = 0; t < flip; ++t) {
      CHECK((out.row(t) - base.row(t)).cwiseAbs().maxCoeff() == 0.0f);
    }
    CHECK((out.row(flip) - base.row(flip)).cwiseAbs().maxCoeff() > 0.0f);
  }
}

TEST_CASE("steering with zero scale or zero delta is a no-op") {
  CompositeSpec proc = compose({mess3_spec(0.1, 0.9)});
  TransformerLM model(tiny_config(proc.vocab()), 3);
  std::vector<int> prompt = {0, 1, 2, 1};
  Vec<float> delta = Vec<float>::Ones(32);
  std::vector<int> plain = model.generate(prompt, 8);
  CHECK(plain == model.generate_steered(prompt, 1, delta, 0.0, SteerMode::kType1, 1, 8));
  CHECK(plain == model.generate_steered(prompt, 1, Vec<float>::Zero(32), 5.0, SteerMode::kType3, 1, 8));
}

TEST_CASE("steering types differ only in the generated region") {
  CompositeSpec proc = compose({mess3_spec(0.1, 0.9)});
  TransformerLM model(tiny_config(proc.vocab()), 3);
  std::vector<int> prompt = {0, 1, 2, 1, 0};
  // constant deltas sit in LayerNorm's null space; use a mixed-sign direction
  Vec<float> delta(32);
  Rng rng = rng_stream(2, "steer-delta");
  for (int i = 0; i < 32; ++i) delta[i] = static_cast<float>(rng.normal());
  auto t1 = model.generate_steered(prompt, 0, delta, 5.0, SteerMode::kType1, 1, 6);
  auto t3 = model.generate_steered(prompt, 0, delta, 5.0, SteerMode::kType3, 1, 6);
  CHECK(t1.size() == 6);
  CHECK(t3.size() == 6);
  // a large enough patch at the trigger perturbs generation
  auto plain = model.generate(prompt, 6);
  CHECK(t1 != plain);
}

TEST_CASE("checkpoint roundtrip preserves behavior bit-for-bit") {
  CompositeSpec proc = compose({mess3_spec(0.1, 0.9)});
  TransformerLM model(tiny_config(proc.vocab()), 11);
  const std::string path = (std::filesystem::temp_directory_path() / "bg_test_lm.bglm").string();
  model.save(path);
  TransformerLM back = TransformerLM::load(path);
  std::vector<int> tokens = {2, 0, 1, 1, 2};
  CHECK((model.logits(tokens) - back.logits(tokens)).cwiseAbs().maxCoeff() == 0.0f);
  std::remove(path.c_str());
}

TEST_CASE("loading a non-checkpoint fails with a format error") {
  const std::string path = (std::filesystem::temp_directory_path() / "bg_test_bad.bglm").string();
  std::ofstream os(path, std::ios::binary);
  os << "NOPE not a checkpoint";
  os.close();
  CHECK_THROWS_AS((void)TransformerLM::load(path), FormatError);
  std::remove(path.c_str());
}

TEST_CASE("config invariants are enforced") {
  LmConfig cfg = tiny_config(3);
  cfg.d_model = 30;  // not divisible by n_heads = 2? it is; use 31
  cfg.d_model = 31;
  CHECK_THROWS_AS(TransformerLM(cfg, 1), ContractError);
}

TEST_CASE("memorization: training on one repeated sequence reaches 100%") {
  ProcessSpec cyc = cyclic_spec({0, 1, 2, 3, 2, 1, 0, 3}, 4);
  CompositeSpec proc = compose({cyc});
  LmConfig cfg = tiny_config(proc.vocab());
  cfg.steps = 400;
  cfg.batch = 8;
  cfg.lr = 3e-3;
  cfg.eval_every = 400;
  cfg.eval_sequences = 4;
  TransformerLM model(cfg, 5);
  TrainMetrics metrics = model.train(proc, 21);
  CHECK(metrics.heldout_accuracy == doctest::Approx(1.0));
}

TEST_CASE("ridge probe recovers mess3 beliefs from residuals with positive R^2") {
  CompositeSpec proc = compose({mess3_spec(0.05, 0.85)});
  LmConfig cfg = tiny_config(proc.vocab());
  cfg.steps = 1200;
  cfg.lr = 2e-3;
  cfg.eval_every = 1200;
  cfg.eval_sequences = 30;
  TransformerLM model(cfg, 17);
  model.train(proc, 23);

  ResidualCapture train_cap = model.capture(proc, 1, 150, 31);
  ResidualCapture test_cap = model.capture(proc, 1, 60, 37);

  // ridge regression oracle, fitted on train rows only
  Matd X = train_cap.vectors.cast<double>();
  Matd Y = train_cap.beliefs.cast<double>();
  const Matd xm = X.colwise().mean();
  const Matd ym = Y.colwise().mean();
  Matd Xc = X.rowwise() - xm.row(0);
  Matd Yc = Y.rowwise() - ym.row(0);
  Matd gram = Xc.transpose() * Xc + 1e-3 * Matd::Identity(X.cols(), X.cols());
  Matd W = gram.ldlt().solve(Xc.transpose() * Yc);

  Matd Xt = test_cap.vectors.cast<double>();
  Matd Yt = test_cap.beliefs.cast<double>();
  Matd pred = ((Xt.rowwise() - xm.row(0)) * W).rowwise() + ym.row(0);
  const double ss_res = (Yt - pred).squaredNorm();
  const double ss_tot = (Yt.rowwise() - Yt.colwise().mean().row(0)).squaredNorm();
  const double r2 = 1.0 - ss_res / ss_tot;
  INFO("held-out probe R^2 = " << r2);
  CHECK(r2 > 0.0);
}
