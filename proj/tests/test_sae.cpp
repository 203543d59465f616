#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "beliefgeo/sae.hpp"

#include <cstdio>
#include <filesystem>

using namespace beliefgeo;

namespace {

// rows drawn exactly from an r-dimensional linear subspace of R^d
Matf subspace_rows(int n, int d, int r, std::uint64_t seed) {
  Rng rng = rng_stream(seed, "subspace-data");
  Matf basis(r, d);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < d; ++j) basis(i, j) = static_cast<float>(rng.normal());
    basis.row(i).normalize();
  }
  Matf coeff(n, r);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < r; ++j) coeff(i, j) = static_cast<float>(2.0 * rng.normal());
  return coeff * basis;
}

SaeConfig quick_cfg(int d_sae, int k, int steps) {
  SaeConfig cfg;
  cfg.d_sae = d_sae;
  cfg.k = k;
  cfg.steps = steps;
  cfg.batch = 64;
  return cfg;
}

}  // namespace

TEST_CASE("subspace oracle: k=10 reconstructs 10-dimensional data below 5% error") {
  Matf rows = subspace_rows(4000, 32, 10, 5);
  SaeModel sae(32, quick_cfg(64, 10, 6000), 1);
  SaeMetrics m = sae.train(rows, 2);
  INFO("relative held-out error = " << m.relative_heldout_error);
  CHECK(m.relative_heldout_error < 0.05);

  // TopK support idempotency at convergence
  int same = 0, total = 0;
  for (long r = 0; r < 500; ++r) {
    Vec<float> f1 = sae.encode(rows.row(r).transpose());
    Vec<float> f2 = sae.encode(sae.decode(f1));
    bool equal = true;
    for (int i = 0; i < f1.size(); ++i) {
      if ((f1[i] != 0.0f) != (f2[i] != 0.0f)) equal = false;
    }
    same += equal;
    ++total;
  }
  CHECK(static_cast<double>(same) / total >= 0.99);
}

TEST_CASE("capacity ordering: k = d_sae reconstructs better than small k") {
  Matf rows = subspace_rows(1500, 16, 8, 7);
  SaeModel small(16, quick_cfg(24, 3, 1500), 1);
  SaeModel full(16, quick_cfg(24, 24, 1500), 1);
  const double small_loss = small.train(rows, 3).heldout_loss;
  const double full_loss = full.train(rows, 3).heldout_loss;
  CHECK(full_loss < small_loss);
}

TEST_CASE("encode emits at most k nonzeros over 10^4 random inputs") {
  SaeModel sae(16, quick_cfg(40, 5, 1), 9);
  Rng rng = rng_stream(11, "inputs");
  for (int rep = 0; rep < 10000; ++rep) {
    Vec<float> x(16);
    for (int i = 0; i < 16; ++i) x[i] = static_cast<float>(rng.normal());
    const Vec<float> f = sae.encode(x);
    CHECK((f.array() != 0.0f).count() <= 5);
  }
}

TEST_CASE("encoding b_dec yields the TopK of b_enc") {
  // identity-ish sae with known biases; x = mean + b_dec/scale makes the
  // normalized input equal b_dec, so preactivations collapse to b_enc
  const int d = 6, dsae = 6;
  Matf w_dec = Matf::Identity(dsae, d);
  Matf w_enc = Matf::Identity(d, dsae);
  Vec<float> b_enc(dsae);
  b_enc << 0.1f, 0.9f, 0.5f, 0.7f, 0.2f, 0.3f;
  SaeModel sae = SaeModel::from_weights(w_enc, b_enc, w_dec, Vec<float>::Constant(d, 0.25f), 2,
                                        Vec<float>::Zero(d), 1.0f);
  Vec<float> x = Vec<float>::Constant(d, 0.25f);
  Vec<float> f = sae.encode(x);
  CHECK(f[1] == doctest::Approx(0.9f));
  CHECK(f[3] == doctest::Approx(0.7f));
  CHECK((f.array() != 0.0f).count() == 2);
}

TEST_CASE("topk tie-break selects the lowest latent index") {
  const int d = 4, dsae = 4;
  Matf w_dec = Matf::Identity(dsae, d);
  Matf w_enc = Matf::Identity(d, dsae);
  SaeModel sae = SaeModel::from_weights(w_enc, Vec<float>::Zero(dsae), w_dec, Vec<float>::Zero(d), 2,
                                        Vec<float>::Zero(d), 1.0f);
  Vec<float> x(4);
  x << 1.0f, 1.0f, 1.0f, 0.5f;  // three-way tie for two slots
  Vec<float> f = sae.encode(x);
  CHECK(f[0] == 1.0f);
  CHECK(f[1] == 1.0f);
  CHECK(f[2] == 0.0f);
  CHECK(f[3] == 0.0f);
}

TEST_CASE("cluster contribution: full set, empty set, additivity") {
  SaeModel sae(12, quick_cfg(20, 4, 1), 13);
  Rng rng = rng_stream(17, "contrib");
  Vec<float> x(12);
  for (int i = 0; i < 12; ++i) x[i] = static_cast<float>(rng.normal());
  Vec<float> f = sae.encode(x);

  std::vector<int> all(20);
  for (int i = 0; i < 20; ++i) all[i] = i;
  Vec<float> full = sae.cluster_contribution(f, all);
  Vec<float> via_decode = sae.decode_normalized(f) - sae.b_dec();
  CHECK((full - via_decode).cwiseAbs().maxCoeff() < 1e-6f);

  CHECK(sae.cluster_contribution(f, std::vector<int>{}).cwiseAbs().maxCoeff() == 0.0f);

  std::vector<int> a = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> b = {10, 11, 12, 13, 14, 15, 16, 17, 18, 19};
  Vec<float> sum = sae.cluster_contribution(f, a) + sae.cluster_contribution(f, b);
  CHECK((sum - full).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("decoder normalization with inverse encoder rescaling preserves reconstructions") {
  Matf rows = subspace_rows(800, 16, 6, 21);
  SaeModel sae(16, quick_cfg(24, 6, 600), 3);
  sae.train(rows, 4);
  SaeModel scaled = sae;
  Rng rng = rng_stream(23, "rescale");
  for (int i = 0; i < scaled.d_sae(); ++i) {
    scaled.rescale_latent(i, static_cast<float>(0.25 + 2.0 * rng.uniform()));
  }
  for (long r = 0; r < 50; ++r) {
    Vec<float> x = rows.row(r).transpose();
    Vec<float> ra = sae.decode(sae.encode(x));
    Vec<float> rb = scaled.decode(scaled.encode(x));
    CHECK((ra - rb).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("sae checkpoint roundtrip") {
  SaeModel sae(8, quick_cfg(12, 3, 1), 31);
  const std::string path = (std::filesystem::temp_directory_path() / "bg_test_sae.bgsa").string();
  sae.save(path);
  SaeModel back = SaeModel::load(path);
  Rng rng = rng_stream(37, "ckpt");
  Vec<float> x(8);
  for (int i = 0; i < 8; ++i) x[i] = static_cast<float>(rng.normal());
  CHECK((sae.encode(x) - back.encode(x)).cwiseAbs().maxCoeff() == 0.0f);
  std::remove(path.c_str());
}
