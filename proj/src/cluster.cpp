#include "beliefgeo/cluster.hpp"

#include "beliefgeo/binio.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace beliefgeo {

std::vector<std::vector<int>> ClusterSet::members() const {
  std::vector<std::vector<int>> out(K);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] >= 0) out[assignments[i]].push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> cpqr_seed(const Matd& W, int K) {
  BG_CHECK(K >= 1 && K <= W.rows(), "cpqr_seed: K must lie in [1, row count]");
  Eigen::ColPivHouseholderQR<Matd> qr(W.transpose());
  const int rank = static_cast<int>(qr.rank());
  if (rank < K) {
    std::ostringstream msg;
    msg << "cpqr_seed: direction matrix has rank " << rank << " but K = " << K << " seeds were requested";
    throw ContractError(msg.str());
  }
  const auto& perm = qr.colsPermutation().indices();
  std::vector<int> seeds(K);
  for (int i = 0; i < K; ++i) seeds[i] = perm[i];
  return seeds;
}

namespace {

// orthonormal basis for the top-r left singular directions of the members
// stacked as columns (d x n)
Matd fit_basis(const Matd& member_rows, int r) {
  Eigen::JacobiSVD<Matd> svd(member_rows.transpose(), Eigen::ComputeThinU);
  const int usable = std::min<int>(r, static_cast<int>(svd.nonzeroSingularValues()));
  return svd.matrixU().leftCols(std::max(1, usable));
}

double residual_sq(const Vecd& w, const Matd& basis) {
  const Vecd proj = basis.transpose() * w;
  return std::max(0.0, w.squaredNorm() - proj.squaredNorm());
}

}  // namespace

ClusterSet k_subspace(const Matd& W, int K, const KSubspaceOptions& opts) {
  BG_CHECK(opts.r_max >= 1, "k_subspace: r_max must be >= 1");
  BG_CHECK(K >= 1, "k_subspace: K must be >= 1");
  const int m = static_cast<int>(W.rows());
  const int d = static_cast<int>(W.cols());
  BG_CHECK(m >= K, "k_subspace: need at least K rows");

  std::vector<int> usable;
  for (int i = 0; i < m; ++i) {
    if (W.row(i).norm() >= 1e-8) usable.push_back(i);
  }

  ClusterSet cs;
  cs.K = K;
  cs.assignments.assign(m, -1);
  cs.bases.assign(K, Matd());

  // seed with 1-D subspaces
  std::vector<int> seed_rows;
  if (opts.cpqr_init) {
    Matd Wu(usable.size(), d);
    for (std::size_t i = 0; i < usable.size(); ++i) Wu.row(i) = W.row(usable[i]);
    for (int s : cpqr_seed(Wu, K)) seed_rows.push_back(usable[s]);
  } else {
    Rng rng = rng_stream(opts.seed, "ksub-random-init");
    std::vector<int> pool = usable;
    rng.shuffle(pool);
    seed_rows.assign(pool.begin(), pool.begin() + K);
  }
  for (int c = 0; c < K; ++c) {
    cs.bases[c] = W.row(seed_rows[c]).transpose().normalized();
  }

  std::vector<double> res(K);
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    // (a) assign to the nearest subspace; ties go to the lower cluster id
    bool changed = false;
    double objective = 0.0;
    for (int i : usable) {
      const Vecd w = W.row(i).transpose();
      int best = 0;
      double best_res = residual_sq(w, cs.bases[0]);
      for (int c = 1; c < K; ++c) {
        const double r = residual_sq(w, cs.bases[c]);
        if (r < best_res) {
          best_res = r;
          best = c;
        }
      }
      if (cs.assignments[i] != best) changed = true;
      cs.assignments[i] = best;
      objective += best_res;
    }
    cs.objective_trace.push_back(objective);
    cs.iterations = iter + 1;
    if (!changed && iter > 0) break;

    // reseed empty clusters from the worst-fit row
    auto groups = cs.members();
    for (int c = 0; c < K; ++c) {
      if (!groups[c].empty()) continue;
      int worst = usable.front();
      double worst_res = -1.0;
      for (int i : usable) {
        const double r = residual_sq(W.row(i).transpose(), cs.bases[cs.assignments[i]]);
        if (r > worst_res && static_cast<int>(groups[cs.assignments[i]].size()) > 1) {
          worst_res = r;
          worst = i;
        }
      }
      if (worst_res < 0.0) continue;  // nothing eligible to steal
      auto& from = groups[cs.assignments[worst]];
      from.erase(std::find(from.begin(), from.end(), worst));
      cs.assignments[worst] = c;
      groups[c] = {worst};
      cs.reseeds += 1;
    }

    // (b) refit each basis from its members
    for (int c = 0; c < K; ++c) {
      if (groups[c].empty()) continue;
      Matd rows(groups[c].size(), d);
      for (std::size_t j = 0; j < groups[c].size(); ++j) rows.row(j) = W.row(groups[c][j]);
      cs.bases[c] = fit_basis(rows, opts.r_max);
    }
  }

  // post-hoc rank estimates
  auto groups = cs.members();
  cs.ranks.assign(K, 0);
  for (int c = 0; c < K; ++c) {
    if (groups[c].empty()) continue;
    Matd rows(groups[c].size(), d);
    for (std::size_t j = 0; j < groups[c].size(); ++j) rows.row(j) = W.row(groups[c][j]);
    cs.ranks[c] = estimate_rank(rows, opts.rank_tau);
  }
  return cs;
}

int estimate_rank(const Matd& members, double tau) {
  BG_CHECK(members.rows() >= 1, "estimate_rank: need at least one member");
  BG_CHECK(tau > 0.0 && tau <= 1.0, "estimate_rank: tau must lie in (0, 1]");
  Eigen::JacobiSVD<Matd> svd(members);
  const Vecd sv = svd.singularValues();
  const double total = sv.squaredNorm();
  if (total <= 0.0) return 0;
  double acc = 0.0;
  for (int r = 0; r < sv.size(); ++r) {
    acc += sv[r] * sv[r];
    if (acc >= tau * total - 1e-15) return r + 1;
  }
  return static_cast<int>(sv.size());
}

bool passes_screen(const Matd& member_rows, const ScreenCriteria& crit, int* rank_out) {
  if (member_rows.rows() < crit.min_size) {
    if (rank_out) *rank_out = 0;
    return false;
  }
  const int rank = estimate_rank(member_rows, crit.tau);
  if (rank_out) *rank_out = rank;
  return rank >= crit.min_rank && rank <= crit.max_rank;
}

NullClusters make_null_clusters(const Matd& W, const std::vector<int>& sizes,
                                const ScreenCriteria& crit, int target_count, int max_attempts,
                                std::uint64_t seed) {
  BG_CHECK(!sizes.empty(), "make_null_clusters: size distribution must be non-empty");
  const long total = std::accumulate(sizes.begin(), sizes.end(), 0L);
  BG_CHECK(total <= W.rows(), "make_null_clusters: sizes exceed the latent count");

  Rng rng = rng_stream(seed, "null-clusters");
  NullClusters out;
  while (out.partitions_attempted < max_attempts &&
         static_cast<int>(out.clusters.size()) < target_count) {
    out.partitions_attempted += 1;
    std::vector<int> perm = rng.permutation(static_cast<int>(W.rows()));
    long at = 0;
    for (int size : sizes) {
      std::vector<int> group(perm.begin() + at, perm.begin() + at + size);
      at += size;
      std::sort(group.begin(), group.end());
      out.clusters_attempted += 1;
      Matd rows(size, W.cols());
      for (int j = 0; j < size; ++j) rows.row(j) = W.row(group[j]);
      int rank = 0;
      if (passes_screen(rows, crit, &rank)) {
        out.clusters.push_back(std::move(group));
        out.ranks.push_back(rank);
        if (static_cast<int>(out.clusters.size()) >= target_count) break;
      }
    }
  }
  return out;
}

Matd pca_project(const Matd& rows, int dims) {
  BG_CHECK(dims >= 1 && dims <= rows.cols(), "pca_project: dims out of range");
  Matd centered = rows.rowwise() - rows.colwise().mean();
  Eigen::JacobiSVD<Matd> svd(centered, Eigen::ComputeThinV);
  return centered * svd.matrixV().leftCols(dims);
}

void save_cluster_assignments(const std::string& path, const ClusterSet& cs) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os << "latent_id\tcluster_id\n";
  for (std::size_t i = 0; i < cs.assignments.size(); ++i) {
    os << i << "\t" << cs.assignments[i] << "\n";
  }
}

void save_cluster_bases(const std::string& path, const ClusterSet& cs) {
  std::ofstream os = binio::open_out(path);
  binio::write_magic(os, "BGCB");
  binio::write_pod<std::uint32_t>(os, 1);
  binio::write_pod<std::int32_t>(os, cs.K);
  binio::write_pod<std::int32_t>(os, static_cast<std::int32_t>(cs.assignments.size()));
  for (const Matd& b : cs.bases) binio::write_mat<double>(os, b);
  for (int r : cs.ranks) binio::write_pod<std::int32_t>(os, r);
}

ClusterSet load_cluster_set(const std::string& assignments_path, const std::string& bases_path) {
  ClusterSet cs;
  std::ifstream is(assignments_path);
  if (!is) throw MissingArtifactError("cannot open: " + assignments_path);
  std::string header;
  std::getline(is, header);
  if (header != "latent_id\tcluster_id") throw FormatError("cluster file: unexpected header");
  long latent = 0;
  int cluster = 0;
  while (is >> latent >> cluster) {
    if (latent != static_cast<long>(cs.assignments.size())) {
      throw FormatError("cluster file: latent ids must be dense and ordered");
    }
    cs.assignments.push_back(cluster);
  }

  std::ifstream bs = binio::open_in(bases_path);
  binio::expect_magic(bs, "BGCB", "cluster bases");
  const auto version = binio::read_pod<std::uint32_t>(bs);
  if (version != 1) throw FormatError("cluster bases: unsupported version");
  cs.K = binio::read_pod<std::int32_t>(bs);
  const auto m = binio::read_pod<std::int32_t>(bs);
  if (m != static_cast<std::int32_t>(cs.assignments.size())) {
    throw FormatError("cluster bases: assignment count mismatch");
  }
  for (int c = 0; c < cs.K; ++c) cs.bases.push_back(binio::read_mat<double>(bs));
  for (int c = 0; c < cs.K; ++c) cs.ranks.push_back(binio::read_pod<std::int32_t>(bs));
  return cs;
}

}  // namespace beliefgeo
