#pragma once

#include "beliefgeo/common.hpp"

#include <string>
#include <vector>

namespace beliefgeo {

// Partition of unit-norm direction rows into K low-rank subspaces.
struct ClusterSet {
  int K = 0;
  std::vector<int> assignments;        // per row; -1 for dropped rows
  std::vector<Matd> bases;             // per cluster, [d x r] orthonormal columns
  std::vector<int> ranks;              // post-hoc estimates at the screening tau
  std::vector<double> objective_trace; // sum of squared residuals per iteration
  int iterations = 0;
  int reseeds = 0;

  std::vector<std::vector<int>> members() const;
  double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

// Row indices of the first K pivots of a column-pivoted QR of W^T. Throws
// when rank(W) < K, reporting the achievable rank.
std::vector<int> cpqr_seed(const Matd& W, int K);

struct KSubspaceOptions {
  int r_max = 3;
  int max_iters = 100;
  bool cpqr_init = true;   // false: random rows as seeds
  std::uint64_t seed = 0;  // used by random init and reseeding
  double rank_tau = 0.90;  // post-hoc rank estimation threshold
};

ClusterSet k_subspace(const Matd& W, int K, const KSubspaceOptions& opts);

// Smallest r whose top singular values capture at least tau of the squared
// spectral energy of the member matrix.
int estimate_rank(const Matd& members, double tau);

struct ScreenCriteria {
  int min_rank = 3;
  int max_rank = 8;   // random latent sets spread energy and exceed this
  int min_size = 4;
  double tau = 0.90;
};

bool passes_screen(const Matd& member_rows, const ScreenCriteria& crit, int* rank_out = nullptr);

struct NullClusters {
  std::vector<std::vector<int>> clusters;  // retained member index lists
  std::vector<int> ranks;
  int partitions_attempted = 0;
  int clusters_attempted = 0;
};

// Random partitions of the d_sae latents into groups with the given size
// multiset; groups passing the screen are retained until target_count is
// reached or max_attempts partitions have been drawn.
NullClusters make_null_clusters(const Matd& W, const std::vector<int>& sizes,
                                const ScreenCriteria& crit, int target_count, int max_attempts,
                                std::uint64_t seed);

// Top-`dims` principal component projection of the rows (used for the
// figure-data emitters).
Matd pca_project(const Matd& rows, int dims);

// columnar text (latent_id, cluster_id) and a binary blob of bases
void save_cluster_assignments(const std::string& path, const ClusterSet& cs);
void save_cluster_bases(const std::string& path, const ClusterSet& cs);
ClusterSet load_cluster_set(const std::string& assignments_path, const std::string& bases_path);

}  // namespace beliefgeo
