#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ulab/common.hpp"
#include "ulab/dataset.hpp"
#include "ulab/nn.hpp"
#include "ulab/partition.hpp"

namespace ulab {

// Per-member blend weights, stored unconstrained; the effective weights are
// softplus(raw), so they stay positive and the normalizing sum stays away
// from zero.
struct BlendWeights {
    std::vector<double> raw;
    double initial_loss = 0.0;  // recorded by optimize_blend
    double final_loss = 0.0;

    std::vector<double> omega() const;
};

struct BlendConfig {
    int steps = 25;
    double lr = 0.5;
    std::size_t pool = 4;        // extractors realizing the feature expectation
    bool resample_pool = false;  // draw a fresh gradient extractor per step
    std::uint64_t seed = 0;
};

struct Prototype {
    Tensor image;  // 1 x d
    int label = 0;
    std::size_t cluster_id = 0;
    BlendWeights weights;
};

struct CondensedSet {
    std::vector<Prototype> prototypes;
};

// Normalized weighted average of the rows: sum_j w_j I_j / sum_j w_j.
Tensor blend_image(const Tensor& images, const BlendWeights& w);

// Mean over the pool of || mean_j psi(I_j) - psi(I(w)) ||^2: how far the
// blend's features sit from the cluster's mean features.
double blend_loss(const BlendWeights& w, const Tensor& images, const std::vector<Mlp>& pool);

std::vector<Mlp> sample_pool(std::size_t input_dim, std::size_t count, std::uint64_t seed);

// Gradient descent on the raw weights from a uniform blend. Steps that fail
// to keep the pool loss non-increasing retry with a halved rate (up to 10
// halvings) and are dropped entirely if that fails, so the recorded final
// loss never exceeds the initial one. With resample_pool the step direction
// comes from a fresh per-step extractor while acceptance still checks the
// fixed pool.
BlendWeights optimize_blend(const Tensor& images, const BlendConfig& cfg,
                            const std::vector<Mlp>& pool);
BlendWeights optimize_blend(const Tensor& images, const BlendConfig& cfg);

// One prototype per listed cluster, blended from the given member subset
// (which must lie inside that cluster). Clusters run in parallel with
// per-cluster seeds, so results match serial execution.
using ClusterSubset = std::pair<std::size_t, std::vector<std::size_t>>;
CondensedSet condense_clusters(const Partition& part, const std::vector<ClusterSubset>& subsets,
                               const Dataset& ds, const BlendConfig& cfg);

// One prototype per free cluster; forget and residual samples never feed a
// prototype because free clusters contain none of them.
CondensedSet condense_free(const Partition& part, const SplitResult& split, const Dataset& ds,
                           const BlendConfig& cfg);

// Prototypes plus the raw residual samples; the training set an unlearning
// run sees in place of the full retain set.
Batch build_reduced_retain(const CondensedSet& condensed,
                           const std::vector<std::size_t>& residual_ids,
                           const std::vector<std::size_t>& forget_ids, const Dataset& ds);

void save_condensed(const CondensedSet& cs, const std::string& path);
CondensedSet load_condensed(const std::string& path);

}  // namespace ulab
