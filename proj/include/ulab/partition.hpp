#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulab/common.hpp"
#include "ulab/dataset.hpp"
#include "ulab/nn.hpp"

namespace ulab {

struct KmeansResult {
    std::vector<std::size_t> assignments;  // one centroid index per row
    Tensor centroids;                      // k x d
    std::vector<double> inertia_history;   // within-cluster SSE after each Lloyd update
};

// Lloyd's algorithm with k-means++ seeding, at most 100 iterations.
// Nearest-centroid ties break to the lowest centroid index; a cluster that
// loses all members is reseeded to the point farthest from its assigned
// centroid, so every centroid keeps at least one member.
KmeansResult kmeans(const Tensor& features, std::size_t k, std::uint64_t seed);

struct Cluster {
    int class_label = 0;
    std::vector<std::size_t> member_ids;  // dataset sample ids
    std::vector<double> centroid;         // feature space
};

struct Partition {
    std::vector<Cluster> clusters;
    int k = 0;
    int class_count = 0;
};

// Per-class k-means over extractor features of the given training ids.
// A class with fewer than k samples gets one singleton cluster per sample;
// classes absent from the id set contribute no clusters. Per-class random
// streams are derived from (seed, class), so the loop order does not matter.
Partition partition_dataset(const Dataset& ds, const Mlp& ext, std::size_t k,
                            std::uint64_t seed, const std::vector<std::size_t>& ids);
Partition partition_dataset(const Dataset& ds, const Mlp& ext, std::size_t k,
                            std::uint64_t seed);

struct SplitResult {
    std::vector<std::size_t> free_cluster_ids;     // indices into Partition::clusters
    std::vector<std::size_t> residual_image_ids;   // retained members of touched clusters
};

// A cluster is free iff none of its members is being forgotten; the
// non-forget members of every touched cluster become the residual.
SplitResult sample_F(const Partition& partition, const std::vector<std::size_t>& forget_ids);

void save_partition(const Partition& p, const std::string& path);
Partition load_partition(const std::string& path);

}  // namespace ulab
