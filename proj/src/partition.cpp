#include "ulab/partition.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <unordered_map>

#include "json.hpp"

namespace ulab {

namespace {

double dist2(const double* a, const double* b, std::size_t d) {
    double acc = 0.0;
    for (std::size_t p = 0; p < d; ++p) {
        double diff = a[p] - b[p];
        acc += diff * diff;
    }
    return acc;
}

}  // namespace

KmeansResult kmeans(const Tensor& features, std::size_t k, std::uint64_t seed) {
    std::size_t n = features.rows(), d = features.cols();
    if (k == 0) throw InputError("kmeans: k must be positive");
    if (k > n) throw InputError("kmeans: k exceeds row count");

    Rng rng(seed);
    Tensor centroids = Tensor::zeros(k, d);
    const double* x = features.values.data();

    // k-means++ seeding: first centroid uniform, the rest D^2-weighted.
    std::size_t first = rng.next_below(n);
    std::copy(x + first * d, x + (first + 1) * d, centroids.values.begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = dist2(x + i * d, centroids.values.data(), d);
    for (std::size_t j = 1; j < k; ++j) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick;
        if (total > 0.0) {
            double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.next_below(n);  // all points already covered exactly
        }
        std::copy(x + pick * d, x + (pick + 1) * d, centroids.values.begin() + j * d);
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], dist2(x + i * d, centroids.values.data() + j * d, d));
    }

    KmeansResult res;
    res.assignments.assign(n, k);  // sentinel: no previous assignment
    std::vector<std::size_t> assign(n, 0);
    std::vector<double> cur_dist(n, 0.0);

    for (int iter = 0; iter < 100; ++iter) {
        // Assignment, ties to the lowest centroid index.
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = dist2(x + i * d, centroids.values.data(), d);
            for (std::size_t j = 1; j < k; ++j) {
                double dj = dist2(x + i * d, centroids.values.data() + j * d, d);
                if (dj < best_d) {
                    best_d = dj;
                    best = j;
                }
            }
            assign[i] = best;
            cur_dist[i] = best_d;
        }

        // Reseed any empty cluster to the point currently farthest from its
        // centroid. Each pass fixes one cluster; a donor reduced to zero
        // members is caught by the next pass.
        for (std::size_t guard = 0; guard < k; ++guard) {
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < n; ++i) ++counts[assign[i]];
            std::size_t empty = k;
            for (std::size_t j = 0; j < k; ++j)
                if (counts[j] == 0) {
                    empty = j;
                    break;
                }
            if (empty == k) break;
            std::size_t far = 0;
            for (std::size_t i = 1; i < n; ++i)
                if (cur_dist[i] > cur_dist[far]) far = i;
            std::copy(x + far * d, x + (far + 1) * d, centroids.values.begin() + empty * d);
            assign[far] = empty;
            cur_dist[far] = 0.0;
        }

        if (assign == res.assignments) break;  // stable, centroids already the means
        res.assignments = assign;

        // Update step: centroids move to member means.
        std::vector<std::size_t> counts(k, 0);
        std::fill(centroids.values.begin(), centroids.values.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[assign[i]];
            for (std::size_t p = 0; p < d; ++p)
                centroids.values[assign[i] * d + p] += x[i * d + p];
        }
        for (std::size_t j = 0; j < k; ++j)
            for (std::size_t p = 0; p < d; ++p)
                centroids.values[j * d + p] /= static_cast<double>(counts[j]);

        double sse = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            sse += dist2(x + i * d, centroids.values.data() + assign[i] * d, d);
        res.inertia_history.push_back(sse);
    }

    res.centroids = std::move(centroids);
    return res;
}

Partition partition_dataset(const Dataset& ds, const Mlp& ext, std::size_t k,
                            std::uint64_t seed, const std::vector<std::size_t>& ids) {
    if (ids.empty()) throw InputError("partition_dataset: empty id set");
    if (k == 0) throw InputError("partition_dataset: k must be positive");
    for (std::size_t id : ids)
        if (id >= ds.size()) throw InputError("partition_dataset: id out of range");

    Partition part;
    part.k = static_cast<int>(k);
    part.class_count = ds.class_count;

    for (int c = 0; c < ds.class_count; ++c) {
        std::vector<std::size_t> class_ids;
        for (std::size_t id : ids)
            if (ds.y[id] == c) class_ids.push_back(id);
        if (class_ids.empty()) continue;
        std::sort(class_ids.begin(), class_ids.end());

        Tensor feats = feature_extract(ext, take_rows(ds.x, class_ids));
        std::size_t fd = feats.cols();

        if (class_ids.size() < k) {
            // Fewer samples than clusters: one singleton cluster per sample.
            for (std::size_t i = 0; i < class_ids.size(); ++i) {
                Cluster cl;
                cl.class_label = c;
                cl.member_ids = {class_ids[i]};
                cl.centroid.assign(feats.values.begin() + static_cast<std::ptrdiff_t>(i * fd),
                                   feats.values.begin() +
                                       static_cast<std::ptrdiff_t>((i + 1) * fd));
                part.clusters.push_back(std::move(cl));
            }
            continue;
        }

        KmeansResult km = kmeans(feats, k, derive_seed(seed, static_cast<std::uint64_t>(c)));
        std::vector<Cluster> class_clusters(k);
        for (std::size_t j = 0; j < k; ++j) {
            class_clusters[j].class_label = c;
            class_clusters[j].centroid.assign(
                km.centroids.values.begin() + static_cast<std::ptrdiff_t>(j * fd),
                km.centroids.values.begin() + static_cast<std::ptrdiff_t>((j + 1) * fd));
        }
        for (std::size_t i = 0; i < class_ids.size(); ++i)
            class_clusters[km.assignments[i]].member_ids.push_back(class_ids[i]);
        // Duplicate feature rows can defeat the empty-cluster repair; such
        // clusters are dropped rather than emitted empty.
        for (auto& cl : class_clusters)
            if (!cl.member_ids.empty()) part.clusters.push_back(std::move(cl));
    }
    return part;
}

Partition partition_dataset(const Dataset& ds, const Mlp& ext, std::size_t k,
                            std::uint64_t seed) {
    return partition_dataset(ds, ext, k, seed, ds.train_ids());
}

SplitResult sample_F(const Partition& partition, const std::vector<std::size_t>& forget_ids) {
    std::set<std::size_t> covered;
    for (const Cluster& cl : partition.clusters)
        covered.insert(cl.member_ids.begin(), cl.member_ids.end());
    std::set<std::size_t> fset;
    for (std::size_t id : forget_ids) {
        if (!covered.count(id))
            throw InputError("sample_F: forget id " + std::to_string(id) +
                             " not in the partition");
        fset.insert(id);
    }

    SplitResult res;
    for (std::size_t ci = 0; ci < partition.clusters.size(); ++ci) {
        const Cluster& cl = partition.clusters[ci];
        bool touched = false;
        for (std::size_t id : cl.member_ids)
            if (fset.count(id)) {
                touched = true;
                break;
            }
        if (!touched) {
            res.free_cluster_ids.push_back(ci);
        } else {
            for (std::size_t id : cl.member_ids)
                if (!fset.count(id)) res.residual_image_ids.push_back(id);
        }
    }
    std::sort(res.residual_image_ids.begin(), res.residual_image_ids.end());
    return res;
}

void save_partition(const Partition& p, const std::string& path) {
    nlohmann::json j;
    j["k"] = p.k;
    j["class_count"] = p.class_count;
    auto& arr = j["clusters"] = nlohmann::json::array();
    for (const Cluster& cl : p.clusters) {
        nlohmann::json jc;
        jc["class"] = cl.class_label;
        jc["members"] = cl.member_ids;
        jc["centroid"] = cl.centroid;
        arr.push_back(std::move(jc));
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("save_partition: cannot open " + path);
    f << j.dump(1) << '\n';
}

Partition load_partition(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("load_partition: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_partition: ") + e.what());
    }
    Partition p;
    try {
        p.k = j.at("k").get<int>();
        p.class_count = j.at("class_count").get<int>();
        for (const auto& jc : j.at("clusters")) {
            Cluster cl;
            cl.class_label = jc.at("class").get<int>();
            cl.member_ids = jc.at("members").get<std::vector<std::size_t>>();
            cl.centroid = jc.at("centroid").get<std::vector<double>>();
            if (cl.member_ids.empty())
                throw FormatError("load_partition: empty cluster in file");
            p.clusters.push_back(std::move(cl));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_partition: ") + e.what());
    }
    return p;
}

}  // namespace ulab
