#include "ulab/blend.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "ulab/autodiff.hpp"
#include "ulab/mathfn.hpp"
#include "ulab/parallel.hpp"

namespace ulab {

namespace {

constexpr std::uint64_t kPoolSalt = 0xB1E7D;
constexpr std::uint64_t kStepSalt = 0x57E9;

Tensor mean_rows(const Tensor& t) {
    std::size_t n = t.rows(), d = t.cols();
    Tensor out = Tensor::zeros(1, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out.values[j] += t.values[i * d + j];
    for (double& v : out.values) v /= static_cast<double>(n);
    return out;
}

// Pool loss against member feature means that are already computed. The
// members and extractors never change inside one optimization, so the means
// are fixed; recomputing them per line-search probe would dominate the whole
// condensation wall clock.
double loss_with_means(const BlendWeights& w, const Tensor& images,
                       const std::vector<Mlp>& pool, const std::vector<Tensor>& pool_means) {
    Tensor blend = blend_image(images, w);
    double acc = 0.0;
    for (std::size_t p = 0; p < pool.size(); ++p) {
        Tensor fb = feature_extract(pool[p], blend);
        for (std::size_t j = 0; j < fb.size(); ++j) {
            double diff = fb.values[j] - pool_means[p].values[j];
            acc += diff * diff;
        }
    }
    return acc / static_cast<double>(pool.size());
}

// Gradient of the pool loss with respect to the raw weights.
std::vector<double> blend_grad(const std::vector<double>& raw, const Tensor& images,
                               const std::vector<Mlp>& pool,
                               const std::vector<Tensor>& pool_means) {
    std::size_t n = images.rows();
    ad::Tape tape;
    ad::Var raw_v = tape.leaf(Tensor({1, n}, raw));
    ad::Var omega = tape.softplus_(raw_v);
    ad::Var blend = tape.div_scalar(tape.matmul(omega, tape.constant(images)),
                                    tape.sum(omega));
    ad::Var total{};
    for (std::size_t p = 0; p < pool.size(); ++p) {
        MlpVars mv = insert_params(tape, pool[p], false);
        ad::Var diff = tape.sub(forward_on(tape, mv, blend), tape.constant(pool_means[p]));
        ad::Var contrib = tape.sum(tape.square_(diff));
        total = p == 0 ? contrib : tape.add(total, contrib);
    }
    total = tape.scale(total, 1.0 / static_cast<double>(pool.size()));
    tape.backward(total);
    return tape.grad(raw_v).values;
}

}  // namespace

std::vector<double> BlendWeights::omega() const {
    std::vector<double> w(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) w[i] = softplus(raw[i]);
    return w;
}

Tensor blend_image(const Tensor& images, const BlendWeights& w) {
    std::size_t n = images.rows(), d = images.cols();
    if (n == 0) throw InputError("blend_image: empty image list");
    if (w.raw.size() != n) throw InputError("blend_image: weight count mismatch");
    std::vector<double> omega = w.omega();
    double sw = 0.0;
    for (double v : omega) sw += v;
    Tensor out = Tensor::zeros(1, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.values[j] += omega[i] * images.values[i * d + j];
    for (double& v : out.values) v /= sw;
    return out;
}

double blend_loss(const BlendWeights& w, const Tensor& images, const std::vector<Mlp>& pool) {
    if (pool.empty()) throw InputError("blend_loss: empty extractor pool");
    Tensor blend = blend_image(images, w);
    double acc = 0.0;
    for (const Mlp& ext : pool) {
        Tensor mu = mean_rows(feature_extract(ext, images));
        Tensor fb = feature_extract(ext, blend);
        double term = 0.0;
        for (std::size_t j = 0; j < mu.size(); ++j) {
            double diff = fb.values[j] - mu.values[j];
            term += diff * diff;
        }
        acc += term;
    }
    return acc / static_cast<double>(pool.size());
}

std::vector<Mlp> sample_pool(std::size_t input_dim, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw InputError("sample_pool: pool size must be positive");
    std::vector<Mlp> pool;
    pool.reserve(count);
    for (std::size_t p = 0; p < count; ++p)
        pool.push_back(sample_extractor(input_dim, derive_seed(seed, p)));
    return pool;
}

BlendWeights optimize_blend(const Tensor& images, const BlendConfig& cfg,
                            const std::vector<Mlp>& pool) {
    std::size_t n = images.rows();
    if (n == 0) throw InputError("optimize_blend: empty image list");
    if (pool.empty()) throw InputError("optimize_blend: empty extractor pool");
    if (cfg.steps < 0) throw InputError("optimize_blend: negative step count");
    if (!(cfg.lr > 0.0)) throw InputError("optimize_blend: learning rate must be positive");

    BlendWeights w;
    w.raw.assign(n, softplus_inv(1.0));  // uniform blend

    std::vector<Tensor> pool_means;
    pool_means.reserve(pool.size());
    for (const Mlp& ext : pool) pool_means.push_back(mean_rows(feature_extract(ext, images)));

    w.initial_loss = loss_with_means(w, images, pool, pool_means);
    double cur = w.initial_loss;

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<double> g;
        if (cfg.resample_pool) {
            std::vector<Mlp> step_pool{
                sample_extractor(images.cols(), derive_seed(cfg.seed, kStepSalt,
                                                            static_cast<std::uint64_t>(step)))};
            std::vector<Tensor> step_means{mean_rows(feature_extract(step_pool[0], images))};
            g = blend_grad(w.raw, images, step_pool, step_means);
        } else {
            g = blend_grad(w.raw, images, pool, pool_means);
        }

        double lr = cfg.lr;
        BlendWeights cand = w;
        for (int halving = 0; halving <= 10; ++halving) {
            for (std::size_t i = 0; i < n; ++i) cand.raw[i] = w.raw[i] - lr * g[i];
            double cl = loss_with_means(cand, images, pool, pool_means);
            if (cl <= cur) {
                w.raw = cand.raw;
                cur = cl;
                break;
            }
            lr *= 0.5;  // candidate rejected outright after the last halving
        }
    }

    w.final_loss = cur;
    return w;
}

BlendWeights optimize_blend(const Tensor& images, const BlendConfig& cfg) {
    return optimize_blend(images, cfg,
                          sample_pool(images.cols(), cfg.pool, derive_seed(cfg.seed, kPoolSalt)));
}

CondensedSet condense_clusters(const Partition& part, const std::vector<ClusterSubset>& subsets,
                               const Dataset& ds, const BlendConfig& cfg) {
    for (const auto& [cid, members] : subsets) {
        if (cid >= part.clusters.size())
            throw ConsistencyError("condense_clusters: cluster id out of range");
        if (members.empty())
            throw ConsistencyError("condense_clusters: empty member subset");
        std::set<std::size_t> in_cluster(part.clusters[cid].member_ids.begin(),
                                         part.clusters[cid].member_ids.end());
        for (std::size_t id : members)
            if (!in_cluster.count(id))
                throw ConsistencyError("condense_clusters: member outside its cluster");
    }

    std::vector<Mlp> pool =
        sample_pool(ds.dim(), cfg.pool, derive_seed(cfg.seed, kPoolSalt));

    CondensedSet cs;
    cs.prototypes.resize(subsets.size());
    parallel_for(subsets.size(), [&](std::size_t i) {
        const auto& [cid, members] = subsets[i];
        Tensor images = take_rows(ds.x, members);
        BlendConfig local = cfg;
        local.seed = derive_seed(cfg.seed, cid);
        BlendWeights w = optimize_blend(images, local, pool);
        Prototype& proto = cs.prototypes[i];
        proto.image = blend_image(images, w);
        proto.label = part.clusters[cid].class_label;
        proto.cluster_id = cid;
        proto.weights = std::move(w);
    });
    return cs;
}

CondensedSet condense_free(const Partition& part, const SplitResult& split, const Dataset& ds,
                           const BlendConfig& cfg) {
    std::vector<ClusterSubset> subsets;
    subsets.reserve(split.free_cluster_ids.size());
    for (std::size_t cid : split.free_cluster_ids) {
        if (cid >= part.clusters.size())
            throw ConsistencyError("condense_free: split inconsistent with partition");
        subsets.emplace_back(cid, part.clusters[cid].member_ids);
    }
    return condense_clusters(part, subsets, ds, cfg);
}

Batch build_reduced_retain(const CondensedSet& condensed,
                           const std::vector<std::size_t>& residual_ids,
                           const std::vector<std::size_t>& forget_ids, const Dataset& ds) {
    std::set<std::size_t> fset(forget_ids.begin(), forget_ids.end());
    for (std::size_t id : residual_ids)
        if (fset.count(id))
            throw ConsistencyError("build_reduced_retain: residual id is a forget id");

    std::size_t d = ds.dim();
    Batch out;
    out.x = Tensor::zeros(condensed.prototypes.size() + residual_ids.size(), d);
    out.y.reserve(out.x.rows());
    std::size_t row = 0;
    for (const Prototype& p : condensed.prototypes) {
        if (p.image.size() != d)
            throw DimError("build_reduced_retain: prototype width mismatch");
        std::copy(p.image.values.begin(), p.image.values.end(),
                  out.x.values.begin() + static_cast<std::ptrdiff_t>(row * d));
        out.y.push_back(p.label);
        ++row;
    }
    for (std::size_t id : residual_ids) {
        if (id >= ds.size()) throw InputError("build_reduced_retain: residual id out of range");
        std::copy(ds.x.values.begin() + static_cast<std::ptrdiff_t>(id * d),
                  ds.x.values.begin() + static_cast<std::ptrdiff_t>((id + 1) * d),
                  out.x.values.begin() + static_cast<std::ptrdiff_t>(row * d));
        out.y.push_back(ds.y[id]);
        ++row;
    }
    return out;
}

void save_condensed(const CondensedSet& cs, const std::string& path) {
    nlohmann::json j;
    auto& arr = j["prototypes"] = nlohmann::json::array();
    for (const Prototype& p : cs.prototypes) {
        nlohmann::json jp;
        jp["image"] = p.image.values;
        jp["label"] = p.label;
        jp["cluster_id"] = p.cluster_id;
        jp["raw_weights"] = p.weights.raw;
        jp["initial_loss"] = p.weights.initial_loss;
        jp["final_loss"] = p.weights.final_loss;
        arr.push_back(std::move(jp));
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("save_condensed: cannot open " + path);
    f << j.dump(1) << '\n';
}

CondensedSet load_condensed(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("load_condensed: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_condensed: ") + e.what());
    }
    CondensedSet cs;
    try {
        for (const auto& jp : j.at("prototypes")) {
            Prototype p;
            std::vector<double> img = jp.at("image").get<std::vector<double>>();
            std::size_t width = img.size();
            p.image = Tensor({1, width}, std::move(img));
            p.label = jp.at("label").get<int>();
            p.cluster_id = jp.at("cluster_id").get<std::size_t>();
            p.weights.raw = jp.at("raw_weights").get<std::vector<double>>();
            p.weights.initial_loss = jp.at("initial_loss").get<double>();
            p.weights.final_loss = jp.at("final_loss").get<double>();
            cs.prototypes.push_back(std::move(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_condensed: ") + e.what());
    }
    return cs;
}

}  // namespace ulab
