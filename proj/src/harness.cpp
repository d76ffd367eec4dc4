#include "ulab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <mutex>
#include <set>
#include <sstream>

#include "json.hpp"
#include "ulab/parallel.hpp"

namespace ulab {

namespace {

// Stage tags feeding the seed chain run_seed -> tag -> indices.
constexpr std::uint64_t kDataSalt = 0x01;
constexpr std::uint64_t kModelInitSalt = 0x02;
constexpr std::uint64_t kPretrainSalt = 0x03;
constexpr std::uint64_t kForgetSalt = 0x04;
constexpr std::uint64_t kPartitionSalt = 0x05;
constexpr std::uint64_t kBlendSalt = 0x06;
constexpr std::uint64_t kUnlearnSalt = 0x07;
constexpr std::uint64_t kPartExtSalt = 0x08;

std::uint64_t chain_seed(std::uint64_t base, std::initializer_list<std::uint64_t> salts) {
    for (std::uint64_t s : salts) base = derive_seed(base, s);
    return base;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return out;
    } catch (const std::exception&) {
        throw InputError("config key " + key + ": expected integer, got '" + v + "'");
    }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return out;
    } catch (const std::exception&) {
        throw InputError("config key " + key + ": expected unsigned integer, got '" + v + "'");
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing junk");
        return out;
    } catch (const std::exception&) {
        throw InputError("config key " + key + ": expected number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InputError("config key " + key + ": expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (trim(v).empty()) return out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ','))
        out.push_back(static_cast<std::size_t>(to_u64(key, trim(item))));
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

std::string now_iso_utc() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

ExperimentConfig default_config() { return ExperimentConfig{}; }

StageSeeds stage_seeds(const ExperimentConfig& cfg, std::uint64_t arm, int repeat, int round) {
    auto rep = static_cast<std::uint64_t>(repeat);
    auto rnd = static_cast<std::uint64_t>(round);
    StageSeeds s;
    s.data = chain_seed(cfg.run_seed, {kDataSalt});
    s.model_init = chain_seed(cfg.run_seed, {kModelInitSalt});
    s.pretrain = chain_seed(cfg.run_seed, {kPretrainSalt});
    s.forget = chain_seed(cfg.run_seed, {kForgetSalt, rep, rnd});
    s.partition = chain_seed(cfg.run_seed, {kPartitionSalt, rep, rnd});
    s.blend = chain_seed(cfg.run_seed, {kBlendSalt, rep, rnd});
    s.unlearn = chain_seed(cfg.run_seed, {kUnlearnSalt, arm, rep, rnd});
    return s;
}

Dataset generate_data(const ExperimentConfig& cfg) {
    if (!cfg.data.file.empty()) return load_dataset(cfg.data.file);
    return gen_gaussian_classes(cfg.data.classes, cfg.data.per_class, cfg.data.dim,
                                cfg.data.separation, chain_seed(cfg.run_seed, {kDataSalt}));
}

Mlp partition_extractor(const Dataset& ds, std::uint64_t partition_seed) {
    return sample_extractor(ds.dim(), derive_seed(partition_seed, kPartExtSalt));
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "data.classes") cfg.data.classes = to_int(key, value);
    else if (key == "data.per_class") cfg.data.per_class = to_u64(key, value);
    else if (key == "data.dim") cfg.data.dim = to_u64(key, value);
    else if (key == "data.separation") cfg.data.separation = to_double(key, value);
    else if (key == "data.file") cfg.data.file = value;
    else if (key == "model.hidden") cfg.hidden = to_size_list(key, value);
    else if (key == "pretrain.lr") cfg.pretrain.lr = to_double(key, value);
    else if (key == "pretrain.epochs") cfg.pretrain.epochs = to_int(key, value);
    else if (key == "pretrain.batch") cfg.pretrain.batch = to_u64(key, value);
    else if (key == "partition.k") cfg.partition_k = to_u64(key, value);
    else if (key == "blend.steps") cfg.blend.steps = to_int(key, value);
    else if (key == "blend.lr") cfg.blend.lr = to_double(key, value);
    else if (key == "blend.pool") cfg.blend.pool = to_u64(key, value);
    else if (key == "blend.resample") cfg.blend.resample_pool = to_bool(key, value);
    else if (key == "unlearn.method") cfg.unlearn.method = parse_method(value);
    else if (key == "unlearn.epochs") cfg.unlearn.epochs = to_int(key, value);
    else if (key == "unlearn.lr") cfg.unlearn.lr = to_double(key, value);
    else if (key == "unlearn.batch_retain") cfg.unlearn.batch_retain = to_u64(key, value);
    else if (key == "unlearn.batch_f") cfg.unlearn.batch_f = to_u64(key, value);
    else if (key == "unlearn.lambda") cfg.unlearn.lambda = to_double(key, value);
    else if (key == "unlearn.k") cfg.unlearn.k_temp = to_double(key, value);
    else if (key == "unlearn.gamma_l1") cfg.unlearn.gamma_l1 = to_double(key, value);
    else if (key == "unlearn.retain_source")
        cfg.unlearn.retain_source = parse_retain_source(value);
    else if (key == "unlearn.trail") cfg.unlearn.record_trail = to_bool(key, value);
    else if (key == "forget.mode") {
        if (value == "random_class") cfg.forget.mode = ForgetMode::RandomClass;
        else if (value == "uniform_fraction") cfg.forget.mode = ForgetMode::UniformFraction;
        else if (value == "explicit_ids") cfg.forget.mode = ForgetMode::ExplicitIds;
        else throw InputError("config key forget.mode: unknown mode '" + value + "'");
    } else if (key == "forget.class_id") cfg.forget.class_id = to_int(key, value);
    else if (key == "forget.fraction") cfg.forget.fraction = to_double(key, value);
    else if (key == "forget.ids") cfg.forget.explicit_ids = to_size_list(key, value);
    else if (key == "rounds.count") cfg.rounds = to_int(key, value);
    else if (key == "rounds.of_original") cfg.rounds_of_original = to_bool(key, value);
    else if (key == "run.seed") cfg.run_seed = to_u64(key, value);
    else if (key == "run.repeats") cfg.repeats = to_int(key, value);
    else if (key == "output.dir") cfg.output_dir = value;
    else if (key == "output.deterministic") cfg.deterministic_output = to_bool(key, value);
    else if (key == "output.trail") cfg.write_trail = to_bool(key, value);
    else throw InputError("unknown config key: " + key);
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg = default_config();
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw InputError("config line " + std::to_string(lineno) +
                             ": expected key = value");
        apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("load_config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const ExperimentConfig& cfg) {
    char num[64];
    auto fmt = [&](double v) {
        std::snprintf(num, sizeof(num), "%.17g", v);
        return std::string(num);
    };
    std::string out;
    auto put = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
    put("data.classes", std::to_string(cfg.data.classes));
    put("data.per_class", std::to_string(cfg.data.per_class));
    put("data.dim", std::to_string(cfg.data.dim));
    put("data.separation", fmt(cfg.data.separation));
    put("data.file", cfg.data.file);
    put("model.hidden", join_sizes(cfg.hidden));
    put("pretrain.lr", fmt(cfg.pretrain.lr));
    put("pretrain.epochs", std::to_string(cfg.pretrain.epochs));
    put("pretrain.batch", std::to_string(cfg.pretrain.batch));
    put("partition.k", std::to_string(cfg.partition_k));
    put("blend.steps", std::to_string(cfg.blend.steps));
    put("blend.lr", fmt(cfg.blend.lr));
    put("blend.pool", std::to_string(cfg.blend.pool));
    put("blend.resample", cfg.blend.resample_pool ? "true" : "false");
    put("unlearn.method", method_name(cfg.unlearn.method));
    put("unlearn.epochs", std::to_string(cfg.unlearn.epochs));
    put("unlearn.lr", fmt(cfg.unlearn.lr));
    put("unlearn.batch_retain", std::to_string(cfg.unlearn.batch_retain));
    put("unlearn.batch_f", std::to_string(cfg.unlearn.batch_f));
    put("unlearn.lambda", fmt(cfg.unlearn.lambda));
    put("unlearn.k", fmt(cfg.unlearn.k_temp));
    put("unlearn.gamma_l1", fmt(cfg.unlearn.gamma_l1));
    put("unlearn.retain_source", retain_source_name(cfg.unlearn.retain_source));
    put("unlearn.trail", cfg.unlearn.record_trail ? "true" : "false");
    put("forget.mode", forget_mode_name(cfg.forget.mode));
    put("forget.class_id", std::to_string(cfg.forget.class_id));
    put("forget.fraction", fmt(cfg.forget.fraction));
    put("forget.ids", join_sizes(cfg.forget.explicit_ids));
    put("rounds.count", std::to_string(cfg.rounds));
    put("rounds.of_original", cfg.rounds_of_original ? "true" : "false");
    put("run.seed", std::to_string(cfg.run_seed));
    put("run.repeats", std::to_string(cfg.repeats));
    put("output.dir", cfg.output_dir);
    put("output.deterministic", cfg.deterministic_output ? "true" : "false");
    put("output.trail", cfg.write_trail ? "true" : "false");
    return out;
}

void validate_config(const ExperimentConfig& cfg) {
    if (cfg.data.file.empty()) {
        if (cfg.data.classes < 2) throw InputError("config: data.classes must be >= 2");
        if (cfg.data.per_class < 2) throw InputError("config: data.per_class must be >= 2");
        if (cfg.data.dim < 2) throw InputError("config: data.dim must be >= 2");
        if (!(cfg.data.separation >= 0.0))
            throw InputError("config: data.separation must be nonnegative");
    }
    if (!(cfg.pretrain.lr > 0.0)) throw InputError("config: pretrain.lr must be positive");
    if (cfg.pretrain.epochs < 0) throw InputError("config: pretrain.epochs must be >= 0");
    if (cfg.pretrain.batch == 0) throw InputError("config: pretrain.batch must be >= 1");
    if (cfg.partition_k == 0) throw InputError("config: partition.k must be >= 1");
    if (cfg.blend.steps < 0) throw InputError("config: blend.steps must be >= 0");
    if (!(cfg.blend.lr > 0.0)) throw InputError("config: blend.lr must be positive");
    if (cfg.blend.pool == 0) throw InputError("config: blend.pool must be >= 1");
    if (cfg.unlearn.epochs < 0) throw InputError("config: unlearn.epochs must be >= 0");
    if (!(cfg.unlearn.lr > 0.0)) throw InputError("config: unlearn.lr must be positive");
    if (cfg.unlearn.batch_retain == 0)
        throw InputError("config: unlearn.batch_retain must be >= 1");
    if (cfg.unlearn.lambda < 0.0) throw InputError("config: unlearn.lambda must be >= 0");
    if (cfg.unlearn.gamma_l1 < 0.0) throw InputError("config: unlearn.gamma_l1 must be >= 0");
    if (!(cfg.unlearn.k_temp > 0.0)) throw InputError("config: unlearn.k must be positive");
    if ((cfg.unlearn.method == UnlearnMethod::ACf || cfg.unlearn.method == UnlearnMethod::AL1) &&
        cfg.unlearn.batch_f < 32)
        throw InputError("config: unlearn.batch_f must be >= 32 for a_* methods");
    if (cfg.forget.mode == ForgetMode::UniformFraction &&
        !(cfg.forget.fraction > 0.0 && cfg.forget.fraction < 1.0))
        throw InputError("config: forget.fraction must be in (0, 1)");
    if (cfg.forget.mode == ForgetMode::RandomClass && cfg.data.file.empty() &&
        (cfg.forget.class_id < -1 || cfg.forget.class_id >= cfg.data.classes))
        throw InputError("config: forget.class_id out of range");
    if (cfg.rounds < 1) throw InputError("config: rounds.count must be >= 1");
    if (cfg.repeats < 1) throw InputError("config: run.repeats must be >= 1");
}

void save_model(const Mlp& m, const std::string& path) {
    nlohmann::json j;
    j["act"] = m.act == Act::Tanh ? "tanh" : "relu";
    auto& arr = j["layers"] = nlohmann::json::array();
    for (const Layer& l : m.layers) {
        nlohmann::json jl;
        jl["in"] = l.W.rows();
        jl["out"] = l.W.cols();
        jl["w"] = l.W.values;
        jl["b"] = l.b.values;
        arr.push_back(std::move(jl));
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("save_model: cannot open " + path);
    f << j.dump(1) << '\n';
}

Mlp load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError("load_model: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_model: ") + e.what());
    }
    Mlp m;
    try {
        std::string act = j.at("act").get<std::string>();
        if (act == "tanh") m.act = Act::Tanh;
        else if (act == "relu") m.act = Act::Relu;
        else throw FormatError("load_model: unknown activation '" + act + "'");
        for (const auto& jl : j.at("layers")) {
            Layer l;
            auto in = jl.at("in").get<std::size_t>();
            auto out = jl.at("out").get<std::size_t>();
            l.W = Tensor({in, out}, jl.at("w").get<std::vector<double>>());
            l.b = Tensor({1, out}, jl.at("b").get<std::vector<double>>());
            m.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("load_model: ") + e.what());
    }
    if (m.layers.empty()) throw FormatError("load_model: no layers");
    return m;
}

PipelineContext prepare_context(const ExperimentConfig& cfg) {
    PipelineContext ctx;
    ctx.ds = generate_data(cfg);

    StageSeeds seeds = stage_seeds(cfg);
    std::vector<std::size_t> dims{ctx.ds.dim()};
    for (std::size_t h : cfg.hidden) dims.push_back(h);
    dims.push_back(static_cast<std::size_t>(ctx.ds.class_count));
    ctx.pretrained = init_model(dims, seeds.model_init, Act::Tanh);

    TrainConfig tc = cfg.pretrain;
    tc.seed = seeds.pretrain;
    if (tc.epochs > 0) {
        Batch train_batch = batch_of(ctx.ds, ctx.ds.train_ids());
        tc.batch = std::min(tc.batch, train_batch.size());
        train(ctx.pretrained, train_batch, tc);
    }
    return ctx;
}

MaterializedRetain materialize_retain(const Dataset& ds, const std::vector<std::size_t>& pool,
                                      const Splits& splits, RetainSource src, std::size_t k,
                                      std::uint64_t partition_seed, const BlendConfig& blend) {
    MaterializedRetain out;
    if (src == RetainSource::Full) {
        out.retain = batch_of(ds, splits.retain_ids);
        return out;
    }

    auto t0 = std::chrono::steady_clock::now();
    Mlp ext = partition_extractor(ds, partition_seed);
    Partition part = partition_dataset(ds, ext, k, partition_seed, pool);
    SplitResult sr = sample_F(part, splits.forget_ids);

    std::set<std::size_t> fset(splits.forget_ids.begin(), splits.forget_ids.end());
    std::set<std::size_t> free_set(sr.free_cluster_ids.begin(), sr.free_cluster_ids.end());

    auto touched_subsets = [&] {
        std::vector<ClusterSubset> subsets;
        for (std::size_t ci = 0; ci < part.clusters.size(); ++ci) {
            if (free_set.count(ci)) continue;
            std::vector<std::size_t> members;
            for (std::size_t id : part.clusters[ci].member_ids)
                if (!fset.count(id)) members.push_back(id);
            if (!members.empty()) subsets.emplace_back(ci, std::move(members));
        }
        return subsets;
    };

    switch (src) {
        case RetainSource::Full:
            break;  // handled above
        case RetainSource::FreeRaw: {
            std::vector<std::size_t> ids;
            for (std::size_t ci : sr.free_cluster_ids)
                for (std::size_t id : part.clusters[ci].member_ids) ids.push_back(id);
            std::sort(ids.begin(), ids.end());
            out.retain = batch_of(ds, ids);
            break;
        }
        case RetainSource::ResidualRaw:
            out.retain = batch_of(ds, sr.residual_image_ids);
            break;
        case RetainSource::FreeCondensed: {
            CondensedSet cs = condense_free(part, sr, ds, blend);
            out.retain = build_reduced_retain(cs, {}, splits.forget_ids, ds);
            break;
        }
        case RetainSource::Reduced: {
            CondensedSet cs = condense_free(part, sr, ds, blend);
            out.retain = build_reduced_retain(cs, sr.residual_image_ids, splits.forget_ids, ds);
            break;
        }
        case RetainSource::ResidualCondensed: {
            CondensedSet cs = condense_clusters(part, touched_subsets(), ds, blend);
            out.retain = build_reduced_retain(cs, {}, splits.forget_ids, ds);
            break;
        }
        case RetainSource::FullCondensed: {
            std::vector<ClusterSubset> subsets;
            for (std::size_t ci : sr.free_cluster_ids)
                subsets.emplace_back(ci, part.clusters[ci].member_ids);
            for (auto& s : touched_subsets()) subsets.push_back(std::move(s));
            std::sort(subsets.begin(), subsets.end(),
                      [](const ClusterSubset& a, const ClusterSubset& b) {
                          return a.first < b.first;
                      });
            CondensedSet cs = condense_clusters(part, subsets, ds, blend);
            out.retain = build_reduced_retain(cs, {}, splits.forget_ids, ds);
            break;
        }
    }
    out.preprocess_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

namespace {

struct RoundOutcome {
    UnlearnResult result;
    MetricsReport metrics;
    Splits splits;
};

std::vector<RoundOutcome> execute_rounds(const PipelineContext& ctx,
                                         const ExperimentConfig& cfg, RetainSource src,
                                         std::uint64_t arm_idx, int repeat_idx,
                                         const std::vector<ForgetSpec>* explicit_specs) {
    std::vector<RoundOutcome> outcomes;
    std::vector<std::size_t> pool = ctx.ds.train_ids();
    std::size_t original_train = pool.size();
    Mlp model = ctx.pretrained;
    auto rep = static_cast<std::uint64_t>(repeat_idx);

    int rounds = explicit_specs ? static_cast<int>(explicit_specs->size()) : cfg.rounds;
    for (int round = 0; round < rounds; ++round) {
        auto rnd = static_cast<std::uint64_t>(round);
        ForgetSpec spec = explicit_specs ? (*explicit_specs)[static_cast<std::size_t>(round)]
                                         : cfg.forget;
        if (!explicit_specs)
            spec.seed = chain_seed(cfg.run_seed, {kForgetSalt, rep, rnd});
        Splits splits = make_splits_from_pool(ctx.ds, pool, spec,
                                              cfg.rounds_of_original ? original_train : 0);

        BlendConfig blend = cfg.blend;
        blend.seed = chain_seed(cfg.run_seed, {kBlendSalt, rep, rnd});
        MaterializedRetain mat =
            materialize_retain(ctx.ds, pool, splits, src, cfg.partition_k,
                               chain_seed(cfg.run_seed, {kPartitionSalt, rep, rnd}), blend);

        UnlearnConfig ucfg = cfg.unlearn;
        ucfg.retain_source = src;
        ucfg.seed = chain_seed(cfg.run_seed, {kUnlearnSalt, arm_idx, rep, rnd});
        if (ucfg.method == UnlearnMethod::Retrain || ucfg.method == UnlearnMethod::Cf) {
            ucfg.lambda = 0.0;
            ucfg.gamma_l1 = 0.0;
        }

        UnlearnData data;
        data.retain = std::move(mat.retain);
        data.forget = batch_of(ctx.ds, splits.forget_ids);
        data.t = batch_of(ctx.ds, splits.t_ids);
        data.test_eval = batch_of(ctx.ds, splits.test_eval_ids);

        RoundOutcome oc;
        oc.result = run_unlearning(model, data, ucfg);
        // Metrics always score the true retain set, even when training saw a
        // condensed stand-in.
        Batch full_retain = batch_of(ctx.ds, splits.retain_ids);
        oc.metrics = report(oc.result.model, full_retain, data.forget, data.t, data.test_eval,
                            oc.result.unlearn_seconds, mat.preprocess_seconds,
                            cfg.unlearn.k_temp);
        model = oc.result.model;
        pool = splits.retain_ids;
        oc.splits = std::move(splits);
        outcomes.push_back(std::move(oc));
    }
    return outcomes;
}

RunRecord run_arms(const ExperimentConfig& cfg, const std::vector<RetainSource>& arms) {
    validate_config(cfg);
    PipelineContext ctx = prepare_context(cfg);

    struct Slot {
        std::vector<RoundOutcome> outcomes;
        std::string error;
    };
    std::size_t tasks = arms.size() * static_cast<std::size_t>(cfg.repeats);
    std::vector<Slot> slots(tasks);
    parallel_for(tasks, [&](std::size_t i) {
        std::size_t arm = i / static_cast<std::size_t>(cfg.repeats);
        int repeat = static_cast<int>(i % static_cast<std::size_t>(cfg.repeats));
        try {
            slots[i].outcomes =
                execute_rounds(ctx, cfg, arms[arm], arm, repeat, nullptr);
        } catch (const std::exception& e) {
            slots[i].error = std::string("arm ") + retain_source_name(arms[arm]) +
                             " repeat " + std::to_string(repeat) + ": " + e.what();
        }
    });

    RunRecord record;
    record.config_text = config_to_text(cfg);
    record.timestamp = now_iso_utc();
    for (std::size_t arm = 0; arm < arms.size(); ++arm)
        for (int repeat = 0; repeat < cfg.repeats; ++repeat) {
            Slot& slot = slots[arm * static_cast<std::size_t>(cfg.repeats) +
                               static_cast<std::size_t>(repeat)];
            if (!slot.error.empty()) {
                record.errors.push_back(slot.error);
                continue;
            }
            for (std::size_t round = 0; round < slot.outcomes.size(); ++round) {
                RunEntry entry;
                entry.method = method_name(cfg.unlearn.method);
                entry.retain_source = retain_source_name(arms[arm]);
                entry.round = static_cast<int>(round);
                entry.repeat = repeat;
                entry.seed = chain_seed(cfg.run_seed,
                                        {kUnlearnSalt, arm, static_cast<std::uint64_t>(repeat),
                                         static_cast<std::uint64_t>(round)});
                entry.metrics = slot.outcomes[round].metrics;
                entry.trail = slot.outcomes[round].result.trail;
                record.entries.push_back(std::move(entry));
            }
        }

    if (!cfg.output_dir.empty()) persist_outputs(record, cfg);
    return record;
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg) {
    return run_arms(cfg, {cfg.unlearn.retain_source});
}

RunRecord run_ablation(const ExperimentConfig& cfg) {
    return run_arms(cfg, {RetainSource::Full, RetainSource::FullCondensed,
                          RetainSource::FreeRaw, RetainSource::FreeCondensed,
                          RetainSource::ResidualRaw, RetainSource::ResidualCondensed,
                          RetainSource::Reduced});
}

std::vector<UnlearnResult> run_rounds(const Mlp& pretrained, const Dataset& ds,
                                      const std::vector<ForgetSpec>& round_specs,
                                      const ExperimentConfig& cfg) {
    if (round_specs.empty()) throw InputError("run_rounds: no rounds given");
    PipelineContext ctx{ds, pretrained};
    std::vector<RoundOutcome> outcomes =
        execute_rounds(ctx, cfg, cfg.unlearn.retain_source, 0, 0, &round_specs);
    std::vector<UnlearnResult> results;
    results.reserve(outcomes.size());
    for (auto& oc : outcomes) results.push_back(std::move(oc.result));
    return results;
}

std::string render_csv(const RunRecord& record, bool deterministic_output) {
    std::string out = csv_header() + "\n";
    for (const RunEntry& e : record.entries) {
        MetricsReport m = e.metrics;
        if (deterministic_output) {
            m.unlearning_seconds = 0.0;
            m.preprocessing_seconds = 0.0;
        }
        out += csv_row(e.method, e.retain_source, e.round, m, e.seed) + "\n";
    }
    return out;
}

std::string run_record_json(const RunRecord& record) {
    nlohmann::json j;
    j["version"] = record.version;
    j["timestamp"] = record.timestamp;
    j["config"] = record.config_text;
    j["errors"] = record.errors;
    auto& arr = j["entries"] = nlohmann::json::array();
    for (const RunEntry& e : record.entries) {
        nlohmann::json je;
        je["method"] = e.method;
        je["retain_source"] = e.retain_source;
        je["round"] = e.round;
        je["repeat"] = e.repeat;
        je["seed"] = e.seed;
        je["threshold_mia"] = e.metrics.mia_score;
        je["retain_acc"] = e.metrics.retain_acc;
        je["forget_acc"] = e.metrics.forget_acc;
        je["test_acc"] = e.metrics.test_acc;
        je["preprocess_s"] = e.metrics.preprocessing_seconds;
        je["unlearn_s"] = e.metrics.unlearning_seconds;
        arr.push_back(std::move(je));
    }
    return j.dump(1) + "\n";
}

void save_run_record(const RunRecord& record, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw InputError("save_run_record: cannot open " + path);
    f << run_record_json(record);
}

std::string persist_outputs(const RunRecord& record, const ExperimentConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    std::string csv = render_csv(record, cfg.deterministic_output);

    std::ofstream f(cfg.output_dir + "/results.csv", std::ios::trunc);
    if (!f) throw InputError("persist_outputs: cannot write results.csv");
    f << csv;
    f.close();

    save_run_record(record, cfg.output_dir + "/run_record.json");

    if (cfg.write_trail) {
        for (const RunEntry& e : record.entries) {
            if (e.trail.empty()) continue;
            std::string name = cfg.output_dir + "/trail_" + e.retain_source + "_r" +
                               std::to_string(e.repeat) + "_round" + std::to_string(e.round) +
                               ".csv";
            std::ofstream tf(name, std::ios::trunc);
            if (!tf) throw InputError("persist_outputs: cannot write " + name);
            tf << "epoch,threshold_mia,retain_acc,forget_acc,test_acc\n";
            for (std::size_t ep = 0; ep < e.trail.size(); ++ep) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "%zu,%.4f,%.4f,%.4f,%.4f\n", ep,
                              e.trail[ep].mia, e.trail[ep].retain_acc, e.trail[ep].forget_acc,
                              e.trail[ep].test_acc);
                tf << buf;
            }
        }
    }
    return csv;
}

}  // namespace ulab
