#include "ulab/unlearn.hpp"

#include <chrono>
#include <numeric>

#include "ulab/eval.hpp"
#include "ulab/gaussianize.hpp"

namespace ulab {

namespace {

constexpr std::uint64_t kInitSalt = 0x1217;
constexpr std::uint64_t kEpochSalt = 0xE04C;
constexpr std::uint64_t kBatchSalt = 0xBA7C;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool uses_discrepancy(UnlearnMethod m) {
    return m == UnlearnMethod::ACf || m == UnlearnMethod::AL1;
}

std::vector<std::size_t> model_dims(const Mlp& m) {
    std::vector<std::size_t> dims{m.input_dim()};
    for (const Layer& l : m.layers) dims.push_back(l.W.cols());
    return dims;
}

EpochMetrics snapshot(const Mlp& model, const UnlearnData& data) {
    EpochMetrics em;
    em.retain_acc = data.retain.empty() ? 0.0 : accuracy(model, data.retain);
    em.forget_acc = data.forget.empty() ? 0.0 : accuracy(model, data.forget);
    em.test_acc = data.test_eval.empty() ? 0.0 : accuracy(model, data.test_eval);
    // The attack needs both member and non-member losses; without them the
    // chance value stands.
    if (!data.forget.empty() && !data.t.empty())
        em.mia = mia_score(model, data.forget, data.t);
    return em;
}

}  // namespace

const char* method_name(UnlearnMethod m) {
    switch (m) {
        case UnlearnMethod::Retrain: return "retrain";
        case UnlearnMethod::Cf: return "cf";
        case UnlearnMethod::ACf: return "a_cf";
        case UnlearnMethod::L1Sparse: return "l1_sparse";
        case UnlearnMethod::AL1: return "a_l1";
    }
    return "?";
}

UnlearnMethod parse_method(const std::string& s) {
    if (s == "retrain") return UnlearnMethod::Retrain;
    if (s == "cf") return UnlearnMethod::Cf;
    if (s == "a_cf") return UnlearnMethod::ACf;
    if (s == "l1_sparse") return UnlearnMethod::L1Sparse;
    if (s == "a_l1") return UnlearnMethod::AL1;
    throw InputError("unknown unlearning method: " + s);
}

const char* retain_source_name(RetainSource r) {
    switch (r) {
        case RetainSource::Full: return "full";
        case RetainSource::Reduced: return "reduced";
        case RetainSource::FreeRaw: return "free_raw";
        case RetainSource::FreeCondensed: return "free_condensed";
        case RetainSource::ResidualRaw: return "residual_raw";
        case RetainSource::ResidualCondensed: return "residual_condensed";
        case RetainSource::FullCondensed: return "full_condensed";
    }
    return "?";
}

RetainSource parse_retain_source(const std::string& s) {
    if (s == "full") return RetainSource::Full;
    if (s == "reduced") return RetainSource::Reduced;
    if (s == "free_raw") return RetainSource::FreeRaw;
    if (s == "free_condensed") return RetainSource::FreeCondensed;
    if (s == "residual_raw") return RetainSource::ResidualRaw;
    if (s == "residual_condensed") return RetainSource::ResidualCondensed;
    if (s == "full_condensed") return RetainSource::FullCondensed;
    throw InputError("unknown retain source: " + s);
}

ad::Var a_amu_objective_on(ad::Tape& tape, const MlpVars& mv, const Batch& retain,
                           const Batch& forget, const Batch& t, double lambda, double k,
                           double gamma_l1) {
    if (retain.empty()) throw InputError("a_amu_objective: empty retain batch");
    if (lambda < 0.0 || gamma_l1 < 0.0)
        throw InputError("a_amu_objective: negative coefficient");

    ad::Var retain_ce = tape.mean(
        tape.softmax_ce(forward_on(tape, mv, tape.constant(retain.x)), retain.y));
    ad::Var obj = tape.square_(retain_ce);

    if (lambda != 0.0) {
        if (forget.size() < 2 || t.size() < 2)
            throw InputError("a_amu_objective: batch too small for the soft CDF (need >= 2)");
        auto gaussianized = [&](const Batch& b) {
            ad::Var losses = tape.softmax_ce(forward_on(tape, mv, tape.constant(b.x)), b.y);
            return tape.probit_clamp(tape.soft_cdf(tape.log1p_(losses), k), kCdfClampLo);
        };
        obj = tape.add(obj, tape.scale(tape.mmd(gaussianized(forget), gaussianized(t)), lambda));
    }
    if (gamma_l1 != 0.0) obj = tape.add(obj, tape.scale(l1_norm(tape, mv), gamma_l1));
    return obj;
}

double a_amu_objective(const Mlp& m, const Batch& retain, const Batch& forget, const Batch& t,
                       double lambda, double k, double gamma_l1) {
    return eval_objective(m, [&](ad::Tape& tape, const MlpVars& mv) {
        return a_amu_objective_on(tape, mv, retain, forget, t, lambda, k, gamma_l1);
    });
}

std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t m) {
    if (n == 0) throw InputError("sample_indices: empty source");
    if (m <= n) {
        std::vector<std::size_t> pool(n);
        std::iota(pool.begin(), pool.end(), 0);
        for (std::size_t i = 0; i < m; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.next_below(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(m);
        return pool;
    }
    std::vector<std::size_t> out(m);
    for (auto& v : out) v = static_cast<std::size_t>(rng.next_below(n));
    return out;
}

UnlearnResult run_unlearning(const Mlp& pretrained, const UnlearnData& data,
                             const UnlearnConfig& cfg) {
    if (data.retain.empty()) throw InputError("run_unlearning: missing retain split");
    if (cfg.epochs < 0) throw InputError("run_unlearning: negative epoch count");
    if (!(cfg.lr > 0.0)) throw InputError("run_unlearning: learning rate must be positive");
    if (cfg.batch_retain == 0) throw InputError("run_unlearning: zero retain batch size");
    if (uses_discrepancy(cfg.method)) {
        if (data.forget.empty() || data.t.empty())
            throw InputError("run_unlearning: missing forget or T split");
        if (cfg.batch_f < 2)
            throw InputError("run_unlearning: batch_f too small for the soft CDF");
        if (cfg.batch_f > std::min(data.forget.size(), data.t.size()))
            throw InputError("run_unlearning: batch_f exceeds the forget or T split");
    } else if (cfg.method == UnlearnMethod::Retrain || cfg.method == UnlearnMethod::Cf) {
        if (cfg.lambda != 0.0 || cfg.gamma_l1 != 0.0)
            throw InputError("run_unlearning: retrain/cf take no objective coefficients");
    }

    UnlearnResult res;
    res.model = pretrained;
    if (cfg.method == UnlearnMethod::Retrain)
        res.model = init_model(model_dims(pretrained), derive_seed(cfg.seed, kInitSalt),
                               pretrained.act);

    std::size_t batch_retain = std::min(cfg.batch_retain, data.retain.size());

    if (uses_discrepancy(cfg.method)) {
        double gamma = cfg.method == UnlearnMethod::AL1 ? cfg.gamma_l1 : 0.0;
        Rng rng(derive_seed(cfg.seed, kBatchSalt));
        std::vector<std::size_t> order(data.retain.size());
        std::iota(order.begin(), order.end(), 0);

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            auto t0 = Clock::now();
            rng.shuffle(order);
            double loss_sum = 0.0;
            std::size_t steps = 0;
            for (std::size_t off = 0; off < order.size(); off += batch_retain) {
                std::size_t hi = std::min(off + batch_retain, order.size());
                std::vector<std::size_t> idx(
                    order.begin() + static_cast<std::ptrdiff_t>(off),
                    order.begin() + static_cast<std::ptrdiff_t>(hi));
                Batch mb = take(data.retain, idx);
                Batch fb = take(data.forget,
                                sample_indices(rng, data.forget.size(), cfg.batch_f));
                Batch tb = take(data.t, sample_indices(rng, data.t.size(), cfg.batch_f));

                ad::Tape tape;
                MlpVars mv = insert_params(tape, res.model, true);
                ad::Var obj = a_amu_objective_on(tape, mv, mb, fb, tb, cfg.lambda,
                                                 cfg.k_temp, gamma);
                tape.backward(obj);
                Gradient g;
                for (std::size_t l = 0; l < mv.W.size(); ++l)
                    g.layers.push_back(Layer{tape.grad(mv.W[l]), tape.grad(mv.b[l])});
                loss_sum += tape.val(obj).values[0];
                ++steps;
                sgd_step(res.model, g, cfg.lr);
            }
            res.unlearn_seconds += seconds_since(t0);
            res.loss_history.push_back(loss_sum / static_cast<double>(steps));
            if (cfg.record_trail) res.trail.push_back(snapshot(res.model, data));
        }
        return res;
    }

    // CE-based methods: retrain, cf, l1_sparse. One train() call per epoch so
    // the trail can be recorded outside the timed region.
    StepObjective step = cfg.method == UnlearnMethod::L1Sparse
                             ? ce_l1_objective(cfg.gamma_l1)
                             : ce_objective();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        TrainConfig tc;
        tc.lr = cfg.lr;
        tc.epochs = 1;
        tc.batch = batch_retain;
        tc.seed = derive_seed(cfg.seed, kEpochSalt, static_cast<std::uint64_t>(epoch));
        auto t0 = Clock::now();
        std::vector<double> hist = train(res.model, data.retain, tc, step);
        res.unlearn_seconds += seconds_since(t0);
        res.loss_history.push_back(hist[0]);
        if (cfg.record_trail) res.trail.push_back(snapshot(res.model, data));
    }
    return res;
}

}  // namespace ulab
