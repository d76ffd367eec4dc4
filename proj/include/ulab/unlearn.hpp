#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ulab/common.hpp"
#include "ulab/nn.hpp"

namespace ulab {

enum class UnlearnMethod { Retrain, Cf, ACf, L1Sparse, AL1 };

// Which training set an unlearning run sees in place of the full retain set.
enum class RetainSource {
    Full,               // raw retain set
    Reduced,            // free-cluster prototypes + raw residual
    FreeRaw,            // free-cluster members only, raw
    FreeCondensed,      // free-cluster prototypes only
    ResidualRaw,        // residual samples only, raw
    ResidualCondensed,  // one prototype per touched cluster's retained members
    FullCondensed,      // every cluster condensed (retained members only)
};

const char* method_name(UnlearnMethod m);
UnlearnMethod parse_method(const std::string& s);
const char* retain_source_name(RetainSource r);
RetainSource parse_retain_source(const std::string& s);

struct UnlearnConfig {
    UnlearnMethod method = UnlearnMethod::Cf;
    int epochs = 10;
    double lr = 0.05;
    std::size_t batch_retain = 64;
    std::size_t batch_f = 32;   // forget/T batch size for the discrepancy term
    double lambda = 1.0;        // weight of the loss-distribution term
    double k_temp = 100.0;      // soft CDF temperature
    double gamma_l1 = 0.0;      // L1 sparsity coefficient
    RetainSource retain_source = RetainSource::Full;
    std::uint64_t seed = 0;
    bool record_trail = true;   // per-epoch metrics (reads forget/test splits)
};

// The materialized splits one unlearning run works with. retain is whatever
// retain_source produced; forget/t/test_eval come straight from the dataset.
struct UnlearnData {
    Batch retain;
    Batch forget;
    Batch t;
    Batch test_eval;
};

struct EpochMetrics {
    double mia = 50.0;  // threshold attack on the forget/T losses, percent
    double retain_acc = 0.0;
    double forget_acc = 0.0;
    double test_acc = 0.0;
};

struct UnlearnResult {
    Mlp model;
    std::vector<EpochMetrics> trail;   // one entry per epoch when recorded
    std::vector<double> loss_history;  // mean step loss per epoch
    double unlearn_seconds = 0.0;      // optimization loop only
    double preprocess_seconds = 0.0;   // filled by the caller (partition+condense)
};

// Squared batch-mean retain CE, plus lambda times the MMD between the
// rank-gaussianized log1p CE losses of the forget and T batches, plus
// gamma_l1 * ||theta||_1. Each loss batch is gaussianized on its own, so the
// term compares the two batches' loss-spread geometry at scale 1/k.
ad::Var a_amu_objective_on(ad::Tape& tape, const MlpVars& mv, const Batch& retain,
                           const Batch& forget, const Batch& t, double lambda, double k,
                           double gamma_l1);
double a_amu_objective(const Mlp& m, const Batch& retain, const Batch& forget, const Batch& t,
                       double lambda, double k, double gamma_l1);

// Dispatch on cfg.method: retrain starts from a fresh init and fine-tunes on
// retain with plain CE, cf fine-tunes the pretrained model the same way,
// l1_sparse adds the L1 term, and the a_* methods run the objective above
// with fresh forget/T batches every step. Deterministic given cfg.seed.
UnlearnResult run_unlearning(const Mlp& pretrained, const UnlearnData& data,
                             const UnlearnConfig& cfg);

// m draws from [0, n): distinct while m <= n, with replacement beyond that.
std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n, std::size_t m);

}  // namespace ulab
