#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "ulab/autodiff.hpp"
#include "ulab/common.hpp"

namespace ulab {

enum class Act { Tanh, Relu };

struct Layer {
    Tensor W;  // in x out
    Tensor b;  // 1 x out
};

// Fully connected net. The activation applies to hidden layers only; the
// final layer is affine (logits for the classifier, features for the
// extractor).
struct Mlp {
    std::vector<Layer> layers;
    Act act = Act::Tanh;

    std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().W.rows(); }
    std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().W.cols(); }
    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.W.size() + l.b.size();
        return n;
    }
};

using ModelParams = Mlp;
using ExtractorParams = Mlp;

// Same shape tree as the Mlp it differentiates.
struct Gradient {
    std::vector<Layer> layers;
};

// Model parameters registered on a tape, either as trainable leaves or as
// frozen constants.
struct MlpVars {
    std::vector<ad::Var> W;
    std::vector<ad::Var> b;
    Act act = Act::Tanh;
};

inline constexpr std::size_t kExtractorHidden = 32;
inline constexpr std::size_t kFeatureDim = 16;

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, deterministic
// in seed.
Mlp init_model(const std::vector<std::size_t>& dims, std::uint64_t seed, Act act = Act::Tanh);

// Gradient-free forward pass; returns the final affine output.
Tensor forward(const Mlp& m, const Tensor& x);

// Per-sample -log softmax(logits_i)[label_i], gradient-free.
std::vector<double> cross_entropy(const Tensor& logits, const std::vector<int>& labels);

double mean_ce(const Mlp& m, const Batch& batch);

MlpVars insert_params(ad::Tape& tape, const Mlp& m, bool trainable);
ad::Var forward_on(ad::Tape& tape, const MlpVars& mv, ad::Var x);
ad::Var l1_norm(ad::Tape& tape, const MlpVars& mv);

// A differentiable scalar built from the model parameters on the given tape.
using Objective = std::function<ad::Var(ad::Tape&, const MlpVars&)>;

double eval_objective(const Mlp& m, const Objective& f);
std::pair<double, Gradient> value_and_grad(const Mlp& m, const Objective& f);
Gradient grad(const Mlp& m, const Objective& f);

void sgd_step(Mlp& m, const Gradient& g, double lr);

struct TrainConfig {
    double lr = 0.05;
    int epochs = 1;
    std::size_t batch = 64;
    std::uint64_t seed = 0;
};

// Per-step loss given the current minibatch; defaults to mean cross entropy.
using StepObjective = std::function<ad::Var(ad::Tape&, const MlpVars&, const Batch&)>;

StepObjective ce_objective();
StepObjective ce_l1_objective(double gamma);

// Minibatch SGD. Shuffling is driven by cfg.seed, so runs are repeatable.
// Returns one mean step-loss per epoch, evaluated before each update.
std::vector<double> train(Mlp& m, const Batch& data, const TrainConfig& cfg,
                          const StepObjective& step = ce_objective());

// Frozen random feature map input -> 32 -> 16, never trained.
Mlp sample_extractor(std::size_t input_dim, std::uint64_t seed);

inline Tensor feature_extract(const Mlp& ext, const Tensor& x) { return forward(ext, x); }

}  // namespace ulab
