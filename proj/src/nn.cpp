#include "ulab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ulab {

Mlp init_model(const std::vector<std::size_t>& dims, std::uint64_t seed, Act act) {
    if (dims.size() < 2) throw DimError("init_model: need at least input and output dims");
    for (std::size_t d : dims)
        if (d == 0) throw DimError("init_model: zero-width layer");
    Mlp m;
    m.act = act;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        std::size_t in = dims[l], out = dims[l + 1];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        Layer layer;
        layer.W = Tensor::zeros(in, out);
        for (double& w : layer.W.values) w = rng.uniform(-bound, bound);
        layer.b = Tensor::zeros(1, out);
        m.layers.push_back(std::move(layer));
    }
    return m;
}

static void apply_act(Tensor& h, Act act) {
    if (act == Act::Tanh)
        for (double& v : h.values) v = std::tanh(v);
    else
        for (double& v : h.values) v = v > 0.0 ? v : 0.0;
}

Tensor forward(const Mlp& m, const Tensor& x) {
    if (m.layers.empty()) throw DimError("forward: model has no layers");
    if (x.cols() != m.input_dim()) throw DimError("forward: input width mismatch");
    Tensor h = x;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        h = matmul(h, m.layers[l].W);
        std::size_t c = h.cols();
        for (std::size_t i = 0; i < h.rows(); ++i)
            for (std::size_t j = 0; j < c; ++j) h.values[i * c + j] += m.layers[l].b.values[j];
        if (l + 1 < m.layers.size()) apply_act(h, m.act);
    }
    if (!h.all_finite()) throw NumericError("forward: non-finite output");
    return h;
}

std::vector<double> cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    std::size_t n = logits.rows(), c = logits.cols();
    if (labels.size() != n) throw DimError("cross_entropy: label count mismatch");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw LabelError("cross_entropy: label out of range");
        const double* row = &logits.values[i * c];
        double m = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
        out[i] = m + std::log(z) - row[static_cast<std::size_t>(y)];
    }
    return out;
}

double mean_ce(const Mlp& m, const Batch& batch) {
    if (batch.empty()) throw InputError("mean_ce: empty batch");
    std::vector<double> losses = cross_entropy(forward(m, batch.x), batch.y);
    return std::accumulate(losses.begin(), losses.end(), 0.0) /
           static_cast<double>(losses.size());
}

MlpVars insert_params(ad::Tape& tape, const Mlp& m, bool trainable) {
    MlpVars mv;
    mv.act = m.act;
    for (const auto& l : m.layers) {
        mv.W.push_back(trainable ? tape.leaf(l.W) : tape.constant(l.W));
        mv.b.push_back(trainable ? tape.leaf(l.b) : tape.constant(l.b));
    }
    return mv;
}

ad::Var forward_on(ad::Tape& tape, const MlpVars& mv, ad::Var x) {
    if (mv.W.empty()) throw DimError("forward_on: model has no layers");
    ad::Var h = x;
    for (std::size_t l = 0; l < mv.W.size(); ++l) {
        h = tape.add_rowvec(tape.matmul(h, mv.W[l]), mv.b[l]);
        if (l + 1 < mv.W.size())
            h = mv.act == Act::Tanh ? tape.tanh_(h) : tape.relu_(h);
    }
    return h;
}

ad::Var l1_norm(ad::Tape& tape, const MlpVars& mv) {
    ad::Var total = tape.sum(tape.abs_(mv.W[0]));
    total = tape.add(total, tape.sum(tape.abs_(mv.b[0])));
    for (std::size_t l = 1; l < mv.W.size(); ++l) {
        total = tape.add(total, tape.sum(tape.abs_(mv.W[l])));
        total = tape.add(total, tape.sum(tape.abs_(mv.b[l])));
    }
    return total;
}

double eval_objective(const Mlp& m, const Objective& f) {
    ad::Tape tape;
    MlpVars mv = insert_params(tape, m, false);
    ad::Var out = f(tape, mv);
    if (tape.val(out).size() != 1) throw DimError("eval_objective: objective must be scalar");
    return tape.val(out).values[0];
}

std::pair<double, Gradient> value_and_grad(const Mlp& m, const Objective& f) {
    ad::Tape tape;
    MlpVars mv = insert_params(tape, m, true);
    ad::Var out = f(tape, mv);
    tape.backward(out);
    Gradient g;
    for (std::size_t l = 0; l < mv.W.size(); ++l) {
        Layer gl;
        gl.W = tape.grad(mv.W[l]);
        gl.b = tape.grad(mv.b[l]);
        g.layers.push_back(std::move(gl));
    }
    return {tape.val(out).values[0], std::move(g)};
}

Gradient grad(const Mlp& m, const Objective& f) { return value_and_grad(m, f).second; }

void sgd_step(Mlp& m, const Gradient& g, double lr) {
    if (g.layers.size() != m.layers.size()) throw DimError("sgd_step: layer count mismatch");
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        Layer& ml = m.layers[l];
        const Layer& gl = g.layers[l];
        if (!ml.W.same_shape(gl.W) || !ml.b.same_shape(gl.b))
            throw DimError("sgd_step: gradient shape mismatch");
        for (std::size_t p = 0; p < ml.W.size(); ++p) ml.W.values[p] -= lr * gl.W.values[p];
        for (std::size_t p = 0; p < ml.b.size(); ++p) ml.b.values[p] -= lr * gl.b.values[p];
    }
}

StepObjective ce_objective() {
    return [](ad::Tape& tape, const MlpVars& mv, const Batch& batch) {
        ad::Var x = tape.constant(batch.x);
        return tape.mean(tape.softmax_ce(forward_on(tape, mv, x), batch.y));
    };
}

StepObjective ce_l1_objective(double gamma) {
    return [gamma](ad::Tape& tape, const MlpVars& mv, const Batch& batch) {
        ad::Var x = tape.constant(batch.x);
        ad::Var ce = tape.mean(tape.softmax_ce(forward_on(tape, mv, x), batch.y));
        return tape.add(ce, tape.scale(l1_norm(tape, mv), gamma));
    };
}

std::vector<double> train(Mlp& m, const Batch& data, const TrainConfig& cfg,
                          const StepObjective& step) {
    if (data.empty()) throw InputError("train: empty split");
    if (cfg.epochs < 0) throw InputError("train: negative epoch count");
    if (cfg.batch == 0 || cfg.batch > data.size())
        throw InputError("train: batch size must be in [1, dataset size]");
    if (!(cfg.lr > 0.0)) throw InputError("train: learning rate must be positive");

    std::vector<double> history;
    history.reserve(static_cast<std::size_t>(cfg.epochs));
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch) {
            std::size_t hi = std::min(off + cfg.batch, order.size());
            std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(off),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
            Batch mb = take(data, idx);
            ad::Tape tape;
            MlpVars mv = insert_params(tape, m, true);
            ad::Var out = step(tape, mv, mb);
            tape.backward(out);
            Gradient g;
            for (std::size_t l = 0; l < mv.W.size(); ++l)
                g.layers.push_back(Layer{tape.grad(mv.W[l]), tape.grad(mv.b[l])});
            loss_sum += tape.val(out).values[0];
            ++steps;
            sgd_step(m, g, cfg.lr);
        }
        history.push_back(loss_sum / static_cast<double>(steps));
    }
    return history;
}

Mlp sample_extractor(std::size_t input_dim, std::uint64_t seed) {
    return init_model({input_dim, kExtractorHidden, kFeatureDim}, seed, Act::Tanh);
}

}  // namespace ulab
