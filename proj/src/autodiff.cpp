#include "ulab/autodiff.hpp"

#include <cmath>
#include <string>

#include "ulab/mathfn.hpp"

namespace ulab {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (!a.is_matrix() || !b.is_matrix() || a.cols() != b.rows())
        throw DimError("matmul: incompatible shapes");
    std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out = Tensor::zeros(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            double av = a.values[i * k + p];
            if (av == 0.0) continue;
            const double* brow = &b.values[p * m];
            double* orow = &out.values[i * m];
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    return out;
}

Tensor matmul_at_b(const Tensor& a, const Tensor& b) {
    if (!a.is_matrix() || !b.is_matrix() || a.rows() != b.rows())
        throw DimError("matmul_at_b: incompatible shapes");
    std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    Tensor out = Tensor::zeros(n, m);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < n; ++i) {
            double av = a.values[p * n + i];
            if (av == 0.0) continue;
            const double* brow = &b.values[p * m];
            double* orow = &out.values[i * m];
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    return out;
}

Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
    if (!a.is_matrix() || !b.is_matrix() || a.cols() != b.cols())
        throw DimError("matmul_a_bt: incompatible shapes");
    std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Tensor out = Tensor::zeros(n, m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double* arow = &a.values[i * k];
            const double* brow = &b.values[j * k];
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out.values[i * m + j] = acc;
        }
    return out;
}

namespace ad {

namespace {

const char* op_name(int op) {
    static const char* names[] = {
        "leaf", "constant", "matmul", "add", "sub", "mul", "add_rowvec",
        "div_scalar", "scale", "tanh", "relu", "softplus", "log1p", "square",
        "abs", "sum", "mean", "softmax_ce", "soft_cdf", "probit_clamp", "mmd",
    };
    return names[op];
}

// Accumulate a Gaussian-kernel V-statistic term between flat vectors x and y.
// Returns (1 / (nx * ny)) * sum_ij exp(-(x_i - y_j)^2 / 2). The full double
// loop with a fixed enumeration order makes mmd(a, a) cancel to exactly zero.
double kernel_sum(const std::vector<double>& x, const std::vector<double>& y) {
    double acc = 0.0;
    for (double xi : x)
        for (double yj : y) {
            double d = xi - yj;
            acc += std::exp(-0.5 * d * d);
        }
    return acc / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

}  // namespace

int Tape::check(Var v) const {
    if (v.tape != this)
        throw ConsistencyError("Tape: variable belongs to a different tape");
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw ConsistencyError("Tape: variable id out of range");
    return v.id;
}

Var Tape::push(Node n) {
    if (!n.val.all_finite())
        throw NumericError(std::string("tape op ") + op_name(static_cast<int>(n.op)) +
                           ": non-finite output");
    n.grad = Tensor(n.val.shape, std::vector<double>(n.val.size(), 0.0));
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::leaf(Tensor t) {
    Node n;
    n.op = Op::Leaf;
    n.needs_grad = true;
    n.val = std::move(t);
    return push(std::move(n));
}

Var Tape::constant(Tensor t) {
    Node n;
    n.op = Op::Constant;
    n.val = std::move(t);
    return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
    int ia = check(a), ib = check(b);
    Node n;
    n.op = Op::MatMul;
    n.a = ia;
    n.b = ib;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    n.val = ulab::matmul(nodes_[ia].val, nodes_[ib].val);
    return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
    int ia = check(a), ib = check(b);
    if (!nodes_[ia].val.same_shape(nodes_[ib].val))
        throw DimError("tape add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = ia;
    n.b = ib;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    n.val = nodes_[ia].val;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val.values[i] += nodes_[ib].val.values[i];
    return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
    int ia = check(a), ib = check(b);
    if (!nodes_[ia].val.same_shape(nodes_[ib].val))
        throw DimError("tape sub: shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.a = ia;
    n.b = ib;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    n.val = nodes_[ia].val;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val.values[i] -= nodes_[ib].val.values[i];
    return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
    int ia = check(a), ib = check(b);
    if (!nodes_[ia].val.same_shape(nodes_[ib].val))
        throw DimError("tape mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = ia;
    n.b = ib;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    n.val = nodes_[ia].val;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val.values[i] *= nodes_[ib].val.values[i];
    return push(std::move(n));
}

Var Tape::add_rowvec(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& av = nodes_[ia].val;
    const Tensor& bv = nodes_[ib].val;
    if (bv.rows() != 1 || bv.cols() != av.cols())
        throw DimError("tape add_rowvec: expected 1 x cols(a) row vector");
    Node n;
    n.op = Op::AddRowVec;
    n.a = ia;
    n.b = ib;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    n.val = av;
    std::size_t c = av.cols();
    for (std::size_t i = 0; i < av.rows(); ++i)
        for (std::size_t j = 0; j < c; ++j) n.val.values[i * c + j] += bv.values[j];
    return push(std::move(n));
}

Var Tape::div_scalar(Var a, Var s) {
    int ia = check(a), is = check(s);
    if (nodes_[is].val.size() != 1)
        throw DimError("tape div_scalar: divisor must be 1 x 1");
    double sv = nodes_[is].val.values[0];
    Node n;
    n.op = Op::DivScalar;
    n.a = ia;
    n.b = is;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[is].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v /= sv;
    return push(std::move(n));
}

Var Tape::scale(Var a, double s) {
    int ia = check(a);
    Node n;
    n.op = Op::Scale;
    n.a = ia;
    n.aux = s;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v *= s;
    return push(std::move(n));
}

Var Tape::tanh_(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Tanh;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v = std::tanh(v);
    return push(std::move(n));
}

Var Tape::relu_(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Relu;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v = v > 0.0 ? v : 0.0;
    return push(std::move(n));
}

Var Tape::softplus_(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Softplus;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v = softplus(v);
    return push(std::move(n));
}

Var Tape::log1p_(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Log1p;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) {
        if (v <= -1.0) throw NumericError("tape op log1p: input <= -1");
        v = std::log1p(v);
    }
    return push(std::move(n));
}

Var Tape::square_(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Square;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v *= v;
    return push(std::move(n));
}

Var Tape::abs_(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Abs;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) v = std::fabs(v);
    return push(std::move(n));
}

Var Tape::sum(Var a) {
    int ia = check(a);
    Node n;
    n.op = Op::Sum;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    double acc = 0.0;
    for (double v : nodes_[ia].val.values) acc += v;
    n.val = Tensor({1, 1}, {acc});
    return push(std::move(n));
}

Var Tape::mean(Var a) {
    int ia = check(a);
    if (nodes_[ia].val.size() == 0) throw DimError("tape mean: empty input");
    Node n;
    n.op = Op::Mean;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    double acc = 0.0;
    for (double v : nodes_[ia].val.values) acc += v;
    n.val = Tensor({1, 1}, {acc / static_cast<double>(nodes_[ia].val.size())});
    return push(std::move(n));
}

Var Tape::softmax_ce(Var logits, const std::vector<int>& labels) {
    int ia = check(logits);
    const Tensor& lv = nodes_[ia].val;
    if (!lv.is_matrix()) throw DimError("tape softmax_ce: logits must be 2-D");
    std::size_t nrows = lv.rows(), c = lv.cols();
    if (labels.size() != nrows)
        throw DimError("tape softmax_ce: label count does not match rows");
    Node n;
    n.op = Op::SoftmaxCe;
    n.a = ia;
    n.needs_grad = nodes_[ia].needs_grad;
    n.labels = labels;
    n.cache = Tensor::zeros(nrows, c);
    n.val = Tensor::zeros(nrows, 1);
    for (std::size_t i = 0; i < nrows; ++i) {
        int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw LabelError("tape softmax_ce: label out of range");
        const double* row = &lv.values[i * c];
        double m = row[0];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
        double lse = m + std::log(z);
        for (std::size_t j = 0; j < c; ++j)
            n.cache.values[i * c + j] = std::exp(row[j] - lse);
        n.val.values[i] = lse - row[static_cast<std::size_t>(y)];
    }
    return push(std::move(n));
}

Var Tape::soft_cdf(Var x, double k) {
    int ia = check(x);
    const Tensor& xv = nodes_[ia].val;
    std::size_t nelem = xv.size();
    if (nelem == 0) throw DimError("tape soft_cdf: empty input");
    Node n;
    n.op = Op::SoftCdf;
    n.a = ia;
    n.aux = k;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = xv;
    double inv_n = 1.0 / static_cast<double>(nelem);
    for (std::size_t i = 0; i < nelem; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < nelem; ++j)
            acc += stable_sigmoid(k * (xv.values[i] - xv.values[j]));
        n.val.values[i] = acc * inv_n;
    }
    return push(std::move(n));
}

Var Tape::probit_clamp(Var q, double lo) {
    int ia = check(q);
    if (!(lo > 0.0 && lo < 0.5))
        throw InputError("tape probit_clamp: clamp bound must be in (0, 0.5)");
    Node n;
    n.op = Op::ProbitClamp;
    n.a = ia;
    n.aux = lo;
    n.needs_grad = nodes_[ia].needs_grad;
    n.val = nodes_[ia].val;
    for (double& v : n.val.values) {
        double qc = v < lo ? lo : (v > 1.0 - lo ? 1.0 - lo : v);
        v = probit(qc);
    }
    return push(std::move(n));
}

Var Tape::mmd(Var a, Var b) {
    int ia = check(a), ib = check(b);
    const Tensor& av = nodes_[ia].val;
    const Tensor& bv = nodes_[ib].val;
    if (av.size() == 0 || bv.size() == 0) throw DimError("tape mmd: empty sample");
    Node n;
    n.op = Op::Mmd;
    n.a = ia;
    n.b = ib;
    n.needs_grad = nodes_[ia].needs_grad || nodes_[ib].needs_grad;
    double raw = kernel_sum(av.values, av.values) + kernel_sum(bv.values, bv.values) -
                 2.0 * kernel_sum(av.values, bv.values);
    n.val = Tensor({1, 1}, {raw > 0.0 ? raw : 0.0});
    return push(std::move(n));
}

const Tensor& Tape::val(Var v) const { return nodes_[check(v)].val; }

const Tensor& Tape::grad(Var v) const { return nodes_[check(v)].grad; }

void Tape::backward(Var root) {
    int ir = check(root);
    if (swept_) throw ConsistencyError("Tape::backward: tape already swept");
    swept_ = true;
    if (nodes_[ir].val.size() != 1)
        throw DimError("Tape::backward: root must be a scalar");
    nodes_[ir].grad.values[0] = 1.0;

    std::vector<char> reached(nodes_.size(), 0);
    reached[ir] = 1;
    for (int i = ir; i >= 0; --i) {
        if (!reached[i] || !nodes_[i].needs_grad) continue;
        if (nodes_[i].a >= 0) reached[nodes_[i].a] = 1;
        if (nodes_[i].b >= 0) reached[nodes_[i].b] = 1;
        propagate(i);
    }
}

void Tape::propagate(int i) {
    Node& n = nodes_[i];
    const Tensor& g = n.grad;
    auto wants = [&](int idx) { return idx >= 0 && nodes_[idx].needs_grad; };

    switch (n.op) {
        case Op::Leaf:
        case Op::Constant:
            break;

        case Op::MatMul: {
            if (wants(n.a)) {
                Tensor da = matmul_a_bt(g, nodes_[n.b].val);
                Tensor& acc = nodes_[n.a].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += da.values[p];
            }
            if (wants(n.b)) {
                Tensor db = matmul_at_b(nodes_[n.a].val, g);
                Tensor& acc = nodes_[n.b].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += db.values[p];
            }
            break;
        }

        case Op::Add: {
            if (wants(n.a)) {
                Tensor& acc = nodes_[n.a].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += g.values[p];
            }
            if (wants(n.b)) {
                Tensor& acc = nodes_[n.b].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += g.values[p];
            }
            break;
        }

        case Op::Sub: {
            if (wants(n.a)) {
                Tensor& acc = nodes_[n.a].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += g.values[p];
            }
            if (wants(n.b)) {
                Tensor& acc = nodes_[n.b].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] -= g.values[p];
            }
            break;
        }

        case Op::Mul: {
            if (wants(n.a)) {
                Tensor& acc = nodes_[n.a].grad;
                const Tensor& bv = nodes_[n.b].val;
                for (std::size_t p = 0; p < acc.size(); ++p)
                    acc.values[p] += g.values[p] * bv.values[p];
            }
            if (wants(n.b)) {
                Tensor& acc = nodes_[n.b].grad;
                const Tensor& av = nodes_[n.a].val;
                for (std::size_t p = 0; p < acc.size(); ++p)
                    acc.values[p] += g.values[p] * av.values[p];
            }
            break;
        }

        case Op::AddRowVec: {
            if (wants(n.a)) {
                Tensor& acc = nodes_[n.a].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += g.values[p];
            }
            if (wants(n.b)) {
                Tensor& acc = nodes_[n.b].grad;
                std::size_t c = n.val.cols();
                for (std::size_t r = 0; r < n.val.rows(); ++r)
                    for (std::size_t j = 0; j < c; ++j) acc.values[j] += g.values[r * c + j];
            }
            break;
        }

        case Op::DivScalar: {
            double sv = nodes_[n.b].val.values[0];
            if (wants(n.a)) {
                Tensor& acc = nodes_[n.a].grad;
                for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += g.values[p] / sv;
            }
            if (wants(n.b)) {
                const Tensor& av = nodes_[n.a].val;
                double acc = 0.0;
                for (std::size_t p = 0; p < av.size(); ++p) acc += g.values[p] * av.values[p];
                nodes_[n.b].grad.values[0] -= acc / (sv * sv);
            }
            break;
        }

        case Op::Scale: {
            Tensor& acc = nodes_[n.a].grad;
            for (std::size_t p = 0; p < acc.size(); ++p) acc.values[p] += g.values[p] * n.aux;
            break;
        }

        case Op::Tanh: {
            Tensor& acc = nodes_[n.a].grad;
            for (std::size_t p = 0; p < acc.size(); ++p) {
                double t = n.val.values[p];
                acc.values[p] += g.values[p] * (1.0 - t * t);
            }
            break;
        }

        case Op::Relu: {
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            for (std::size_t p = 0; p < acc.size(); ++p)
                if (in.values[p] > 0.0) acc.values[p] += g.values[p];
            break;
        }

        case Op::Softplus: {
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            for (std::size_t p = 0; p < acc.size(); ++p)
                acc.values[p] += g.values[p] * stable_sigmoid(in.values[p]);
            break;
        }

        case Op::Log1p: {
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            for (std::size_t p = 0; p < acc.size(); ++p)
                acc.values[p] += g.values[p] / (1.0 + in.values[p]);
            break;
        }

        case Op::Square: {
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            for (std::size_t p = 0; p < acc.size(); ++p)
                acc.values[p] += g.values[p] * 2.0 * in.values[p];
            break;
        }

        case Op::Abs: {
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            for (std::size_t p = 0; p < acc.size(); ++p) {
                double x = in.values[p];
                if (x > 0.0)
                    acc.values[p] += g.values[p];
                else if (x < 0.0)
                    acc.values[p] -= g.values[p];
            }
            break;
        }

        case Op::Sum: {
            double gv = g.values[0];
            Tensor& acc = nodes_[n.a].grad;
            for (double& v : acc.values) v += gv;
            break;
        }

        case Op::Mean: {
            double gv = g.values[0] / static_cast<double>(nodes_[n.a].val.size());
            Tensor& acc = nodes_[n.a].grad;
            for (double& v : acc.values) v += gv;
            break;
        }

        case Op::SoftmaxCe: {
            Tensor& acc = nodes_[n.a].grad;
            std::size_t c = n.cache.cols();
            for (std::size_t r = 0; r < n.cache.rows(); ++r) {
                double gv = g.values[r];
                if (gv == 0.0) continue;
                for (std::size_t j = 0; j < c; ++j)
                    acc.values[r * c + j] += gv * n.cache.values[r * c + j];
                acc.values[r * c + static_cast<std::size_t>(n.labels[r])] -= gv;
            }
            break;
        }

        case Op::SoftCdf: {
            // d q_i / d x_m collapses to a pairwise form: the gradient into
            // x_m is (k/N) * sum_j (g_m - g_j) * s'(k (x_m - x_j)), with s'
            // the sigmoid derivative (symmetric in the sign of its argument).
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            std::size_t nelem = in.size();
            double k = n.aux;
            double coef = k / static_cast<double>(nelem);
            for (std::size_t m = 0; m < nelem; ++m) {
                double gm = g.values[m];
                double total = 0.0;
                for (std::size_t j = 0; j < nelem; ++j) {
                    double s = stable_sigmoid(k * (in.values[m] - in.values[j]));
                    total += (gm - g.values[j]) * s * (1.0 - s);
                }
                acc.values[m] += coef * total;
            }
            break;
        }

        case Op::ProbitClamp: {
            Tensor& acc = nodes_[n.a].grad;
            const Tensor& in = nodes_[n.a].val;
            double lo = n.aux;
            for (std::size_t p = 0; p < acc.size(); ++p) {
                double q = in.values[p];
                if (q < lo || q > 1.0 - lo) continue;  // clamped, gradient cut
                acc.values[p] += g.values[p] / norm_pdf(n.val.values[p]);
            }
            break;
        }

        case Op::Mmd: {
            // Gradient of the raw statistic; the zero clamp passes gradients
            // through unchanged (the raw value can only dip below zero by
            // rounding, the statistic itself is nonnegative).
            double gv = g.values[0];
            const std::vector<double>& av = nodes_[n.a].val.values;
            const std::vector<double>& bv = nodes_[n.b].val.values;
            double na = static_cast<double>(av.size());
            double nb = static_cast<double>(bv.size());
            if (wants(n.a)) {
                Tensor& acc = nodes_[n.a].grad;
                for (std::size_t p = 0; p < av.size(); ++p) {
                    double s_aa = 0.0;
                    for (double aj : av) {
                        double d = av[p] - aj;
                        s_aa += std::exp(-0.5 * d * d) * d;
                    }
                    double s_ab = 0.0;
                    for (double bj : bv) {
                        double d = av[p] - bj;
                        s_ab += std::exp(-0.5 * d * d) * d;
                    }
                    acc.values[p] +=
                        gv * (-2.0 / (na * na) * s_aa + 2.0 / (na * nb) * s_ab);
                }
            }
            if (wants(n.b)) {
                Tensor& acc = nodes_[n.b].grad;
                for (std::size_t p = 0; p < bv.size(); ++p) {
                    double s_bb = 0.0;
                    for (double bj : bv) {
                        double d = bv[p] - bj;
                        s_bb += std::exp(-0.5 * d * d) * d;
                    }
                    double s_ba = 0.0;
                    for (double aj : av) {
                        double d = bv[p] - aj;
                        s_ba += std::exp(-0.5 * d * d) * d;
                    }
                    acc.values[p] +=
                        gv * (-2.0 / (nb * nb) * s_bb + 2.0 / (na * nb) * s_ba);
                }
            }
            break;
        }
    }
}

}  // namespace ad
}  // namespace ulab
