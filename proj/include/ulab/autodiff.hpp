#pragma once

#include <cstddef>
#include <vector>

#include "ulab/common.hpp"

namespace ulab {

// Plain matrix products on row-major Tensors. Shared by the tape and by the
// gradient-free evaluation paths.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_at_b(const Tensor& a, const Tensor& b);  // a^T * b
Tensor matmul_a_bt(const Tensor& a, const Tensor& b);  // a * b^T

namespace ad {

class Tape;

// Handle into a tape. Cheap to copy; owns nothing.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
};

// Reverse-mode tape over 2-D tensors. Nodes are recorded in creation order,
// which is automatically a topological order, so backward() is a single
// reverse sweep. A tape is single-use: build the expression, call backward
// once, read gradients.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Inputs. Leaves receive gradients, constants do not.
    Var leaf(Tensor t);
    Var constant(Tensor t);

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);           // elementwise
    Var add_rowvec(Var a, Var b);    // a: n x c, b: 1 x c broadcast over rows
    Var div_scalar(Var a, Var s);    // s must be 1 x 1
    Var scale(Var a, double s);

    Var tanh_(Var a);
    Var relu_(Var a);
    Var softplus_(Var a);
    Var log1p_(Var a);
    Var square_(Var a);
    Var abs_(Var a);

    Var sum(Var a);   // 1 x 1
    Var mean(Var a);  // 1 x 1

    // Per-row cross entropy of logits against integer labels, computed via a
    // stable log-sum-exp. Output is n x 1 with one loss per sample.
    Var softmax_ce(Var logits, const std::vector<int>& labels);

    // Soft empirical CDF: q_i = (1/N) sum_j sigmoid(k * (x_i - x_j)), taken
    // over all entries of x jointly. Output has the shape of x.
    Var soft_cdf(Var x, double k);

    // Elementwise inverse normal CDF after clamping the input to
    // [lo, 1 - lo]. Gradient is zero where the clamp is active.
    Var probit_clamp(Var q, double lo = 1e-4);

    // Squared maximum mean discrepancy between two scalar samples under the
    // unit-bandwidth Gaussian kernel, biased estimator (diagonal included),
    // clamped at zero. a and b are treated as flat vectors. Output 1 x 1.
    Var mmd(Var a, Var b);

    // Reverse sweep from a scalar root. May be called once per tape.
    void backward(Var root);

    const Tensor& val(Var v) const;
    const Tensor& grad(Var v) const;

    std::size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        Leaf, Constant, MatMul, Add, Sub, Mul, AddRowVec, DivScalar, Scale,
        Tanh, Relu, Softplus, Log1p, Square, Abs, Sum, Mean,
        SoftmaxCe, SoftCdf, ProbitClamp, Mmd,
    };

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        bool needs_grad = false;
        double aux = 0.0;  // scale factor, sigmoid sharpness, clamp bound
        Tensor val;
        Tensor grad;
        Tensor cache;              // softmax probabilities
        std::vector<int> labels;   // SoftmaxCe only
    };

    int check(Var v) const;
    Var push(Node n);
    void propagate(int i);

    std::vector<Node> nodes_;
    bool swept_ = false;
};

}  // namespace ad
}  // namespace ulab
