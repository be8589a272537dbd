#pragma once

// Define-by-run differentiation over dense tensors.
//
// Every operation is evaluated eagerly when it is recorded and keeps a handle to
// its inputs. grad() builds the derivative as new recorded expressions, so the
// result of grad() can itself be differentiated. That is how derivatives of
// functions of gradients (meta-gradients) are obtained.

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fairlink/tensor.hpp"

namespace fairlink::ad {

enum class Op : std::uint8_t {
    leaf,
    constant,
    matmul,
    transpose,
    add,
    sub,
    mul,
    scale,
    add_scalar,
    power,
    sigmoid,
    relu,
    abs,
    log,
    clamp,
    step,    // 1[x > 0], no derivative
    sign,    // sign(x) with sign(0) = 0, no derivative
    inside,  // 1[lo <= x <= hi], no derivative
    sum,
    rowsum,
    broadcast,
    broadcast_cols,
    scale_rows,
    gather_rows,
    scatter_rows,
    concat_cols,
    slice_cols,
    pad_cols,
};

const char* op_name(Op op) noexcept;

struct Node;

class Expr {
public:
    Expr() = default;
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    Op op() const;
    bool is_leaf() const;
    bool trainable() const;
    std::uint64_t leaf_id() const;
    const std::string& name() const;
    bool valid() const noexcept { return static_cast<bool>(node_); }

    const Node* node() const noexcept { return node_.get(); }

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    Op op = Op::constant;
    Tensor value;
    std::vector<Expr> inputs;
    double p0 = 0.0;  // scale factor, exponent, clamp low
    double p1 = 0.0;  // clamp high
    std::size_t extent = 0;  // broadcast cols / scatter rows / slice offset
    std::size_t extent2 = 0; // broadcast rows / slice width / pad total width
    std::vector<std::size_t> index;
    std::uint64_t leaf_id = 0;
    std::string name;
    bool trainable = false;
};

// Leaf tensors. Constant leaves may be rebound in evaluate() but not differentiated against.
Expr leaf(Tensor value, std::string name, bool trainable = true);
Expr constant(Tensor value);
Expr constant_scalar(double v);

Expr matmul(const Expr& a, const Expr& b);
Expr transpose(const Expr& a);
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);  // elementwise
Expr scale(const Expr& a, double c);
Expr add_scalar(const Expr& a, double c);
// x^p elementwise; for p < 0 an exact zero maps to zero.
Expr power(const Expr& a, double p);
Expr sigmoid(const Expr& a);
Expr relu(const Expr& a);
Expr abs(const Expr& a);
Expr log(const Expr& a);
Expr clamp(const Expr& a, double lo, double hi);
Expr step(const Expr& a);
Expr sign(const Expr& a);
Expr inside(const Expr& a, double lo, double hi);
Expr sum(const Expr& a);
Expr mean(const Expr& a);
Expr rowsum(const Expr& a);
Expr broadcast(const Expr& scalar, std::size_t rows, std::size_t cols);
Expr broadcast_cols(const Expr& column, std::size_t cols);
Expr scale_rows(const Expr& a, const Expr& column);
Expr scale_cols(const Expr& a, const Expr& column);
// A[i,j] / sum_j A[i,j]; rows summing to zero stay zero.
Expr row_normalize(const Expr& a);
Expr gather_rows(const Expr& a, std::vector<std::size_t> index);
Expr scatter_rows(const Expr& a, std::vector<std::size_t> index, std::size_t rows);
Expr concat_cols(const Expr& a, const Expr& b);
Expr slice_cols(const Expr& a, std::size_t begin, std::size_t width);
Expr pad_cols(const Expr& a, std::size_t begin, std::size_t total_width);
Expr dot(const Expr& a, const Expr& b);
Expr l2norm(const Expr& a);
Expr divide(const Expr& a, const Expr& b);

inline Expr operator*(double c, const Expr& a) { return scale(a, c); }
inline Expr operator-(const Expr& a) { return scale(a, -1.0); }

// Leaf id -> value.
using Bindings = std::map<std::uint64_t, Tensor>;

// Re-evaluates the recorded expression with the given leaf values. Every leaf
// reachable from `e` must be bound.
Tensor evaluate(const Expr& e, const Bindings& bindings);

// All distinct leaves reachable from `e`, in discovery order.
std::vector<Expr> leaves(const Expr& e);
// Bindings holding the values recorded at construction time.
Bindings current_bindings(const Expr& e);

// Reverse accumulation of a scalar expression. Results are recorded expressions
// (differentiable again); leaves the expression does not depend on get zeros.
std::vector<Expr> grad(const Expr& e, std::span<const Expr> wrt);
std::vector<Tensor> grad_values(const Expr& e, std::span<const Expr> wrt);

// Derivative of a scalar built from grad() outputs with respect to leaves that
// fed the inner expression (mixed second order). Same machinery as grad().
std::vector<Tensor> meta_grad(const Expr& f, std::span<const Expr> wrt);

}  // namespace fairlink::ad
