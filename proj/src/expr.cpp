#include "fairlink/expr.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "fairlink/errors.hpp"

namespace fairlink::ad {

namespace {

std::atomic<std::uint64_t> next_leaf_id{1};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    require(a.same_shape(b), std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                                 b.shape_string());
}

void require_scalar(const Tensor& a, const char* what) {
    require(a.rows() == 1 && a.cols() == 1, std::string(what) + ": expected scalar, got " + a.shape_string());
}

template <class F>
Tensor map1(const Tensor& a, F f) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <class F>
Tensor map2(const Tensor& a, const Tensor& b, F f) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

double pow_guarded(double x, double p) {
    if (p == 0.0) return 1.0;
    if (p == 1.0) return x;
    if (p < 0.0 && x == 0.0) return 0.0;
    if (p == 2.0) return x * x;
    if (p == -1.0) return 1.0 / x;
    return std::pow(x, p);
}

double sigmoid_scalar(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Forward kernel for every op. `in` holds the input values in order.
Tensor compute(const Node& n, const std::vector<const Tensor*>& in) {
    switch (n.op) {
        case Op::leaf:
        case Op::constant:
            return n.value;
        case Op::matmul:
            return fairlink::matmul(*in[0], *in[1]);
        case Op::transpose:
            return fairlink::transpose(*in[0]);
        case Op::add:
            require_same_shape(*in[0], *in[1], "add");
            return map2(*in[0], *in[1], [](double x, double y) { return x + y; });
        case Op::sub:
            require_same_shape(*in[0], *in[1], "sub");
            return map2(*in[0], *in[1], [](double x, double y) { return x - y; });
        case Op::mul:
            require_same_shape(*in[0], *in[1], "mul");
            return map2(*in[0], *in[1], [](double x, double y) { return x * y; });
        case Op::scale:
            return map1(*in[0], [c = n.p0](double x) { return c * x; });
        case Op::add_scalar:
            return map1(*in[0], [c = n.p0](double x) { return x + c; });
        case Op::power:
            return map1(*in[0], [p = n.p0](double x) { return pow_guarded(x, p); });
        case Op::sigmoid:
            return map1(*in[0], sigmoid_scalar);
        case Op::relu:
            return map1(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
        case Op::abs:
            return map1(*in[0], [](double x) { return std::fabs(x); });
        case Op::log:
            return map1(*in[0], [](double x) { return std::log(x); });
        case Op::clamp:
            return map1(*in[0], [lo = n.p0, hi = n.p1](double x) { return std::clamp(x, lo, hi); });
        case Op::step:
            return map1(*in[0], [](double x) { return x > 0.0 ? 1.0 : 0.0; });
        case Op::sign:
            return map1(*in[0], [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
        case Op::inside:
            return map1(*in[0], [lo = n.p0, hi = n.p1](double x) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
        case Op::sum: {
            double s = 0.0;
            for (double v : in[0]->values()) s += v;
            return Tensor::scalar(s);
        }
        case Op::rowsum: {
            const Tensor& a = *in[0];
            Tensor out(a.rows(), 1);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j);
                out[i] = s;
            }
            return out;
        }
        case Op::broadcast:
            require_scalar(*in[0], "broadcast");
            return Tensor(n.extent2, n.extent, (*in[0])[0]);
        case Op::broadcast_cols: {
            const Tensor& a = *in[0];
            require(a.cols() == 1, "broadcast_cols: expected column, got " + a.shape_string());
            Tensor out(a.rows(), n.extent);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < n.extent; ++j) out(i, j) = a[i];
            }
            return out;
        }
        case Op::scale_rows: {
            const Tensor& a = *in[0];
            const Tensor& d = *in[1];
            require(d.cols() == 1 && d.rows() == a.rows(),
                    "scale_rows: factor " + d.shape_string() + " does not match " + a.shape_string());
            Tensor out(a.rows(), a.cols());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j) * d[i];
            }
            return out;
        }
        case Op::gather_rows: {
            const Tensor& a = *in[0];
            Tensor out(n.index.size(), a.cols());
            for (std::size_t k = 0; k < n.index.size(); ++k) {
                require(n.index[k] < a.rows(), "gather_rows: index out of range");
                for (std::size_t j = 0; j < a.cols(); ++j) out(k, j) = a(n.index[k], j);
            }
            return out;
        }
        case Op::scatter_rows: {
            const Tensor& a = *in[0];
            require(a.rows() == n.index.size(), "scatter_rows: index length does not match rows");
            Tensor out(n.extent, a.cols());
            for (std::size_t k = 0; k < n.index.size(); ++k) {
                require(n.index[k] < n.extent, "scatter_rows: index out of range");
                for (std::size_t j = 0; j < a.cols(); ++j) out(n.index[k], j) += a(k, j);
            }
            return out;
        }
        case Op::concat_cols: {
            const Tensor& a = *in[0];
            const Tensor& b = *in[1];
            require(a.rows() == b.rows(), "concat_cols: row mismatch " + a.shape_string() + " vs " + b.shape_string());
            Tensor out(a.rows(), a.cols() + b.cols());
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
                for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
            }
            return out;
        }
        case Op::slice_cols: {
            const Tensor& a = *in[0];
            require(n.extent + n.extent2 <= a.cols(), "slice_cols: range exceeds " + a.shape_string());
            Tensor out(a.rows(), n.extent2);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < n.extent2; ++j) out(i, j) = a(i, n.extent + j);
            }
            return out;
        }
        case Op::pad_cols: {
            const Tensor& a = *in[0];
            require(n.extent + a.cols() <= n.extent2, "pad_cols: block exceeds target width");
            Tensor out(a.rows(), n.extent2);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < a.cols(); ++j) out(i, n.extent + j) = a(i, j);
            }
            return out;
        }
    }
    throw RuntimeFailure("unknown op");
}

Expr record(Node n) {
    std::vector<const Tensor*> in;
    in.reserve(n.inputs.size());
    for (const auto& e : n.inputs) {
        require(e.valid(), std::string(op_name(n.op)) + ": empty input expression");
        in.push_back(&e.value());
    }
    if (n.op != Op::leaf && n.op != Op::constant) n.value = compute(n, in);
#if !defined(NDEBUG) || defined(FAIRLINK_CHECK_FINITE)
    if (!n.value.all_finite()) {
        throw RuntimeFailure(std::string("non-finite value produced by ") + op_name(n.op));
    }
#endif
    return Expr(std::make_shared<const Node>(std::move(n)));
}

Node make(Op op, std::vector<Expr> inputs) {
    Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    return n;
}

std::vector<const Node*> topo_order(const Expr& root) {
    std::vector<const Node*> order;
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<const Node*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            const Node* child = node->inputs[next++].node();
            if (seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // inputs before consumers
}

// Gradients with respect to each input of `node`, given the upstream gradient.
// Entries left invalid contribute nothing.
std::vector<Expr> backward(const Expr& self, const Expr& g, const std::vector<bool>& need) {
    const Node& n = *self.node();
    const auto& x = n.inputs;
    auto when = [&](std::size_t k, auto make_part) { return need[k] ? make_part() : Expr(); };
    switch (n.op) {
        case Op::leaf:
        case Op::constant:
        case Op::step:
        case Op::sign:
        case Op::inside:
            return {};
        case Op::matmul:
            return {when(0, [&] { return matmul(g, transpose(x[1])); }),
                    when(1, [&] { return matmul(transpose(x[0]), g); })};
        case Op::transpose:
            return {transpose(g)};
        case Op::add:
            return {g, g};
        case Op::sub:
            return {g, when(1, [&] { return scale(g, -1.0); })};
        case Op::mul:
            return {when(0, [&] { return g * x[1]; }), when(1, [&] { return g * x[0]; })};
        case Op::scale:
            return {scale(g, n.p0)};
        case Op::add_scalar:
            return {g};
        case Op::power: {
            const double p = n.p0;
            if (p == 0.0) return {};
            if (p == 1.0) return {g};
            if (p == 2.0) return {g * scale(x[0], 2.0)};
            return {g * scale(power(x[0], p - 1.0), p)};
        }
        case Op::sigmoid:
            return {g * (self * add_scalar(scale(self, -1.0), 1.0))};
        case Op::relu:
            return {g * step(x[0])};
        case Op::abs:
            return {g * sign(x[0])};
        case Op::log:
            return {g * power(x[0], -1.0)};
        case Op::clamp:
            return {g * inside(x[0], n.p0, n.p1)};
        case Op::sum:
            return {broadcast(g, x[0].rows(), x[0].cols())};
        case Op::rowsum:
            return {broadcast_cols(g, x[0].cols())};
        case Op::broadcast:
            return {sum(g)};
        case Op::broadcast_cols:
            return {rowsum(g)};
        case Op::scale_rows:
            return {when(0, [&] { return scale_rows(g, x[1]); }), when(1, [&] { return rowsum(g * x[0]); })};
        case Op::gather_rows:
            return {scatter_rows(g, n.index, x[0].rows())};
        case Op::scatter_rows:
            return {gather_rows(g, n.index)};
        case Op::concat_cols:
            return {when(0, [&] { return slice_cols(g, 0, x[0].cols()); }),
                    when(1, [&] { return slice_cols(g, x[0].cols(), x[1].cols()); })};
        case Op::slice_cols:
            return {pad_cols(g, n.extent, x[0].cols())};
        case Op::pad_cols:
            return {slice_cols(g, n.extent, x[0].cols())};
    }
    throw RuntimeFailure("unknown op in backward");
}

}  // namespace

const char* op_name(Op op) noexcept {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::constant: return "constant";
        case Op::matmul: return "matmul";
        case Op::transpose: return "transpose";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::add_scalar: return "add_scalar";
        case Op::power: return "power";
        case Op::sigmoid: return "sigmoid";
        case Op::relu: return "relu";
        case Op::abs: return "abs";
        case Op::log: return "log";
        case Op::clamp: return "clamp";
        case Op::step: return "step";
        case Op::sign: return "sign";
        case Op::inside: return "inside";
        case Op::sum: return "sum";
        case Op::rowsum: return "rowsum";
        case Op::broadcast: return "broadcast";
        case Op::broadcast_cols: return "broadcast_cols";
        case Op::scale_rows: return "scale_rows";
        case Op::gather_rows: return "gather_rows";
        case Op::scatter_rows: return "scatter_rows";
        case Op::concat_cols: return "concat_cols";
        case Op::slice_cols: return "slice_cols";
        case Op::pad_cols: return "pad_cols";
    }
    return "?";
}

const Tensor& Expr::value() const {
    if (!node_) throw ValidationError("value() on empty expression");
    return node_->value;
}
Op Expr::op() const { return node_->op; }
bool Expr::is_leaf() const { return node_ && node_->op == Op::leaf; }
bool Expr::trainable() const { return is_leaf() && node_->trainable; }
std::uint64_t Expr::leaf_id() const { return node_->leaf_id; }
const std::string& Expr::name() const { return node_->name; }

Expr leaf(Tensor value, std::string name, bool trainable) {
    Node n;
    n.op = Op::leaf;
    n.value = std::move(value);
    n.name = std::move(name);
    n.trainable = trainable;
    n.leaf_id = next_leaf_id.fetch_add(1);
    return record(std::move(n));
}

Expr constant(Tensor value) {
    Node n;
    n.op = Op::constant;
    n.value = std::move(value);
    return record(std::move(n));
}

Expr constant_scalar(double v) { return constant(Tensor::scalar(v)); }

Expr matmul(const Expr& a, const Expr& b) { return record(make(Op::matmul, {a, b})); }
Expr transpose(const Expr& a) { return record(make(Op::transpose, {a})); }
Expr operator+(const Expr& a, const Expr& b) { return record(make(Op::add, {a, b})); }
Expr operator-(const Expr& a, const Expr& b) { return record(make(Op::sub, {a, b})); }
Expr operator*(const Expr& a, const Expr& b) { return record(make(Op::mul, {a, b})); }

Expr scale(const Expr& a, double c) {
    Node n = make(Op::scale, {a});
    n.p0 = c;
    return record(std::move(n));
}

Expr add_scalar(const Expr& a, double c) {
    Node n = make(Op::add_scalar, {a});
    n.p0 = c;
    return record(std::move(n));
}

Expr power(const Expr& a, double p) {
    Node n = make(Op::power, {a});
    n.p0 = p;
    return record(std::move(n));
}

Expr sigmoid(const Expr& a) { return record(make(Op::sigmoid, {a})); }
Expr relu(const Expr& a) { return record(make(Op::relu, {a})); }
Expr abs(const Expr& a) { return record(make(Op::abs, {a})); }
Expr log(const Expr& a) { return record(make(Op::log, {a})); }

Expr clamp(const Expr& a, double lo, double hi) {
    Node n = make(Op::clamp, {a});
    n.p0 = lo;
    n.p1 = hi;
    return record(std::move(n));
}

Expr step(const Expr& a) { return record(make(Op::step, {a})); }
Expr sign(const Expr& a) { return record(make(Op::sign, {a})); }

Expr inside(const Expr& a, double lo, double hi) {
    Node n = make(Op::inside, {a});
    n.p0 = lo;
    n.p1 = hi;
    return record(std::move(n));
}

Expr sum(const Expr& a) { return record(make(Op::sum, {a})); }

Expr mean(const Expr& a) {
    require(a.value().size() > 0, "mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Expr rowsum(const Expr& a) { return record(make(Op::rowsum, {a})); }

Expr broadcast(const Expr& scalar, std::size_t rows, std::size_t cols) {
    Node n = make(Op::broadcast, {scalar});
    n.extent = cols;
    n.extent2 = rows;
    return record(std::move(n));
}

Expr broadcast_cols(const Expr& column, std::size_t cols) {
    Node n = make(Op::broadcast_cols, {column});
    n.extent = cols;
    return record(std::move(n));
}

Expr scale_rows(const Expr& a, const Expr& column) { return record(make(Op::scale_rows, {a, column})); }

Expr scale_cols(const Expr& a, const Expr& column) {
    return transpose(scale_rows(transpose(a), column));
}

Expr row_normalize(const Expr& a) { return scale_rows(a, power(rowsum(a), -1.0)); }

Expr gather_rows(const Expr& a, std::vector<std::size_t> index) {
    Node n = make(Op::gather_rows, {a});
    n.index = std::move(index);
    return record(std::move(n));
}

Expr scatter_rows(const Expr& a, std::vector<std::size_t> index, std::size_t rows) {
    Node n = make(Op::scatter_rows, {a});
    n.index = std::move(index);
    n.extent = rows;
    return record(std::move(n));
}

Expr concat_cols(const Expr& a, const Expr& b) { return record(make(Op::concat_cols, {a, b})); }

Expr slice_cols(const Expr& a, std::size_t begin, std::size_t width) {
    Node n = make(Op::slice_cols, {a});
    n.extent = begin;
    n.extent2 = width;
    return record(std::move(n));
}

Expr pad_cols(const Expr& a, std::size_t begin, std::size_t total_width) {
    Node n = make(Op::pad_cols, {a});
    n.extent = begin;
    n.extent2 = total_width;
    return record(std::move(n));
}

Expr dot(const Expr& a, const Expr& b) { return sum(a * b); }
Expr l2norm(const Expr& a) { return power(sum(a * a), 0.5); }
Expr divide(const Expr& a, const Expr& b) { return a * power(b, -1.0); }

Tensor evaluate(const Expr& e, const Bindings& bindings) {
    require(e.valid(), "evaluate: empty expression");
    const auto order = topo_order(e);
    std::unordered_map<const Node*, Tensor> values;
    values.reserve(order.size());
    for (const Node* node : order) {
        if (node->op == Op::leaf) {
            auto it = bindings.find(node->leaf_id);
            if (it == bindings.end()) throw ValidationError("evaluate: unbound leaf '" + node->name + "'");
            require(it->second.same_shape(node->value), "evaluate: binding for '" + node->name + "' has shape " +
                                                            it->second.shape_string() + ", expected " +
                                                            node->value.shape_string());
            values.emplace(node, it->second);
            continue;
        }
        if (node->op == Op::constant) {
            values.emplace(node, node->value);
            continue;
        }
        std::vector<const Tensor*> in;
        in.reserve(node->inputs.size());
        for (const auto& x : node->inputs) in.push_back(&values.at(x.node()));
        values.emplace(node, compute(*node, in));
    }
    return values.at(e.node());
}

std::vector<Expr> leaves(const Expr& e) {
    std::vector<Expr> out;
    std::unordered_set<const Node*> seen;
    std::vector<Expr> stack{e};
    while (!stack.empty()) {
        Expr cur = stack.back();
        stack.pop_back();
        if (!seen.insert(cur.node()).second) continue;
        if (cur.is_leaf()) out.push_back(cur);
        for (auto it = cur.node()->inputs.rbegin(); it != cur.node()->inputs.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

Bindings current_bindings(const Expr& e) {
    Bindings b;
    for (const auto& l : leaves(e)) b.emplace(l.leaf_id(), l.value());
    return b;
}

std::vector<Expr> grad(const Expr& e, std::span<const Expr> wrt) {
    require(e.valid(), "grad: empty expression");
    if (e.value().size() != 1) throw ValidationError("grad: expression is not scalar, shape " + e.value().shape_string());
    std::unordered_set<const Node*> targets;
    for (const auto& w : wrt) {
        require(w.is_leaf(), "grad: can only differentiate with respect to leaves");
        require(w.trainable(), "grad: leaf '" + w.name() + "' is declared constant");
        targets.insert(w.node());
    }

    // Only nodes on a path to a requested leaf need adjoints.
    const auto order = topo_order(e);
    std::unordered_set<const Node*> live;
    for (const Node* node : order) {
        bool l = targets.count(node) > 0;
        for (const auto& x : node->inputs) l = l || live.count(x.node()) > 0;
        if (l) live.insert(node);
    }

    std::unordered_map<const Node*, Expr> adjoint;
    std::unordered_map<const Node*, Expr> handle;
    handle.emplace(e.node(), e);
    for (const Node* node : order) {
        for (const auto& x : node->inputs) handle.emplace(x.node(), x);
    }
    if (live.count(e.node())) adjoint.emplace(e.node(), constant_scalar(1.0));

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const Node* node = *it;
        auto found = adjoint.find(node);
        if (found == adjoint.end() || node->op == Op::leaf) continue;
        std::vector<bool> need(node->inputs.size());
        for (std::size_t k = 0; k < need.size(); ++k) need[k] = live.count(node->inputs[k].node()) > 0;
        const auto parts = backward(handle.at(node), found->second, need);
        for (std::size_t k = 0; k < parts.size(); ++k) {
            const Node* child = node->inputs[k].node();
            if (!parts[k].valid() || !live.count(child)) continue;
            auto [slot, inserted] = adjoint.emplace(child, parts[k]);
            if (!inserted) slot->second = slot->second + parts[k];
        }
    }

    std::vector<Expr> out;
    out.reserve(wrt.size());
    for (const auto& w : wrt) {
        auto it = adjoint.find(w.node());
        out.push_back(it != adjoint.end() ? it->second : constant(Tensor(w.rows(), w.cols())));
    }
    return out;
}

std::vector<Tensor> grad_values(const Expr& e, std::span<const Expr> wrt) {
    std::vector<Tensor> out;
    for (const auto& g : grad(e, wrt)) out.push_back(g.value());
    return out;
}

std::vector<Tensor> meta_grad(const Expr& f, std::span<const Expr> wrt) { return grad_values(f, wrt); }

}  // namespace fairlink::ad
