#include "lit/diffcore.hpp"

#include <cmath>
#include <stdexcept>

namespace lit::diffcore {

namespace {

double softplus1(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid1(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("diffcore: " + msg); }

}  // namespace

Expr Graph::emit(Node n) {
    nodes_.push_back(std::move(n));
    return Expr{this, static_cast<int>(nodes_.size()) - 1};
}

Expr Graph::constant(Eigen::MatrixXd v) {
    Node n;
    n.kind = NodeKind::Constant;
    n.shape = Shape{v.rows(), v.cols()};
    n.value = std::move(v);
    return emit(std::move(n));
}

Expr Graph::scalar(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

Expr Graph::ones(Shape s) { return constant(Eigen::MatrixXd::Ones(s.rows, s.cols)); }

Expr Graph::input(const std::string& name, Shape s) {
    if (vars_.count(name)) fail("duplicate variable '" + name + "'");
    Node n;
    n.kind = NodeKind::Input;
    n.shape = s;
    n.name = name;
    Expr e = emit(std::move(n));
    vars_[name] = e.idx;
    return e;
}

Expr Graph::param(const std::string& name, Shape s) {
    if (vars_.count(name)) fail("duplicate variable '" + name + "'");
    Node n;
    n.kind = NodeKind::Param;
    n.shape = s;
    n.name = name;
    Expr e = emit(std::move(n));
    vars_[name] = e.idx;
    return e;
}

Expr Graph::add(const std::vector<Expr>& terms) {
    if (terms.empty()) fail("add: no terms");
    if (terms.size() == 1) return terms[0];
    Shape s = shape(terms[0]);
    Node n;
    n.kind = NodeKind::Add;
    n.shape = s;
    for (const Expr& t : terms) {
        if (!(shape(t) == s)) fail("add: shape mismatch");
        n.ops.push_back(t.idx);
    }
    return emit(std::move(n));
}

Expr Graph::sub(Expr a, Expr b) { return add(a, mul(scalar(-1.0), b)); }

Expr Graph::mul(Expr a, Expr b) {
    Shape sa = shape(a), sb = shape(b);
    Node n;
    n.kind = NodeKind::Mul;
    if (sa == sb) {
        n.shape = sa;
    } else if (sa.is_scalar()) {
        n.shape = sb;
    } else if (sb.is_scalar()) {
        n.shape = sa;
    } else {
        fail("mul: shape mismatch");
    }
    n.ops = {a.idx, b.idx};
    return emit(std::move(n));
}

Expr Graph::matvec(Expr a, Expr x, bool transpose_a) {
    Shape sa = shape(a), sx = shape(x);
    if (sx.cols != 1) fail("matvec: operand is not a column vector");
    Eigen::Index in = transpose_a ? sa.rows : sa.cols;
    Eigen::Index out = transpose_a ? sa.cols : sa.rows;
    if (sx.rows != in) fail("matvec: shape mismatch");
    Node n;
    n.kind = NodeKind::MatVec;
    n.shape = Shape{out, 1};
    n.ops = {a.idx, x.idx};
    n.transpose = transpose_a;
    return emit(std::move(n));
}

Expr Graph::outer(Expr u, Expr v) {
    Shape su = shape(u), sv = shape(v);
    if (su.cols != 1 || sv.cols != 1) fail("outer: operands must be column vectors");
    Node n;
    n.kind = NodeKind::Outer;
    n.shape = Shape{su.rows, sv.rows};
    n.ops = {u.idx, v.idx};
    return emit(std::move(n));
}

Expr Graph::dot(Expr u, Expr v) {
    Shape su = shape(u), sv = shape(v);
    if (!(su == sv) || su.cols != 1) fail("dot: operands must be equal-length column vectors");
    Node n;
    n.kind = NodeKind::Dot;
    n.shape = Shape{1, 1};
    n.ops = {u.idx, v.idx};
    return emit(std::move(n));
}

Expr Graph::squared_norm(Expr u) {
    Node n;
    n.kind = NodeKind::SquaredNorm;
    n.shape = Shape{1, 1};
    n.ops = {u.idx};
    return emit(std::move(n));
}

Expr Graph::quotient(Expr num, Expr den) {
    Shape sn = shape(num), sd = shape(den);
    if (!(sn == sd) && !sd.is_scalar()) fail("quotient: divisor must be scalar or same shape");
    Node n;
    n.kind = NodeKind::Quotient;
    n.shape = sn;
    n.ops = {num.idx, den.idx};
    return emit(std::move(n));
}

Expr Graph::unary(NodeKind k, Expr u) {
    Node n;
    n.kind = k;
    n.shape = shape(u);
    n.ops = {u.idx};
    return emit(std::move(n));
}

Expr Graph::log(Expr u) { return unary(NodeKind::Log, u); }
Expr Graph::sqrt(Expr u) { return unary(NodeKind::Sqrt, u); }
Expr Graph::relu(Expr u) { return unary(NodeKind::Relu, u); }
Expr Graph::step(Expr u) { return unary(NodeKind::Step, u); }
Expr Graph::softplus(Expr u) { return unary(NodeKind::Softplus, u); }
Expr Graph::sigmoid(Expr u) { return unary(NodeKind::Sigmoid, u); }

Expr Graph::clamp(Expr u, double lo, double hi) {
    Expr e = unary(NodeKind::Clamp, u);
    nodes_.back().lo = lo;
    nodes_.back().hi = hi;
    return e;
}

Expr Graph::sum_all(Expr u) {
    Node n;
    n.kind = NodeKind::SumAll;
    n.shape = Shape{1, 1};
    n.ops = {u.idx};
    return emit(std::move(n));
}

std::vector<bool> Graph::reachable(int root) const {
    std::vector<bool> mark(nodes_.size(), false);
    std::vector<int> stack{root};
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        if (mark[static_cast<std::size_t>(i)]) continue;
        mark[static_cast<std::size_t>(i)] = true;
        for (int op : nodes_[static_cast<std::size_t>(i)].ops) stack.push_back(op);
    }
    return mark;
}

std::vector<Eigen::MatrixXd> Graph::evaluate_many(const std::vector<Expr>& roots,
                                                  const Bindings& bindings) const {
    std::vector<bool> mark(nodes_.size(), false);
    std::vector<int> stack;
    for (const Expr& r : roots) {
        if (r.graph != this) fail("expression belongs to a different graph");
        stack.push_back(r.idx);
    }
    while (!stack.empty()) {
        int i = stack.back();
        stack.pop_back();
        if (mark[static_cast<std::size_t>(i)]) continue;
        mark[static_cast<std::size_t>(i)] = true;
        for (int op : nodes_[static_cast<std::size_t>(i)].ops) stack.push_back(op);
    }

    std::vector<Eigen::MatrixXd> val(nodes_.size());
    auto v = [&](int i) -> const Eigen::MatrixXd& { return val[static_cast<std::size_t>(i)]; };

    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!mark[i]) continue;
        const Node& n = nodes_[i];
        Eigen::MatrixXd out;
        switch (n.kind) {
            case NodeKind::Constant:
                out = n.value;
                break;
            case NodeKind::Input:
            case NodeKind::Param: {
                auto it = bindings.find(n.name);
                if (it == bindings.end()) fail("unbound variable '" + n.name + "'");
                if (it->second.rows() != n.shape.rows || it->second.cols() != n.shape.cols)
                    fail("binding shape mismatch for '" + n.name + "'");
                out = it->second;
                break;
            }
            case NodeKind::Add: {
                out = v(n.ops[0]);
                for (std::size_t k = 1; k < n.ops.size(); ++k) out += v(n.ops[k]);
                break;
            }
            case NodeKind::Mul: {
                const auto& a = v(n.ops[0]);
                const auto& b = v(n.ops[1]);
                if (a.size() == 1 && b.size() != 1)
                    out = a(0, 0) * b;
                else if (b.size() == 1 && a.size() != 1)
                    out = b(0, 0) * a;
                else
                    out = a.cwiseProduct(b);
                break;
            }
            case NodeKind::MatVec:
                out = n.transpose ? (v(n.ops[0]).transpose() * v(n.ops[1])).eval()
                                  : (v(n.ops[0]) * v(n.ops[1])).eval();
                break;
            case NodeKind::Outer:
                out = v(n.ops[0]) * v(n.ops[1]).transpose();
                break;
            case NodeKind::Dot: {
                out.resize(1, 1);
                out(0, 0) = v(n.ops[0]).col(0).dot(v(n.ops[1]).col(0));
                break;
            }
            case NodeKind::SquaredNorm: {
                out.resize(1, 1);
                out(0, 0) = v(n.ops[0]).squaredNorm();
                break;
            }
            case NodeKind::Quotient: {
                const auto& a = v(n.ops[0]);
                const auto& b = v(n.ops[1]);
                if (b.size() == 1 && a.size() != 1)
                    out = a / b(0, 0);
                else
                    out = a.cwiseQuotient(b);
                break;
            }
            case NodeKind::Log:
                out = v(n.ops[0]).array().log().matrix();
                break;
            case NodeKind::Sqrt:
                out = v(n.ops[0]).array().sqrt().matrix();
                break;
            case NodeKind::Relu:
                out = v(n.ops[0]).cwiseMax(0.0);
                break;
            case NodeKind::Step:
                out = (v(n.ops[0]).array() > 0.0).cast<double>().matrix();
                break;
            case NodeKind::Softplus:
                out = v(n.ops[0]).unaryExpr(&softplus1);
                break;
            case NodeKind::Sigmoid:
                out = v(n.ops[0]).unaryExpr(&sigmoid1);
                break;
            case NodeKind::Clamp:
                out = v(n.ops[0]).cwiseMax(n.lo).cwiseMin(n.hi);
                break;
            case NodeKind::SumAll: {
                out.resize(1, 1);
                out(0, 0) = v(n.ops[0]).sum();
                break;
            }
        }
        if (!out.allFinite()) fail("non-finite intermediate value");
        val[i] = std::move(out);
    }

    std::vector<Eigen::MatrixXd> result;
    result.reserve(roots.size());
    for (const Expr& r : roots) result.push_back(val[static_cast<std::size_t>(r.idx)]);
    return result;
}

Eigen::MatrixXd Graph::evaluate(Expr root, const Bindings& bindings) const {
    return evaluate_many({root}, bindings)[0];
}

std::map<std::string, Expr> Graph::differentiate(Expr root,
                                                 const std::vector<std::string>& wrt) {
    if (root.graph != this) fail("expression belongs to a different graph");
    if (!node(root.idx).shape.is_scalar()) fail("differentiate: root must be scalar");

    std::vector<bool> mark = reachable(root.idx);
    std::vector<int> adj(nodes_.size(), -1);
    adj[static_cast<std::size_t>(root.idx)] = scalar(1.0).idx;

    auto accumulate = [&](int op, Expr contrib) {
        int& slot = adj[static_cast<std::size_t>(op)];
        if (slot < 0)
            slot = contrib.idx;
        else
            slot = add(Expr{this, slot}, contrib).idx;
    };

    for (int i = root.idx; i >= 0; --i) {
        if (!mark[static_cast<std::size_t>(i)] || adj[static_cast<std::size_t>(i)] < 0) continue;
        Expr ybar{this, adj[static_cast<std::size_t>(i)]};
        Expr self{this, i};
        const Node n = nodes_[static_cast<std::size_t>(i)];  // copy: emits may reallocate
        switch (n.kind) {
            case NodeKind::Constant:
            case NodeKind::Input:
            case NodeKind::Param:
            case NodeKind::Step:
                break;
            case NodeKind::Add:
                for (int op : n.ops) accumulate(op, ybar);
                break;
            case NodeKind::Mul: {
                Expr a{this, n.ops[0]}, b{this, n.ops[1]};
                Shape sa = shape(a), sb = shape(b);
                if (sa == sb) {
                    accumulate(a.idx, mul(ybar, b));
                    accumulate(b.idx, mul(ybar, a));
                } else if (sa.is_scalar()) {
                    accumulate(a.idx, sum_all(mul(ybar, b)));
                    accumulate(b.idx, mul(a, ybar));
                } else {
                    accumulate(b.idx, sum_all(mul(ybar, a)));
                    accumulate(a.idx, mul(b, ybar));
                }
                break;
            }
            case NodeKind::MatVec: {
                Expr a{this, n.ops[0]}, x{this, n.ops[1]};
                accumulate(x.idx, matvec(a, ybar, !n.transpose));
                accumulate(a.idx, n.transpose ? outer(x, ybar) : outer(ybar, x));
                break;
            }
            case NodeKind::Outer: {
                Expr u{this, n.ops[0]}, v{this, n.ops[1]};
                accumulate(u.idx, matvec(ybar, v, false));
                accumulate(v.idx, matvec(ybar, u, true));
                break;
            }
            case NodeKind::Dot: {
                Expr u{this, n.ops[0]}, v{this, n.ops[1]};
                accumulate(u.idx, mul(ybar, v));
                accumulate(v.idx, mul(ybar, u));
                break;
            }
            case NodeKind::SquaredNorm: {
                Expr u{this, n.ops[0]};
                accumulate(u.idx, mul(mul(scalar(2.0), ybar), u));
                break;
            }
            case NodeKind::Quotient: {
                Expr u{this, n.ops[0]}, v{this, n.ops[1]};
                Shape su = shape(u), sv = shape(v);
                accumulate(u.idx, quotient(ybar, v));
                Expr num = (su == sv) ? mul(ybar, u) : sum_all(mul(ybar, u));
                accumulate(v.idx, mul(scalar(-1.0), quotient(num, mul(v, v))));
                break;
            }
            case NodeKind::Log: {
                Expr u{this, n.ops[0]};
                accumulate(u.idx, quotient(ybar, u));
                break;
            }
            case NodeKind::Sqrt: {
                Expr u{this, n.ops[0]};
                accumulate(u.idx, quotient(ybar, mul(scalar(2.0), self)));
                break;
            }
            case NodeKind::Relu: {
                Expr u{this, n.ops[0]};
                accumulate(u.idx, mul(ybar, step(u)));
                break;
            }
            case NodeKind::Softplus: {
                Expr u{this, n.ops[0]};
                accumulate(u.idx, mul(ybar, sigmoid(u)));
                break;
            }
            case NodeKind::Sigmoid: {
                Expr u{this, n.ops[0]};
                Expr one_minus = sub(ones(n.shape), self);
                accumulate(u.idx, mul(ybar, mul(self, one_minus)));
                break;
            }
            case NodeKind::Clamp: {
                Expr u{this, n.ops[0]};
                Expr above = step(sub(u, constant(Eigen::MatrixXd::Constant(
                                             n.shape.rows, n.shape.cols, n.lo))));
                Expr below = step(sub(constant(Eigen::MatrixXd::Constant(
                                          n.shape.rows, n.shape.cols, n.hi)),
                                      u));
                accumulate(u.idx, mul(ybar, mul(above, below)));
                break;
            }
            case NodeKind::SumAll: {
                Expr u{this, n.ops[0]};
                accumulate(u.idx, mul(ybar, ones(nodes_[static_cast<std::size_t>(u.idx)].shape)));
                break;
            }
        }
    }

    std::map<std::string, Expr> result;
    for (const std::string& name : wrt) {
        auto it = vars_.find(name);
        if (it == vars_.end()) fail("unknown variable '" + name + "'");
        int a = adj[static_cast<std::size_t>(it->second)];
        Shape s = nodes_[static_cast<std::size_t>(it->second)].shape;
        result[name] = (a >= 0) ? Expr{this, a}
                                : constant(Eigen::MatrixXd::Zero(s.rows, s.cols));
    }
    return result;
}

double Graph::check_gradient(Expr root, const Bindings& bindings,
                             const std::vector<std::string>& wrt, double h) {
    auto grads = differentiate(root, wrt);
    double worst = 0.0;
    Bindings b = bindings;
    for (const std::string& name : wrt) {
        Eigen::MatrixXd analytic = evaluate(grads.at(name), bindings);
        Eigen::MatrixXd& x = b.at(name);
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index c = 0; c < x.cols(); ++c) {
                double saved = x(r, c);
                x(r, c) = saved + h;
                double fp = evaluate(root, b)(0, 0);
                x(r, c) = saved - h;
                double fm = evaluate(root, b)(0, 0);
                x(r, c) = saved;
                double fd = (fp - fm) / (2.0 * h);
                double err = std::abs(fd - analytic(r, c)) /
                             std::max(1.0, std::abs(analytic(r, c)));
                worst = std::max(worst, err);
            }
        }
    }
    return worst;
}

}  // namespace lit::diffcore
