#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace lit::diffcore {

// Computation-graph differentiation engine. Expressions are nodes in a
// Graph arena holding scalar-, vector- or matrix-valued operations.
// differentiate() emits derivative *expressions* into the same graph, so
// its output can be differentiated again (needed for objectives that
// contain input gradients of the models).

enum class NodeKind {
    Constant,
    Input,
    Param,
    Add,          // n-ary elementwise sum, equal shapes
    Mul,          // elementwise product, scalar broadcast allowed
    MatVec,       // matrix-vector product, optional transpose
    Outer,        // u v^T
    Dot,          // column vectors -> scalar
    SquaredNorm,  // sum of squares -> scalar
    Quotient,     // elementwise, divisor scalar or same shape
    Log,
    Sqrt,
    Relu,
    Step,  // d/dx relu; 0 at x == 0 (right-limit convention)
    Softplus,
    Sigmoid,
    Clamp,
    SumAll,  // sum of all entries -> scalar
};

struct Shape {
    Eigen::Index rows = 1;
    Eigen::Index cols = 1;
    bool is_scalar() const { return rows == 1 && cols == 1; }
    bool operator==(const Shape&) const = default;
};

class Graph;

struct Expr {
    Graph* graph = nullptr;
    int idx = -1;
    bool valid() const { return graph != nullptr && idx >= 0; }
};

// Values for the free variables of an expression; scalars are 1x1.
using Bindings = std::map<std::string, Eigen::MatrixXd>;

struct Node {
    NodeKind kind;
    Shape shape;
    std::vector<int> ops;
    Eigen::MatrixXd value;  // Constant payload
    std::string name;       // Input/Param payload
    bool transpose = false; // MatVec payload
    double lo = 0.0, hi = 0.0;  // Clamp payload
};

class Graph {
public:
    Expr constant(Eigen::MatrixXd v);
    Expr scalar(double v);
    Expr ones(Shape s);
    Expr input(const std::string& name, Shape s);
    Expr param(const std::string& name, Shape s);

    Expr add(const std::vector<Expr>& terms);
    Expr add(Expr a, Expr b) { return add(std::vector<Expr>{a, b}); }
    Expr sub(Expr a, Expr b);
    Expr mul(Expr a, Expr b);
    Expr matvec(Expr a, Expr x, bool transpose_a = false);
    Expr outer(Expr u, Expr v);
    Expr dot(Expr u, Expr v);
    Expr squared_norm(Expr u);
    Expr quotient(Expr num, Expr den);
    Expr log(Expr u);
    Expr sqrt(Expr u);
    Expr relu(Expr u);
    Expr step(Expr u);
    Expr softplus(Expr u);
    Expr sigmoid(Expr u);
    Expr clamp(Expr u, double lo, double hi);
    Expr sum_all(Expr u);

    const Node& node(int idx) const { return nodes_[static_cast<std::size_t>(idx)]; }
    Shape shape(Expr e) const { return node(e.idx).shape; }
    std::size_t size() const { return nodes_.size(); }

    // Value of `root` under `bindings`. Throws on unbound variables,
    // shape mismatches, and non-finite intermediates.
    Eigen::MatrixXd evaluate(Expr root, const Bindings& bindings) const;
    std::vector<Eigen::MatrixXd> evaluate_many(const std::vector<Expr>& roots,
                                               const Bindings& bindings) const;

    // Derivative expressions of a scalar `root` with respect to each named
    // variable; unreached variables map to zero constants of their shape.
    std::map<std::string, Expr> differentiate(Expr root,
                                              const std::vector<std::string>& wrt);

    // Worst relative error between differentiate() and central finite
    // differences, denominator max(1, |analytic|).
    double check_gradient(Expr root, const Bindings& bindings,
                          const std::vector<std::string>& wrt, double h);

private:
    Expr emit(Node n);
    Expr unary(NodeKind k, Expr u);
    std::vector<bool> reachable(int root) const;

    std::vector<Node> nodes_;
    std::map<std::string, int> vars_;
};

}  // namespace lit::diffcore
