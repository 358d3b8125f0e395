#include "lit/models.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "lit/rng.hpp"

namespace lit::models {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::softplus: return "softplus";
        case Activation::identity: return "identity";
    }
    return "relu";
}

Activation activation_from_name(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "softplus") return Activation::softplus;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

MlpParams init(Eigen::Index dim, Eigen::Index hidden, Activation act, std::uint64_t seed) {
    if (dim < 1 || hidden < 1) throw std::invalid_argument("init: dimensions must be >= 1");
    rng::Rng r(seed);
    MlpParams p;
    p.activation = act;
    p.W1.resize(hidden, dim);
    double s1 = std::sqrt(2.0 / static_cast<double>(dim));
    for (Eigen::Index i = 0; i < hidden; ++i)
        for (Eigen::Index j = 0; j < dim; ++j) p.W1(i, j) = s1 * r.normal();
    p.b1 = Eigen::VectorXd::Zero(hidden);
    p.w2.resize(hidden);
    double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
    for (Eigen::Index i = 0; i < hidden; ++i) p.w2(i) = s2 * r.normal();
    p.b2 = 0.0;
    return p;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Eigen::ArrayXd act_value(Activation a, const Eigen::ArrayXd& z) {
    switch (a) {
        case Activation::relu: return z.max(0.0);
        case Activation::softplus: return z.unaryExpr([](double v) { return softplus(v); });
        case Activation::identity: return z;
    }
    return z;
}

Eigen::ArrayXd act_deriv(Activation a, const Eigen::ArrayXd& z) {
    switch (a) {
        case Activation::relu: return (z > 0.0).cast<double>();
        case Activation::softplus: return z.unaryExpr([](double v) { return sigmoid(v); });
        case Activation::identity: return Eigen::ArrayXd::Ones(z.size());
    }
    return z;
}

Eigen::ArrayXd act_second(Activation a, const Eigen::ArrayXd& z) {
    switch (a) {
        case Activation::relu: return Eigen::ArrayXd::Zero(z.size());
        case Activation::softplus:
            return z.unaryExpr([](double v) {
                double s = sigmoid(v);
                return s * (1.0 - s);
            });
        case Activation::identity: return Eigen::ArrayXd::Zero(z.size());
    }
    return Eigen::ArrayXd::Zero(z.size());
}

double forward(const MlpParams& p, const Eigen::VectorXd& x) {
    if (x.size() != p.dim()) throw std::invalid_argument("forward: input dimension mismatch");
    Eigen::ArrayXd z = (p.W1 * x + p.b1).array();
    return p.w2.dot(act_value(p.activation, z).matrix()) + p.b2;
}

Eigen::VectorXd input_gradient(const MlpParams& p, const Eigen::VectorXd& x) {
    if (x.size() != p.dim()) throw std::invalid_argument("input_gradient: input dimension mismatch");
    Eigen::ArrayXd z = (p.W1 * x + p.b1).array();
    Eigen::VectorXd u = (p.w2.array() * act_deriv(p.activation, z)).matrix();
    return p.W1.transpose() * u;
}

double predict_proba(const MlpParams& p, const Eigen::VectorXd& x) {
    return sigmoid(forward(p, x));
}

diffcore::Expr to_expr(const MlpParams& p, diffcore::Graph& g,
                       const std::string& prefix, diffcore::Expr x) {
    using diffcore::Shape;
    diffcore::Expr W1 = g.param(prefix + ".W1", Shape{p.hidden(), p.dim()});
    diffcore::Expr b1 = g.param(prefix + ".b1", Shape{p.hidden(), 1});
    diffcore::Expr w2 = g.param(prefix + ".w2", Shape{p.hidden(), 1});
    diffcore::Expr b2 = g.param(prefix + ".b2", Shape{1, 1});
    diffcore::Expr z = g.add(g.matvec(W1, x), b1);
    diffcore::Expr a = z;
    if (p.activation == Activation::relu) a = g.relu(z);
    if (p.activation == Activation::softplus) a = g.softplus(z);
    return g.add(g.dot(w2, a), b2);
}

void bind_params(const MlpParams& p, const std::string& prefix, diffcore::Bindings& b) {
    b[prefix + ".W1"] = p.W1;
    b[prefix + ".b1"] = p.b1;
    b[prefix + ".w2"] = p.w2;
    b[prefix + ".b2"] = Eigen::MatrixXd::Constant(1, 1, p.b2);
}

namespace {

void write_tensor(std::ostream& out, const std::string& name, const Eigen::MatrixXd& m) {
    out << name << ' ' << m.rows() << ' ' << m.cols();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out << ' ' << m(r, c);
    out << '\n';
}

Eigen::MatrixXd read_tensor(std::istream& in, const std::string& expect) {
    std::string name;
    Eigen::Index rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols) || name != expect)
        throw std::runtime_error("model load: expected tensor '" + expect + "'");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (!(in >> m(r, c))) throw std::runtime_error("model load: truncated tensor");
    return m;
}

}  // namespace

void save(const MlpParams& p, std::ostream& out) {
    out << std::setprecision(17);
    out << "activation " << activation_name(p.activation) << '\n';
    write_tensor(out, "W1", p.W1);
    write_tensor(out, "b1", p.b1);
    write_tensor(out, "w2", p.w2);
    write_tensor(out, "b2", Eigen::MatrixXd::Constant(1, 1, p.b2));
}

MlpParams load(std::istream& in) {
    std::string key, act;
    if (!(in >> key >> act) || key != "activation")
        throw std::runtime_error("model load: missing activation line");
    MlpParams p;
    p.activation = activation_from_name(act);
    p.W1 = read_tensor(in, "W1");
    p.b1 = read_tensor(in, "b1");
    p.w2 = read_tensor(in, "w2");
    p.b2 = read_tensor(in, "b2")(0, 0);
    if (p.b1.size() != p.W1.rows() || p.w2.size() != p.W1.rows())
        throw std::runtime_error("model load: inconsistent shapes");
    return p;
}

void save_file(const MlpParams& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    save(p, out);
}

MlpParams load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return load(in);
}

}  // namespace lit::models
