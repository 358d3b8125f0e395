#include <doctest.h>

#include <cmath>

#include "lit/diffcore.hpp"
#include "lit/rng.hpp"

using namespace lit;
using diffcore::Bindings;
using diffcore::Graph;
using diffcore::Shape;

namespace {

Eigen::MatrixXd rand_mat(rng::Rng& r, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.normal();
    return m;
}

}  // namespace

TEST_CASE("evaluate computes composite expressions") {
    Graph g;
    auto A = g.param("A", {2, 3});
    auto x = g.input("x", {3, 1});
    auto b = g.param("b", {2, 1});
    auto y = g.add(g.matvec(A, x), b);
    auto loss = g.squared_norm(y);

    Bindings env;
    env["A"] = (Eigen::MatrixXd(2, 3) << 1, 2, 3, 4, 5, 6).finished();
    env["x"] = (Eigen::MatrixXd(3, 1) << 1, 0, -1).finished();
    env["b"] = (Eigen::MatrixXd(2, 1) << 0.5, -0.5).finished();
    // y = (1-3+0.5, 4-6-0.5) = (-1.5, -2.5)
    CHECK(g.evaluate(loss, env)(0, 0) == doctest::Approx(1.5 * 1.5 + 2.5 * 2.5));
}

TEST_CASE("evaluate rejects unbound variables and bad shapes") {
    Graph g;
    auto x = g.input("x", {2, 1});
    auto s = g.squared_norm(x);
    Bindings env;
    CHECK_THROWS(g.evaluate(s, env));
    env["x"] = Eigen::MatrixXd::Ones(3, 1);
    CHECK_THROWS(g.evaluate(s, env));
}

TEST_CASE("gradients of every op match finite differences") {
    rng::Rng r(11);
    Graph g;
    auto A = g.param("A", {3, 4});
    auto x = g.param("x", {4, 1});
    auto u = g.param("u", {3, 1});
    auto v = g.matvec(A, x);              // 3x1
    auto w = g.add(g.softplus(v), g.relu(u));
    auto q = g.mul(w, g.sigmoid(v));
    auto d = g.dot(q, u);
    auto e = g.quotient(d, g.add(g.squared_norm(w), g.scalar(1.0)));
    auto f = g.log(g.add(g.mul(e, e), g.scalar(2.0)));
    auto h = g.add(f, g.sqrt(g.add(g.squared_norm(q), g.scalar(0.5))));
    auto out = g.add(h, g.sum_all(g.outer(u, x)));
    auto clamped = g.add(out, g.sum_all(g.clamp(A, -0.5, 0.5)));

    for (int rep = 0; rep < 5; ++rep) {
        Bindings env;
        env["A"] = rand_mat(r, 3, 4);
        env["x"] = rand_mat(r, 4, 1);
        env["u"] = rand_mat(r, 3, 1);
        double err = g.check_gradient(clamped, env, {"A", "x", "u"}, 1e-5);
        CHECK(err < 1e-6);
    }
}

TEST_CASE("derivative expressions are differentiable again") {
    // out = softplus(a*x); d(out)/dx = a*sigmoid(a*x); d2/dx2 = a^2 s(1-s)
    Graph g;
    auto x = g.param("x", {1, 1});
    auto a = g.scalar(1.7);
    auto out = g.softplus(g.mul(a, x));
    auto d1 = g.differentiate(out, {"x"}).at("x");
    auto d2 = g.differentiate(d1, {"x"}).at("x");

    Bindings env;
    env["x"] = Eigen::MatrixXd::Constant(1, 1, 0.3);
    double z = 1.7 * 0.3;
    double s = 1.0 / (1.0 + std::exp(-z));
    CHECK(g.evaluate(d1, env)(0, 0) == doctest::Approx(1.7 * s).epsilon(1e-12));
    CHECK(g.evaluate(d2, env)(0, 0) == doctest::Approx(1.7 * 1.7 * s * (1 - s)).epsilon(1e-12));
    // and the FD check also applies to the emitted derivative
    CHECK(g.check_gradient(d1, env, {"x"}, 1e-6) < 1e-6);
}

TEST_CASE("relu derivative uses the right-limit at zero") {
    Graph g;
    auto x = g.param("x", {1, 1});
    auto out = g.sum_all(g.relu(x));
    auto d = g.differentiate(out, {"x"}).at("x");
    Bindings env;
    env["x"] = Eigen::MatrixXd::Zero(1, 1);
    CHECK(g.evaluate(d, env)(0, 0) == 0.0);
    env["x"] = Eigen::MatrixXd::Constant(1, 1, 1e-12);
    CHECK(g.evaluate(d, env)(0, 0) == 1.0);
}

TEST_CASE("gradient of unreached variable is zero") {
    Graph g;
    auto x = g.param("x", {2, 1});
    g.param("y", {2, 1});
    auto out = g.squared_norm(x);
    auto grads = g.differentiate(out, {"x", "y"});
    Bindings env;
    env["x"] = Eigen::MatrixXd::Ones(2, 1);
    env["y"] = Eigen::MatrixXd::Ones(2, 1);
    CHECK(g.evaluate(grads.at("y"), env).isZero(0.0));
    CHECK(g.evaluate(grads.at("x"), env).isApprox(2.0 * env["x"]));
}

TEST_CASE("evaluate flags non-finite intermediates") {
    Graph g;
    auto x = g.param("x", {1, 1});
    auto out = g.log(x);
    Bindings env;
    env["x"] = Eigen::MatrixXd::Constant(1, 1, -1.0);
    CHECK_THROWS(g.evaluate(out, env));
}

TEST_CASE("evaluate_many shares the forward pass consistently") {
    Graph g;
    auto x = g.param("x", {3, 1});
    auto a = g.squared_norm(x);
    auto b = g.sum_all(g.softplus(x));
    Bindings env;
    rng::Rng r(3);
    env["x"] = rand_mat(r, 3, 1);
    auto both = g.evaluate_many({a, b}, env);
    CHECK(both[0](0, 0) == g.evaluate(a, env)(0, 0));
    CHECK(both[1](0, 0) == g.evaluate(b, env)(0, 0));
}
