#include <doctest.h>

#include <cmath>
#include <sstream>

#include "lit/models.hpp"
#include "lit/rng.hpp"

using namespace lit;

namespace {

Eigen::VectorXd rand_vec(rng::Rng& r, Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = r.normal();
    return v;
}

}  // namespace

TEST_CASE("forward matches a hand computation") {
    models::MlpParams p;
    p.W1 = (Eigen::MatrixXd(2, 2) << 1, 0, 0, -1).finished();
    p.b1 = (Eigen::VectorXd(2) << 0.5, 0.5).finished();
    p.w2 = (Eigen::VectorXd(2) << 2, 3).finished();
    p.b2 = -1.0;
    p.activation = models::Activation::relu;
    Eigen::VectorXd x = (Eigen::VectorXd(2) << 1.0, 2.0).finished();
    // z = (1.5, -1.5), relu = (1.5, 0), f = 2*1.5 - 1 = 2
    CHECK(models::forward(p, x) == doctest::Approx(2.0));
    CHECK(models::predict_proba(p, x) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("input_gradient matches finite differences") {
    for (auto act : {models::Activation::relu, models::Activation::softplus}) {
        auto p = models::init(4, 16, act, 42);
        rng::Rng r(5);
        for (int rep = 0; rep < 10; ++rep) {
            Eigen::VectorXd x = rand_vec(r, 4);
            Eigen::VectorXd g = models::input_gradient(p, x);
            const double h = 1e-6;
            for (Eigen::Index j = 0; j < 4; ++j) {
                Eigen::VectorXd xp = x, xm = x;
                xp(j) += h;
                xm(j) -= h;
                double fd = (models::forward(p, xp) - models::forward(p, xm)) / (2 * h);
                CHECK(std::abs(fd - g(j)) / std::max(1.0, std::abs(g(j))) < 1e-6);
            }
        }
    }
}

TEST_CASE("graph form agrees with the direct forward pass") {
    for (auto act : {models::Activation::relu, models::Activation::softplus,
                     models::Activation::identity}) {
        auto p = models::init(3, 8, act, 7);
        diffcore::Graph g;
        auto x = g.input("x", {3, 1});
        auto f = models::to_expr(p, g, "m", x);
        diffcore::Bindings env;
        models::bind_params(p, "m", env);
        rng::Rng r(9);
        Eigen::VectorXd xv = rand_vec(r, 3);
        env["x"] = xv;
        CHECK(g.evaluate(f, env)(0, 0) == doctest::Approx(models::forward(p, xv)).epsilon(1e-14));

        auto dx = g.differentiate(f, {"x"}).at("x");
        Eigen::VectorXd ag = models::input_gradient(p, xv);
        CHECK(g.evaluate(dx, env).isApprox(Eigen::MatrixXd(ag), 1e-12));
    }
}

TEST_CASE("init is deterministic and biases start at zero") {
    auto a = models::init(5, 32, models::Activation::relu, 123);
    auto b = models::init(5, 32, models::Activation::relu, 123);
    auto c = models::init(5, 32, models::Activation::relu, 124);
    CHECK(a.W1 == b.W1);
    CHECK(a.w2 == b.w2);
    CHECK(a.W1 != c.W1);
    CHECK(a.b1.isZero(0.0));
    CHECK(a.b2 == 0.0);
    // scale sanity: var(W1) ~ 2/D
    double var = a.W1.array().square().mean();
    CHECK(var == doctest::Approx(2.0 / 5.0).epsilon(0.5));
}

TEST_CASE("serialization round-trips bit-exactly") {
    auto p = models::init(7, 24, models::Activation::softplus, 77);
    p.b1.setRandom();
    p.b2 = 0.1234567890123456789;
    std::stringstream ss;
    models::save(p, ss);
    auto q = models::load(ss);
    CHECK(p.W1 == q.W1);
    CHECK(p.b1 == q.b1);
    CHECK(p.w2 == q.w2);
    CHECK(p.b2 == q.b2);
    CHECK(p.activation == q.activation);
}

TEST_CASE("activation derivative helpers are consistent") {
    Eigen::ArrayXd z(3);
    z << -1.0, 0.0, 2.0;
    auto d = models::act_deriv(models::Activation::softplus, z);
    for (int i = 0; i < 3; ++i) CHECK(d(i) == doctest::Approx(models::sigmoid(z(i))));
    auto dr = models::act_deriv(models::Activation::relu, z);
    CHECK(dr(0) == 0.0);
    CHECK(dr(1) == 0.0);  // right-limit convention at the kink
    CHECK(dr(2) == 1.0);
    CHECK(models::act_second(models::Activation::relu, z).isZero(0.0));
    CHECK(models::act_second(models::Activation::identity, z).isZero(0.0));
}
