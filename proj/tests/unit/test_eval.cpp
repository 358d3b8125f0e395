#include <doctest.h>

#include "lit/eval.hpp"
#include "lit/models.hpp"

using namespace lit;

TEST_CASE("auc on the four-point example is exactly 0.75") {
    Eigen::VectorXd scores(4), labels(4);
    scores << 0.1, 0.4, 0.35, 0.8;
    labels << 0, 0, 1, 1;
    auto a = eval::auc(scores, labels);
    REQUIRE(a.has_value());
    CHECK(*a == 0.75);
}

TEST_CASE("auc properties: monotone invariance, complement, ties, degeneracy") {
    Eigen::VectorXd scores(6), labels(6);
    scores << -2.0, 0.1, 0.3, 0.3, 1.5, 2.0;
    labels << 0, 1, 0, 1, 1, 0;
    auto a = eval::auc(scores, labels);
    REQUIRE(a.has_value());
    // strictly monotone transform leaves AUC unchanged
    Eigen::VectorXd warped = (scores.array() * 3.0 + 7.0).matrix();
    CHECK(*eval::auc(warped, labels) == *a);
    // ties get midranks: the tied 0/1 pair contributes 1/2
    Eigen::VectorXd s2(2), l2(2);
    s2 << 0.5, 0.5;
    l2 << 0, 1;
    CHECK(*eval::auc(s2, l2) == 0.5);
    // single-class input is undefined
    Eigen::VectorXd l3 = Eigen::VectorXd::Zero(6);
    CHECK(!eval::auc(scores, l3).has_value());
    // tie-free complement identity
    Eigen::VectorXd s3(4), l4(4);
    s3 << 0.1, 0.2, 0.3, 0.4;
    l4 << 0, 1, 0, 1;
    CHECK(*eval::auc(s3, l4) + *eval::auc(-s3, l4) == 1.0);
}

TEST_CASE("accuracy counts threshold ties as class 1") {
    Eigen::VectorXd scores(3), labels(3);
    scores << 0.5, 0.2, 0.9;
    labels << 1, 0, 1;
    CHECK(eval::accuracy(scores, labels) == 1.0);
    labels(0) = 0;
    CHECK(eval::accuracy(scores, labels) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("ensemble_predict is the weighted mean probability") {
    // Constant models: logit = b2 with zero weights elsewhere
    models::MlpParams a = models::init(2, 2, models::Activation::identity, 1);
    a.W1.setZero();
    a.w2.setZero();
    a.b2 = 100.0;  // p ~ 1.0
    models::MlpParams b = a;
    b.b2 = -100.0;  // p ~ 0.0
    Eigen::VectorXd w(2);
    w << 0.75, 0.25;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
    CHECK(eval::ensemble_predict({a, b}, w, x) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("metrics records round-trip through JSON lines with explicit nulls") {
    eval::MetricsRecord r;
    r.method = "LIT";
    r.dataset = "D1";
    r.split = "test";
    r.size = 2;
    r.lambda = 0.1;
    r.restart = 3;
    r.auc = 0.9625;
    r.accuracy = 0.9;
    // rho_av, q_av, kappa, cos2 left undefined on purpose
    r.undefined_reasons = {"rho_av: all pairs degenerate"};
    r.wall_time_s = 1.25;
    std::string line = r.to_json_line();
    CHECK(line.find("\"rho_av\":null") != std::string::npos);
    auto q = eval::MetricsRecord::from_json_line(line);
    CHECK(q.method == r.method);
    CHECK(q.lambda == r.lambda);
    CHECK(q.auc == r.auc);
    CHECK(!q.rho_av.has_value());
    CHECK(q.undefined_reasons == r.undefined_reasons);
    CHECK(q.wall_time_s == r.wall_time_s);

    // missing lambda serializes as null and parses back as unset
    r.lambda.reset();
    auto q2 = eval::MetricsRecord::from_json_line(r.to_json_line());
    CHECK(!q2.lambda.has_value());
}

TEST_CASE("build_report flags undefined metrics instead of zeroing them") {
    // Single-member ensemble: pairwise metrics must be absent, AUC defined.
    auto p = models::init(2, 4, models::Activation::softplus, 5);
    Eigen::MatrixXd X(4, 2);
    X << 1, 0, 0, 1, -1, 0, 0, -1;
    Eigen::VectorXd y(4);
    y << 1, 0, 1, 0;
    Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
    auto rec = eval::build_report({p}, w, X, y);
    CHECK(rec.auc.has_value());
    CHECK(rec.accuracy.has_value());
    CHECK(!rec.rho_av.has_value());
    CHECK(!rec.cos2.has_value());
    CHECK(!rec.undefined_reasons.empty());

    // duplicated member: defined pairwise metrics, cos2 ~ 1
    Eigen::VectorXd w2 = Eigen::VectorXd::Constant(2, 0.5);
    auto rec2 = eval::build_report({p, p}, w2, X, y);
    REQUIRE(rec2.cos2.has_value());
    CHECK(*rec2.cos2 == doctest::Approx(1.0).epsilon(1e-6));
}
