#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "lit/diffcore.hpp"

namespace lit::models {

enum class Activation { relu, softplus, identity };

std::string activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// One-hidden-layer MLP producing a log-odds output:
//   f(x) = w2 . a(W1 x + b1) + b2
struct MlpParams {
    Eigen::MatrixXd W1;  // H x D
    Eigen::VectorXd b1;  // H
    Eigen::VectorXd w2;  // H
    double b2 = 0.0;
    Activation activation = Activation::relu;

    Eigen::Index hidden() const { return W1.rows(); }
    Eigen::Index dim() const { return W1.cols(); }
};

// He-style init: W1 ~ N(0, 2/D), w2 ~ N(0, 2/H), biases zero.
MlpParams init(Eigen::Index dim, Eigen::Index hidden, Activation act, std::uint64_t seed);

double forward(const MlpParams& p, const Eigen::VectorXd& x);

// grad_x f = W1^T (w2 .* a'(W1 x + b1))
Eigen::VectorXd input_gradient(const MlpParams& p, const Eigen::VectorXd& x);

double predict_proba(const MlpParams& p, const Eigen::VectorXd& x);

double sigmoid(double x);
double softplus(double x);

// activation and its first/second derivatives, elementwise over a vector
Eigen::ArrayXd act_value(Activation a, const Eigen::ArrayXd& z);
Eigen::ArrayXd act_deriv(Activation a, const Eigen::ArrayXd& z);
Eigen::ArrayXd act_second(Activation a, const Eigen::ArrayXd& z);

// Graph representation of the same network. Parameter variables are named
// <prefix>.W1, <prefix>.b1, <prefix>.w2, <prefix>.b2; `x` must already be
// an expression of shape D x 1. Returns the scalar logit expression.
diffcore::Expr to_expr(const MlpParams& p, diffcore::Graph& g,
                       const std::string& prefix, diffcore::Expr x);

// Adds this model's parameters to a set of bindings under `prefix`.
void bind_params(const MlpParams& p, const std::string& prefix,
                 diffcore::Bindings& b);

// Flat text serialization, one line per tensor; round-trips bit-exactly.
void save(const MlpParams& p, std::ostream& out);
MlpParams load(std::istream& in);
void save_file(const MlpParams& p, const std::string& path);
MlpParams load_file(const std::string& path);

}  // namespace lit::models
