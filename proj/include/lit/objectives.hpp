#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "lit/diffcore.hpp"
#include "lit/models.hpp"

namespace lit::objectives {

struct PenaltyConfig {
    double lambda = 0.0;
    double denom_epsilon = 1e-8;
};

// Numerically stable binary cross-entropy with logits.
double nll(double logit, int y);

// (g1.g2)^2 / (|g1||g2| + eps)^2
double cos_sq(const Eigen::VectorXd& g1, const Eigen::VectorXd& g2, double denom_epsilon);

// cos_sq on tangent-projected gradients; J is D x K with tangent columns.
double manif_cos_sq(const Eigen::VectorXd& g1, const Eigen::VectorXd& g2,
                    const Eigen::MatrixXd& J, double denom_epsilon);

// --- graph route -----------------------------------------------------------
//
// Builders return the joint loss as a differentiable expression over all
// members' parameters. Batch inputs become graph variables x0..x{n-1}
// (pre-filled in `inputs`) so the builders can take input gradients.

struct ObjectiveExpr {
    diffcore::Expr loss;
    diffcore::Expr nll_term;
    diffcore::Expr penalty_term;        // invalid Expr when the objective has none
    diffcore::Bindings inputs;          // batch variable values
    std::vector<std::string> param_names;
};

ObjectiveExpr lit_objective(const std::vector<models::MlpParams>& members,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const PenaltyConfig& cfg, diffcore::Graph& g,
                            const std::vector<Eigen::MatrixXd>* tangents = nullptr);

ObjectiveExpr ncl_objective(const std::vector<models::MlpParams>& members,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double lambda, diffcore::Graph& g);

ObjectiveExpr ace_objective(const std::vector<models::MlpParams>& members,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double lambda, diffcore::Graph& g);

// --- analytic route ---------------------------------------------------------
//
// Closed-form value-and-gradient evaluation for the fixed one-hidden-layer
// architecture; vectorized over the batch. Validated against the graph
// route and finite differences in the test suite.

struct MemberGrads {
    Eigen::MatrixXd W1;
    Eigen::VectorXd b1;
    Eigen::VectorXd w2;
    double b2 = 0.0;
};

struct BatchValue {
    double total = 0.0;
    double nll = 0.0;
    double penalty = 0.0;
};

// X is B x D, y is B. `tangents` holds a D x K Jacobian per batch point
// (switches the penalty to its manifold-projected form). `dropout` holds an
// H x B scale mask per member (0 or 1/(1-rate)). `example_weights` replaces
// the uniform 1/B weighting of the NLL term; must sum to 1.
BatchValue lit_batch_grads(const std::vector<models::MlpParams>& members,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const PenaltyConfig& cfg,
                           std::vector<MemberGrads>& grads,
                           const std::vector<Eigen::MatrixXd>* tangents = nullptr,
                           const std::vector<Eigen::MatrixXd>* dropout = nullptr,
                           const Eigen::VectorXd* example_weights = nullptr);

BatchValue ncl_batch_grads(const std::vector<models::MlpParams>& members,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double lambda, std::vector<MemberGrads>& grads,
                           const std::vector<Eigen::MatrixXd>* dropout = nullptr);

BatchValue ace_batch_grads(const std::vector<models::MlpParams>& members,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double lambda, std::vector<MemberGrads>& grads,
                           const std::vector<Eigen::MatrixXd>* dropout = nullptr);

}  // namespace lit::objectives
