#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "lit/models.hpp"

namespace lit::eval {

// One row of results for (method, dataset, split, size, lambda, restart).
// Metrics that cannot be computed stay unset and carry a reason string;
// they serialize as explicit nulls, never as 0.
struct MetricsRecord {
    std::string method;
    std::string dataset;
    std::string split;  // "valid" or "test"
    int size = 0;
    std::optional<double> lambda;
    int restart = 0;

    std::optional<double> auc;
    std::optional<double> accuracy;
    std::optional<double> rho_av;
    std::optional<double> q_av;
    std::optional<double> kappa;
    std::optional<double> cos2;
    std::vector<std::string> undefined_reasons;
    double wall_time_s = 0.0;

    std::string to_json_line() const;
    static MetricsRecord from_json_line(const std::string& line);
};

// Weighted mean of member probabilities; weights must be nonnegative and
// sum to 1 (uniform everywhere except AdaBoost).
double ensemble_predict(const std::vector<models::MlpParams>& members,
                        const Eigen::VectorXd& member_weights,
                        const Eigen::VectorXd& x);

Eigen::VectorXd ensemble_scores(const std::vector<models::MlpParams>& members,
                                const Eigen::VectorXd& member_weights,
                                const Eigen::MatrixXd& X);

// Mann-Whitney AUC with midranks for ties; unset when only one class
// is present.
std::optional<double> auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

// Fraction with (score >= threshold) == label; score exactly at the
// threshold counts as class 1.
double accuracy(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                double threshold = 0.5);

// All metrics for one ensemble on one evaluation set. Pairwise metrics are
// averaged over unordered member pairs and stay unset for single-member
// ensembles or when every pair is degenerate.
MetricsRecord build_report(const std::vector<models::MlpParams>& members,
                           const Eigen::VectorXd& member_weights,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double denom_epsilon = 1e-8);

}  // namespace lit::eval
