#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "lit/models.hpp"

namespace lit::diversity {

// Counts of evaluation examples where a model pair is (both correct,
// only-first correct, only-second correct, both wrong).
struct PairContingency {
    long n11 = 0, n10 = 0, n01 = 0, n00 = 0;
    long total() const { return n11 + n10 + n01 + n00; }
};

struct IndepOracleConfig {
    double epsilon = 1e-3;
    int steps = 20;
    double step_size = 0.0;  // <= 0 means epsilon / 10
};

// Mean over rows of X of cos^2 between the two models' input gradients.
double cos_indep_err(const models::MlpParams& f, const models::MlpParams& g,
                     const Eigen::MatrixXd& X, double denom_epsilon = 1e-8);

// Mean of cos_indep_err over unordered member pairs.
std::optional<double> ensemble_cos_indep_err(const std::vector<models::MlpParams>& members,
                                             const Eigen::MatrixXd& X,
                                             double denom_epsilon = 1e-8);

// Projected-gradient-ascent estimate of the independence error: ascend g
// within the epsilon ball around each x, return mean (f(x_gmax) - f(x))^2.
double indep_err_oracle(const models::MlpParams& f, const models::MlpParams& g,
                        const Eigen::MatrixXd& X, const IndepOracleConfig& cfg);

// The ascent endpoint itself, for one starting point.
Eigen::VectorXd ascend(const models::MlpParams& g, const Eigen::VectorXd& x,
                       const IndepOracleConfig& cfg);

struct PairAverage {
    std::optional<double> value;
    int excluded_pairs = 0;  // degenerate/undefined pairs left out of the mean
};

// Mean pairwise Pearson correlation between models' 0/1 incorrectness
// vectors; `correct` is M x n with entry 1 when the model got the example
// right. Degenerate (constant) indicator pairs are excluded.
PairAverage error_correlation_rho(const Eigen::MatrixXi& correct);

std::optional<double> q_statistic(const PairContingency& c);
std::optional<double> kappa(const PairContingency& c);

PairContingency contingency(const Eigen::MatrixXi& correct, int model_a, int model_b);
PairAverage q_statistic_av(const Eigen::MatrixXi& correct);
PairAverage kappa_av(const Eigen::MatrixXi& correct);

// Sample correlation between f(x+e)-f(x) and g(x+e)-g(x) for n Gaussian
// perturbations e ~ N(0, sigma^2 I); deterministic per seed via per-sample
// counter-based substreams. Throws std::domain_error on zero variance.
double perturbation_correlation(const models::MlpParams& f, const models::MlpParams& g,
                                const Eigen::VectorXd& x, double sigma, int n,
                                std::uint64_t seed);

// -1/2 ln(1 - c^2); throws std::domain_error for |c| >= 1.
double mutual_info_from_cos(double c);

}  // namespace lit::diversity
