#include "lit/diversity.hpp"

#include <cmath>
#include <stdexcept>

#include "lit/objectives.hpp"
#include "lit/rng.hpp"

namespace lit::diversity {

double cos_indep_err(const models::MlpParams& f, const models::MlpParams& g,
                     const Eigen::MatrixXd& X, double denom_epsilon) {
    if (X.rows() == 0) throw std::invalid_argument("cos_indep_err: empty evaluation set");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Eigen::VectorXd x = X.row(i).transpose();
        sum += objectives::cos_sq(models::input_gradient(f, x),
                                  models::input_gradient(g, x), denom_epsilon);
    }
    return sum / static_cast<double>(X.rows());
}

std::optional<double> ensemble_cos_indep_err(const std::vector<models::MlpParams>& members,
                                             const Eigen::MatrixXd& X,
                                             double denom_epsilon) {
    if (members.size() < 2) return std::nullopt;
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t m = 0; m < members.size(); ++m)
        for (std::size_t l = m + 1; l < members.size(); ++l) {
            sum += cos_indep_err(members[m], members[l], X, denom_epsilon);
            ++pairs;
        }
    return sum / pairs;
}

Eigen::VectorXd ascend(const models::MlpParams& g, const Eigen::VectorXd& x,
                       const IndepOracleConfig& cfg) {
    if (cfg.epsilon <= 0.0 || cfg.steps < 1)
        throw std::invalid_argument("indep_err_oracle: invalid config");
    double step = cfg.step_size > 0.0 ? cfg.step_size : cfg.epsilon / 10.0;
    Eigen::VectorXd cur = x;
    for (int s = 0; s < cfg.steps; ++s) {
        Eigen::VectorXd grad = models::input_gradient(g, cur);
        double norm = grad.norm();
        if (norm == 0.0) break;  // no ascent direction (Eq. assumes nonzero gradient)
        cur += (step / norm) * grad;
        Eigen::VectorXd d = cur - x;
        double dn = d.norm();
        if (dn > cfg.epsilon) cur = x + (cfg.epsilon / dn) * d;
    }
    return cur;
}

double indep_err_oracle(const models::MlpParams& f, const models::MlpParams& g,
                        const Eigen::MatrixXd& X, const IndepOracleConfig& cfg) {
    if (X.rows() == 0) throw std::invalid_argument("indep_err_oracle: empty evaluation set");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Eigen::VectorXd x = X.row(i).transpose();
        double delta = models::forward(f, ascend(g, x, cfg)) - models::forward(f, x);
        sum += delta * delta;
    }
    return sum / static_cast<double>(X.rows());
}

namespace {

std::optional<double> pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double ma = a.mean(), mb = b.mean();
    Eigen::VectorXd da = a.array() - ma;
    Eigen::VectorXd db = b.array() - mb;
    double va = da.squaredNorm(), vb = db.squaredNorm();
    if (va == 0.0 || vb == 0.0) return std::nullopt;
    return da.dot(db) / std::sqrt(va * vb);
}

}  // namespace

PairAverage error_correlation_rho(const Eigen::MatrixXi& correct) {
    const Eigen::Index M = correct.rows();
    const Eigen::Index n = correct.cols();
    if (M < 2 || n < 2)
        throw std::invalid_argument("error_correlation_rho: needs >= 2 models and >= 2 examples");
    PairAverage out;
    double sum = 0.0;
    int used = 0;
    for (Eigen::Index a = 0; a < M; ++a)
        for (Eigen::Index b = a + 1; b < M; ++b) {
            Eigen::VectorXd ea = (1 - correct.row(a).array()).cast<double>();
            Eigen::VectorXd eb = (1 - correct.row(b).array()).cast<double>();
            auto r = pearson(ea, eb);
            if (r) {
                sum += *r;
                ++used;
            } else {
                ++out.excluded_pairs;
            }
        }
    if (used > 0) out.value = sum / used;
    return out;
}

std::optional<double> q_statistic(const PairContingency& c) {
    double ad = static_cast<double>(c.n11) * c.n00;
    double bc = static_cast<double>(c.n01) * c.n10;
    if (ad + bc == 0.0) return std::nullopt;
    return (ad - bc) / (ad + bc);
}

std::optional<double> kappa(const PairContingency& c) {
    double n = static_cast<double>(c.total());
    if (n == 0.0) return std::nullopt;
    double p_obs = (c.n11 + c.n00) / n;
    double c1 = (c.n11 + c.n10) / n;
    double c2 = (c.n11 + c.n01) / n;
    double p_exp = c1 * c2 + (1.0 - c1) * (1.0 - c2);
    if (p_exp == 1.0) return std::nullopt;
    return (p_obs - p_exp) / (1.0 - p_exp);
}

PairContingency contingency(const Eigen::MatrixXi& correct, int model_a, int model_b) {
    PairContingency c;
    for (Eigen::Index i = 0; i < correct.cols(); ++i) {
        bool a = correct(model_a, i) != 0;
        bool b = correct(model_b, i) != 0;
        if (a && b) ++c.n11;
        else if (a) ++c.n10;
        else if (b) ++c.n01;
        else ++c.n00;
    }
    return c;
}

namespace {

template <typename F>
PairAverage pair_average(const Eigen::MatrixXi& correct, F&& metric) {
    PairAverage out;
    double sum = 0.0;
    int used = 0;
    for (Eigen::Index a = 0; a < correct.rows(); ++a)
        for (Eigen::Index b = a + 1; b < correct.rows(); ++b) {
            auto v = metric(contingency(correct, static_cast<int>(a), static_cast<int>(b)));
            if (v) {
                sum += *v;
                ++used;
            } else {
                ++out.excluded_pairs;
            }
        }
    if (used > 0) out.value = sum / used;
    return out;
}

}  // namespace

PairAverage q_statistic_av(const Eigen::MatrixXi& correct) {
    return pair_average(correct, [](const PairContingency& c) { return q_statistic(c); });
}

PairAverage kappa_av(const Eigen::MatrixXi& correct) {
    return pair_average(correct, [](const PairContingency& c) { return kappa(c); });
}

double perturbation_correlation(const models::MlpParams& f, const models::MlpParams& g,
                                const Eigen::VectorXd& x, double sigma, int n,
                                std::uint64_t seed) {
    if (sigma <= 0.0 || n < 2)
        throw std::invalid_argument("perturbation_correlation: sigma > 0 and n >= 2 required");
    double f0 = models::forward(f, x);
    double g0 = models::forward(g, x);
    Eigen::VectorXd df(n), dg(n);
    Eigen::VectorXd xp(x.size());
    for (int i = 0; i < n; ++i) {
        rng::Rng r(rng::mix(seed, static_cast<std::uint64_t>(i)));
        for (Eigen::Index j = 0; j < x.size(); ++j) xp(j) = x(j) + sigma * r.normal();
        df(i) = models::forward(f, xp) - f0;
        dg(i) = models::forward(g, xp) - g0;
    }
    auto r = pearson(df, dg);
    if (!r) throw std::domain_error("perturbation_correlation: zero variance in differences");
    return *r;
}

double mutual_info_from_cos(double c) {
    if (std::abs(c) >= 1.0)
        throw std::domain_error("mutual_info_from_cos: divergent at |c| >= 1");
    return -0.5 * std::log1p(-c * c);
}

}  // namespace lit::diversity
