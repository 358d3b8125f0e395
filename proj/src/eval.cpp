#include "lit/eval.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "lit/diversity.hpp"

namespace lit::eval {

std::string MetricsRecord::to_json_line() const {
    nlohmann::json j;
    j["method"] = method;
    j["dataset"] = dataset;
    j["split"] = split;
    j["size"] = size;
    j["lambda"] = lambda ? nlohmann::json(*lambda) : nlohmann::json(nullptr);
    j["restart"] = restart;
    auto put = [&](const char* k, const std::optional<double>& v) {
        j[k] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    put("auc", auc);
    put("acc", accuracy);
    put("rho_av", rho_av);
    put("q_av", q_av);
    put("kappa", kappa);
    put("cos2", cos2);
    if (!undefined_reasons.empty()) j["undefined"] = undefined_reasons;
    j["wall_time_s"] = wall_time_s;
    return j.dump();
}

MetricsRecord MetricsRecord::from_json_line(const std::string& line) {
    nlohmann::json j = nlohmann::json::parse(line);
    MetricsRecord r;
    r.method = j.at("method").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.size = j.at("size").get<int>();
    if (!j.at("lambda").is_null()) r.lambda = j["lambda"].get<double>();
    r.restart = j.at("restart").get<int>();
    auto take = [&](const char* k, std::optional<double>& v) {
        if (j.contains(k) && !j[k].is_null()) v = j[k].get<double>();
    };
    take("auc", r.auc);
    take("acc", r.accuracy);
    take("rho_av", r.rho_av);
    take("q_av", r.q_av);
    take("kappa", r.kappa);
    take("cos2", r.cos2);
    if (j.contains("undefined"))
        r.undefined_reasons = j["undefined"].get<std::vector<std::string>>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
}

double ensemble_predict(const std::vector<models::MlpParams>& members,
                        const Eigen::VectorXd& member_weights,
                        const Eigen::VectorXd& x) {
    if (members.empty()) throw std::invalid_argument("ensemble_predict: no members");
    if (member_weights.size() != static_cast<Eigen::Index>(members.size()))
        throw std::invalid_argument("ensemble_predict: weight count mismatch");
    double p = 0.0;
    for (std::size_t m = 0; m < members.size(); ++m)
        p += member_weights(static_cast<Eigen::Index>(m)) * models::predict_proba(members[m], x);
    return p;
}

Eigen::VectorXd ensemble_scores(const std::vector<models::MlpParams>& members,
                                const Eigen::VectorXd& member_weights,
                                const Eigen::MatrixXd& X) {
    Eigen::VectorXd s(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        s(i) = ensemble_predict(members, member_weights, X.row(i).transpose());
    return s;
}

std::optional<double> auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
    const Eigen::Index n = scores.size();
    if (labels.size() != n) throw std::invalid_argument("auc: size mismatch");
    long npos = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (labels(i) > 0.5) ++npos;
    long nneg = n - npos;
    if (npos == 0 || nneg == 0) return std::nullopt;

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });

    // rank sum of positives with midranks for ties
    double pos_rank_sum = 0.0;
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j < n && scores(order[static_cast<std::size_t>(j)]) ==
                            scores(order[static_cast<std::size_t>(i)]))
            ++j;
        double midrank = 0.5 * static_cast<double>(i + j + 1);  // ranks are 1-based
        for (Eigen::Index k = i; k < j; ++k)
            if (labels(order[static_cast<std::size_t>(k)]) > 0.5) pos_rank_sum += midrank;
        i = j;
    }
    double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * (npos + 1);
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double accuracy(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                double threshold) {
    if (scores.size() != labels.size()) throw std::invalid_argument("accuracy: size mismatch");
    long correct = 0;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
        int pred = scores(i) >= threshold ? 1 : 0;
        if (pred == static_cast<int>(labels(i))) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

MetricsRecord build_report(const std::vector<models::MlpParams>& members,
                           const Eigen::VectorXd& member_weights,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double denom_epsilon) {
    if (X.rows() == 0) throw std::invalid_argument("build_report: empty evaluation set");
    MetricsRecord rec;
    rec.size = static_cast<int>(members.size());

    Eigen::VectorXd scores = ensemble_scores(members, member_weights, X);
    rec.auc = auc(scores, y);
    if (!rec.auc) rec.undefined_reasons.push_back("auc: single-class evaluation set");
    rec.accuracy = accuracy(scores, y);

    if (members.size() < 2) {
        rec.undefined_reasons.push_back("pairwise metrics: single-member ensemble");
        return rec;
    }

    Eigen::MatrixXi correct(members.size(), X.rows());
    for (std::size_t m = 0; m < members.size(); ++m)
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            double p = models::predict_proba(members[m], X.row(i).transpose());
            int pred = p >= 0.5 ? 1 : 0;
            correct(static_cast<Eigen::Index>(m), i) =
                pred == static_cast<int>(y(i)) ? 1 : 0;
        }

    auto rho = diversity::error_correlation_rho(correct);
    rec.rho_av = rho.value;
    if (!rho.value) rec.undefined_reasons.push_back("rho_av: all pairs degenerate");
    else if (rho.excluded_pairs > 0)
        rec.undefined_reasons.push_back("rho_av: excluded " +
                                        std::to_string(rho.excluded_pairs) + " degenerate pairs");
    auto q = diversity::q_statistic_av(correct);
    rec.q_av = q.value;
    if (!q.value) rec.undefined_reasons.push_back("q_av: all pairs undefined");
    else if (q.excluded_pairs > 0)
        rec.undefined_reasons.push_back("q_av: excluded " +
                                        std::to_string(q.excluded_pairs) + " pairs");
    auto k = diversity::kappa_av(correct);
    rec.kappa = k.value;
    if (!k.value) rec.undefined_reasons.push_back("kappa: all pairs undefined");

    rec.cos2 = diversity::ensemble_cos_indep_err(members, X, denom_epsilon);
    return rec;
}

}  // namespace lit::eval
