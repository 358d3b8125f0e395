// End-to-end checks of the library's core claims, one numbered criterion per
// invocation (or all when run without arguments). Each criterion prints a
// single PASS/FAIL line with the measured numbers; the process exits nonzero
// if any requested criterion fails.

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lit/config.hpp"
#include "lit/data.hpp"
#include "lit/diversity.hpp"
#include "lit/eval.hpp"
#include "lit/models.hpp"
#include "lit/objectives.hpp"
#include "lit/rng.hpp"
#include "lit/training.hpp"

using namespace lit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

Eigen::MatrixXd rand_mat(rng::Rng& r, Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = r.normal();
    return m;
}

models::MlpParams random_softplus_model(Eigen::Index d, Eigen::Index h, std::uint64_t seed) {
    auto p = models::init(d, h, models::Activation::softplus, seed);
    rng::Rng r(rng::mix(seed, 17));
    for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1(i) = 0.2 * r.normal();
    p.b2 = 0.2 * r.normal();
    return p;
}

double signed_cos(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a.dot(b) / (a.norm() * b.norm());
}

// ---------- criterion 1: gradients vs finite differences --------------------

Outcome criterion1() {
    const Eigen::Index D = 3, H = 6;
    double worst_param = 0.0, worst_input = 0.0;
    int models_used = 0;

    // 50 single models: NLL objective + model input gradient
    for (int k = 0; k < 50; ++k) {
        auto p = random_softplus_model(D, H, 100 + static_cast<std::uint64_t>(k));
        ++models_used;
        rng::Rng r(rng::mix(200, static_cast<std::uint64_t>(k)));
        Eigen::MatrixXd X = rand_mat(r, 2, D);
        Eigen::VectorXd y(2);
        y << (r.uniform() < 0.5 ? 0.0 : 1.0), (r.uniform() < 0.5 ? 0.0 : 1.0);

        diffcore::Graph g;
        objectives::PenaltyConfig cfg;  // lambda 0: pure NLL
        auto obj = objectives::lit_objective({p}, X, y, cfg, g);
        diffcore::Bindings env = obj.inputs;
        models::bind_params(p, "m0", env);
        worst_param = std::max(worst_param,
                               g.check_gradient(obj.loss, env, obj.param_names, 1e-5));

        // input gradient of the raw model output
        diffcore::Graph g2;
        auto xin = g2.input("x", {D, 1});
        auto f = models::to_expr(p, g2, "m", xin);
        diffcore::Bindings env2;
        models::bind_params(p, "m", env2);
        env2["x"] = X.row(0).transpose();
        worst_input = std::max(worst_input, g2.check_gradient(f, env2, {"x"}, 1e-6));
    }

    // 25 pairs: joint objective with the gradient-alignment penalty
    for (int k = 0; k < 25; ++k) {
        std::vector<models::MlpParams> members{
            random_softplus_model(D, H, 300 + static_cast<std::uint64_t>(k)),
            random_softplus_model(D, H, 400 + static_cast<std::uint64_t>(k))};
        models_used += 2;
        rng::Rng r(rng::mix(500, static_cast<std::uint64_t>(k)));
        Eigen::MatrixXd X = rand_mat(r, 2, D);
        Eigen::VectorXd y(2);
        y << (r.uniform() < 0.5 ? 0.0 : 1.0), (r.uniform() < 0.5 ? 0.0 : 1.0);
        diffcore::Graph g;
        objectives::PenaltyConfig cfg;
        cfg.lambda = 0.1;
        auto obj = objectives::lit_objective(members, X, y, cfg, g);
        diffcore::Bindings env = obj.inputs;
        models::bind_params(members[0], "m0", env);
        models::bind_params(members[1], "m1", env);
        worst_param = std::max(worst_param,
                               g.check_gradient(obj.loss, env, obj.param_names, 1e-5));
    }

    std::ostringstream os;
    os << models_used << " models; worst param rel err " << worst_param
       << " (limit 1e-3), worst input rel err " << worst_input << " (limit 1e-4)";
    return {worst_param < 1e-3 && worst_input < 1e-4, os.str()};
}

// ---------- criterion 2: perturbation correlation --------------------------

Outcome criterion2() {
    const Eigen::Index D = 4, H = 8;
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        auto f = random_softplus_model(D, H, 1000 + static_cast<std::uint64_t>(k));
        auto g = random_softplus_model(D, H, 2000 + static_cast<std::uint64_t>(k));
        rng::Rng r(rng::mix(3000, static_cast<std::uint64_t>(k)));
        Eigen::VectorXd x = rand_mat(r, D, 1);
        double pc = diversity::perturbation_correlation(f, g, x, 1e-4, 100000,
                                                        rng::mix(4000, k));
        double cs = signed_cos(models::input_gradient(f, x), models::input_gradient(g, x));
        worst = std::max(worst, std::abs(pc - cs));
    }
    std::ostringstream os;
    os << "20 pairs; worst |corr - cos| = " << worst << " (limit 0.02)";
    return {worst <= 0.02, os.str()};
}

// ---------- criterion 3: ascent oracle vs linearization --------------------

Outcome criterion3() {
    const Eigen::Index D = 4, H = 8;
    diversity::IndepOracleConfig cfg;
    cfg.epsilon = 1e-3;
    int within = 0, total = 0;
    for (int k = 0; k < 10; ++k) {
        auto f = random_softplus_model(D, H, 5000 + static_cast<std::uint64_t>(k));
        auto g = random_softplus_model(D, H, 6000 + static_cast<std::uint64_t>(k));
        rng::Rng r(rng::mix(7000, static_cast<std::uint64_t>(k)));
        for (int i = 0; i < 20; ++i) {
            Eigen::VectorXd x = rand_mat(r, D, 1);
            Eigen::VectorXd gf = models::input_gradient(f, x);
            if (gf.norm() < 1e-12) continue;
            Eigen::VectorXd xe = diversity::ascend(g, x, cfg);
            double lhs = (models::forward(f, xe) - models::forward(f, x)) /
                         (cfg.epsilon * gf.norm());
            double rhs = signed_cos(gf, models::input_gradient(g, x));
            ++total;
            if (std::abs(lhs - rhs) <= 0.05) ++within;
        }
    }
    std::ostringstream os;
    double frac = static_cast<double>(within) / total;
    os << within << "/" << total << " points within 0.05 (" << 100.0 * frac
       << "%, need >= 90%)";
    return {total >= 190 && frac >= 0.9, os.str()};
}

// ---------- helpers for training-based criteria -----------------------------

training::EnsembleConfig synth_cfg(training::Method m, int size, double lambda,
                                   std::uint64_t seed) {
    training::EnsembleConfig cfg;
    cfg.method = m;
    cfg.size = size;
    cfg.lambda = lambda;
    cfg.epochs = 300;
    cfg.batch_size = 64;
    cfg.hidden = 64;
    cfg.seed = seed;
    return cfg;
}

double member_accuracy(const models::MlpParams& p, const data::Dataset& d) {
    Eigen::VectorXd s(d.n());
    for (Eigen::Index i = 0; i < d.n(); ++i)
        s(i) = models::predict_proba(p, d.X.row(i).transpose());
    return eval::accuracy(s, d.y);
}

// ---------- criterion 4: pair on D1/D2 ------------------------------------

Outcome criterion4() {
    bool ok = true;
    std::ostringstream os;
    for (auto variant : {data::GapsVariant::D1, data::GapsVariant::D2}) {
        auto d = data::gen_2d_gaps(variant, 400, 0.25, 7);
        const char* vname = variant == data::GapsVariant::D1 ? "D1" : "D2";

        auto rrs = training::train(synth_cfg(training::Method::RRs, 2, 0.0, 11), d, d);
        double rrs_cos = diversity::cos_indep_err(rrs.members[0], rrs.members[1], d.X);
        os << vname << ": RRs cos2=" << rrs_cos;
        if (rrs_cos < 0.8) ok = false;

        for (double lambda : {1e-2, 1e-1, 1.0}) {
            auto lit = training::train(synth_cfg(training::Method::LIT, 2, lambda, 11), d, d);
            double c = diversity::cos_indep_err(lit.members[0], lit.members[1], d.X);
            double a0 = member_accuracy(lit.members[0], d);
            double a1 = member_accuracy(lit.members[1], d);
            os << "; LIT(l=" << lambda << ") cos2=" << c << " acc=(" << a0 << "," << a1 << ")";
            if (c > 0.1 || a0 < 0.9 || a1 < 0.9) ok = false;
        }
        os << " | ";
    }
    return {ok, os.str()};
}

// ---------- criterion 5: D3 tradeoff ----------------------------------------

Outcome criterion5() {
    auto d = data::gen_2d_gaps(data::GapsVariant::D3, 400, 0.25, 7);
    auto rrs = training::train(synth_cfg(training::Method::RRs, 2, 0.0, 13), d, d);
    auto lit = training::train(synth_cfg(training::Method::LIT, 2, 1.0, 13), d, d);

    double lit_cos = diversity::cos_indep_err(lit.members[0], lit.members[1], d.X);
    double rrs_ens =
        eval::accuracy(eval::ensemble_scores(rrs.members, rrs.member_weights, d.X), d.y);
    double lit_ens =
        eval::accuracy(eval::ensemble_scores(lit.members, lit.member_weights, d.X), d.y);
    double rrs_mean =
        0.5 * (member_accuracy(rrs.members[0], d) + member_accuracy(rrs.members[1], d));
    double lit_min =
        std::min(member_accuracy(lit.members[0], d), member_accuracy(lit.members[1], d));

    std::ostringstream os;
    os << "LIT cos2=" << lit_cos << " (<=0.1), ensemble acc LIT=" << lit_ens
       << " vs RRs=" << rrs_ens << " (within 0.1), LIT min member=" << lit_min
       << " vs RRs member mean=" << rrs_mean << " (must be lower)";
    bool ok = lit_cos <= 0.1 && lit_ens >= rrs_ens - 0.1 && lit_min < rrs_mean;
    return {ok, os.str()};
}

// ---------- criteria 6/7: tabular grid comparisons ---------------------------

std::string find_tabular_dataset(std::string& label_col) {
    label_col = "label";
    if (fs::exists("data/ionosphere.csv")) return "data/ionosphere.csv";
    if (fs::exists("data/sonar.csv")) return "data/sonar.csv";
    return "";
}

Outcome tabular_grid(data::SplitKind kind, bool extrapolation_margin) {
    std::string label_col;
    std::string path = find_tabular_dataset(label_col);
    if (path.empty())
        return {false,
                "no dataset: place data/ionosphere.csv (or data/sonar.csv) with a header row "
                "and a 'label' column; see README"};

    auto full = data::load_csv(path, label_col, {});
    training::GridSpec spec;
    spec.methods = {training::Method::RRs, training::Method::LIT};
    spec.sizes = {2, 3, 5, 8, 13};
    spec.lambda_grid = training::log_lambda_grid(8);
    spec.restarts = 5;
    spec.base.epochs = 120;
    spec.base.batch_size = 64;
    spec.base.learning_rate = 1e-3;
    spec.base.dropout_rate = 0.5;
    spec.base.l2_penalty = 1e-4;
    spec.base.hidden = 256;
    spec.base.seed = 20240817;
    spec.split_base.kind = kind;
    spec.split_base.seed = 99;
    spec.dataset_name = fs::path(path).stem().string();

    auto t0 = std::chrono::steady_clock::now();
    auto res = training::grid_search(full, spec);
    double mins =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;

    const training::MethodSelection* rrs = nullptr;
    const training::MethodSelection* lit = nullptr;
    for (const auto& s : res.selections) {
        if (s.method == "RRs") rrs = &s;
        if (s.method == "LIT") lit = &s;
    }
    if (!rrs || !lit || !rrs->test_auc_mean || !lit->test_auc_mean)
        return {false, "grid did not produce selections for both methods"};

    std::ostringstream os;
    os << spec.dataset_name << " " << (kind == data::SplitKind::random ? "random" : "extrapolation")
       << " split: LIT auc=" << *lit->test_auc_mean << " (size " << lit->size << ", lambda "
       << (lit->lambda ? *lit->lambda : 0.0) << ") vs RRs auc=" << *rrs->test_auc_mean
       << " (size " << rrs->size << ")";
    if (lit->cos2_mean) os << ", LIT cos2=" << *lit->cos2_mean;
    os << ", " << res.failures.size() << " failed runs, " << mins << " min";

    bool ok;
    if (extrapolation_margin) {
        ok = *lit->test_auc_mean >= *rrs->test_auc_mean + 0.03 && lit->cos2_mean &&
             *lit->cos2_mean <= 0.2;
    } else {
        ok = *lit->test_auc_mean >= *rrs->test_auc_mean - 0.01;
    }
    return {ok, os.str()};
}

Outcome criterion6() { return tabular_grid(data::SplitKind::extrapolation, true); }
Outcome criterion7() { return tabular_grid(data::SplitKind::random, false); }

// ---------- criterion 8: manifold projection ---------------------------------

Outcome criterion8() {
    auto d = data::gen_manifold_3d(400, 7);
    const double lambda = 0.5;

    auto proj_cfg = synth_cfg(training::Method::LIT, 2, lambda, 19);
    proj_cfg.use_manifold = true;
    proj_cfg.epochs = 1500;
    proj_cfg.learning_rate = 1e-2;
    auto proj = training::train(proj_cfg, d, d);

    auto amb_cfg = proj_cfg;
    amb_cfg.use_manifold = false;
    auto amb = training::train(amb_cfg, d, d);

    auto chart_cos2 = [&](const training::TrainedEnsemble& e) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            Eigen::VectorXd x = d.X.row(i).transpose();
            sum += objectives::manif_cos_sq(models::input_gradient(e.members[0], x),
                                            models::input_gradient(e.members[1], x),
                                            d.tangents[static_cast<std::size_t>(i)], 1e-8);
        }
        return sum / static_cast<double>(d.n());
    };

    double proj_c = chart_cos2(proj);
    double amb_c = chart_cos2(amb);
    double a0 = member_accuracy(proj.members[0], d);
    double a1 = member_accuracy(proj.members[1], d);

    std::ostringstream os;
    os << "projected-penalty chart cos2=" << proj_c << " (<=0.15), member acc=(" << a0 << ","
       << a1 << ") (>=0.9), ambient-penalty chart cos2=" << amb_c
       << " (needs >= projected + 0.2)";
    bool ok = proj_c <= 0.15 && a0 >= 0.9 && a1 >= 0.9 && amb_c >= proj_c + 0.2;
    return {ok, os.str()};
}

// ---------- criterion 9: metric identities -----------------------------------

Outcome criterion9() {
    std::ostringstream os;
    bool ok = true;

    Eigen::MatrixXi correct(2, 6);
    correct << 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 0, 1;
    auto rho = diversity::error_correlation_rho(correct);
    auto q = diversity::q_statistic_av(correct);
    auto k = diversity::kappa_av(correct);
    if (!rho.value || std::abs(*rho.value - 1.0) > 1e-12) ok = false;
    if (!q.value || std::abs(*q.value - 1.0) > 1e-12) ok = false;
    if (!k.value || std::abs(*k.value - 1.0) > 1e-12) ok = false;
    os << "duplicated members: rho=" << (rho.value ? *rho.value : -99)
       << " Q=" << (q.value ? *q.value : -99) << " kappa=" << (k.value ? *k.value : -99);

    if (diversity::mutual_info_from_cos(0.0) != 0.0) ok = false;
    os << "; MI(0)=" << diversity::mutual_info_from_cos(0.0);

    diversity::PairContingency c{30, 10, 20, 40};
    auto qv = diversity::q_statistic(c);
    if (!qv || std::abs(*qv - 5.0 / 7.0) > 1e-12) ok = false;
    os << "; Q(30,10,20,40)=" << (qv ? *qv : -99) << " (5/7=" << 5.0 / 7.0 << ")";

    Eigen::VectorXd scores(4), labels(4);
    scores << 0.1, 0.4, 0.35, 0.8;
    labels << 0, 0, 1, 1;
    auto a = eval::auc(scores, labels);
    if (!a || *a != 0.75) ok = false;
    os << "; AUC=" << (a ? *a : -99) << " (want 0.75 exactly)";
    return {ok, os.str()};
}

// ---------- criterion 10: lambda = 0 reduction ---------------------------------

Outcome criterion10() {
    auto d = data::gen_2d_gaps(data::GapsVariant::D1, 200, 0.25, 3);
    data::SplitSpec sp;
    sp.seed = 4;
    auto sr = data::split(d, sp);

    auto lit_cfg = synth_cfg(training::Method::LIT, 2, 0.0, 77);
    lit_cfg.epochs = 40;
    auto rrs_cfg = lit_cfg;
    rrs_cfg.method = training::Method::RRs;

    auto a = training::train(lit_cfg, sr.train, sr.valid);
    auto b = training::train(rrs_cfg, sr.train, sr.valid);
    double worst = 0.0;
    for (int m = 0; m < 2; ++m) {
        worst = std::max(worst, (training::flatten(a.members[static_cast<std::size_t>(m)]) -
                                 training::flatten(b.members[static_cast<std::size_t>(m)]))
                                    .cwiseAbs()
                                    .maxCoeff());
    }
    std::ostringstream os;
    os << "max |param difference| = " << worst << " (limit 1e-10)";
    return {worst <= 1e-10, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::function<Outcome()>> criteria{
        criterion1, criterion2, criterion3, criterion4, criterion5,
        criterion6, criterion7, criterion8, criterion9, criterion10};

    std::vector<int> which;
    if (argc > 1) {
        for (int i = 1; i < argc; ++i) {
            int n = std::atoi(argv[i]);
            if (n < 1 || n > static_cast<int>(criteria.size())) {
                std::cerr << "usage: acceptance [criterion numbers 1.."
                          << criteria.size() << "]\n";
                return 2;
            }
            which.push_back(n);
        }
    } else {
        for (int n = 1; n <= static_cast<int>(criteria.size()); ++n) which.push_back(n);
    }

    bool all_ok = true;
    for (int n : which) {
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(n - 1)]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail
                  << std::endl;
        if (!o.pass) all_ok = false;
    }
    return all_ok ? 0 : 1;
}
