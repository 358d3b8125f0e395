#include "lit/training.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "lit/rng.hpp"

namespace lit::training {

namespace fs = std::filesystem;

std::string method_name(Method m) {
    switch (m) {
        case Method::RRs: return "RRs";
        case Method::Bag: return "Bag";
        case Method::Ada: return "Ada";
        case Method::NCL: return "NCL";
        case Method::ACE: return "ACE";
        case Method::LIT: return "LIT";
    }
    throw std::logic_error("method_name: bad enum");
}

Method method_from_name(const std::string& name) {
    if (name == "RRs") return Method::RRs;
    if (name == "Bag") return Method::Bag;
    if (name == "Ada") return Method::Ada;
    if (name == "NCL") return Method::NCL;
    if (name == "ACE") return Method::ACE;
    if (name == "LIT") return Method::LIT;
    throw std::invalid_argument("unknown method: " + name);
}

bool method_penalized(Method m) {
    return m == Method::NCL || m == Method::ACE || m == Method::LIT;
}

// --- optimizer ---------------------------------------------------------------

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, const AdamHyper& hp) {
    if (grads.size() != params.size())
        throw std::invalid_argument("adam_step: size mismatch");
    if (!grads.allFinite()) {
        Eigen::Index bad = 0;
        for (Eigen::Index i = 0; i < grads.size(); ++i)
            if (!std::isfinite(grads(i))) { bad = i; break; }
        throw std::runtime_error("adam_step: non-finite gradient at flat index " +
                                 std::to_string(bad));
    }
    if (state.t == 0) {
        state.m = Eigen::VectorXd::Zero(params.size());
        state.v = Eigen::VectorXd::Zero(params.size());
    }
    ++state.t;
    state.m = hp.beta1 * state.m + (1.0 - hp.beta1) * grads;
    state.v = hp.beta2 * state.v.array().matrix() +
              (1.0 - hp.beta2) * grads.array().square().matrix();
    double mc = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    double vc = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    params.array() -= hp.lr * (state.m.array() / mc) /
                      ((state.v.array() / vc).sqrt() + hp.eps);
}

Eigen::VectorXd flatten(const models::MlpParams& p) {
    Eigen::Index n = p.W1.size() + p.b1.size() + p.w2.size() + 1;
    Eigen::VectorXd v(n);
    Eigen::Index off = 0;
    v.segment(off, p.W1.size()) = Eigen::Map<const Eigen::VectorXd>(p.W1.data(), p.W1.size());
    off += p.W1.size();
    v.segment(off, p.b1.size()) = p.b1;
    off += p.b1.size();
    v.segment(off, p.w2.size()) = p.w2;
    off += p.w2.size();
    v(off) = p.b2;
    return v;
}

void unflatten(const Eigen::VectorXd& v, models::MlpParams& p) {
    Eigen::Index off = 0;
    Eigen::Map<Eigen::VectorXd>(p.W1.data(), p.W1.size()) = v.segment(off, p.W1.size());
    off += p.W1.size();
    p.b1 = v.segment(off, p.b1.size());
    off += p.b1.size();
    p.w2 = v.segment(off, p.w2.size());
    off += p.w2.size();
    p.b2 = v(off);
}

Eigen::VectorXd flatten_grads(const objectives::MemberGrads& g) {
    Eigen::Index n = g.W1.size() + g.b1.size() + g.w2.size() + 1;
    Eigen::VectorXd v(n);
    Eigen::Index off = 0;
    v.segment(off, g.W1.size()) = Eigen::Map<const Eigen::VectorXd>(g.W1.data(), g.W1.size());
    off += g.W1.size();
    v.segment(off, g.b1.size()) = g.b1;
    off += g.b1.size();
    v.segment(off, g.w2.size()) = g.w2;
    off += g.w2.size();
    v(off) = g.b2;
    return v;
}

// --- core minibatch loop ------------------------------------------------------

namespace {

struct CoreResult {
    std::vector<models::MlpParams> members;
    std::vector<EpochLog> log;
};

// Shared joint loop. RRs/Bag/Ada use the penalty-free path (a LIT batch with
// lambda = 0 evaluates the plain NLL sum, with identical arithmetic and
// identical random streams), so turning the penalty off reproduces
// independent training bit for bit.
CoreResult train_core(const EnsembleConfig& cfg,
                      const std::vector<std::uint64_t>& member_seeds,
                      const data::Dataset& tr,
                      const Eigen::VectorXd* example_weights) {
    const Eigen::Index n = tr.n();
    const Eigen::Index D = tr.dim();
    const int M = static_cast<int>(member_seeds.size());
    if (n == 0) throw std::invalid_argument("train: empty training set");
    if (cfg.epochs <= 0 || cfg.batch_size <= 0)
        throw std::invalid_argument("train: epochs and batch_size must be positive");
    if (cfg.use_manifold && !tr.has_tangents())
        throw std::invalid_argument("train: manifold penalty requested but dataset has no tangents");

    CoreResult res;
    res.members.reserve(static_cast<std::size_t>(M));
    std::vector<Eigen::VectorXd> flat(static_cast<std::size_t>(M));
    std::vector<AdamState> adam(static_cast<std::size_t>(M));
    for (int m = 0; m < M; ++m) {
        res.members.push_back(models::init(D, cfg.hidden, cfg.activation,
                                           member_seeds[static_cast<std::size_t>(m)]));
        flat[static_cast<std::size_t>(m)] = flatten(res.members[static_cast<std::size_t>(m)]);
    }
    AdamHyper hp;
    hp.lr = cfg.learning_rate;

    rng::Rng batch_rng(rng::mix(cfg.seed, 555));
    rng::Rng drop_rng(rng::mix(cfg.seed, 777));

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<objectives::MemberGrads> grads;
    objectives::PenaltyConfig pcfg;
    pcfg.lambda = cfg.method == Method::LIT ? cfg.lambda : 0.0;
    pcfg.denom_epsilon = cfg.denom_epsilon;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        double ep_loss = 0.0, ep_nll = 0.0, ep_pen = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index B = std::min<Eigen::Index>(cfg.batch_size, n - start);
            Eigen::MatrixXd Xb(B, D);
            Eigen::VectorXd yb(B);
            std::vector<Eigen::MatrixXd> tb;
            Eigen::VectorXd wb;
            if (example_weights) wb.resize(B);
            for (Eigen::Index i = 0; i < B; ++i) {
                Eigen::Index src = order[static_cast<std::size_t>(start + i)];
                Xb.row(i) = tr.X.row(src);
                yb(i) = tr.y(src);
                if (cfg.use_manifold) tb.push_back(tr.tangents[static_cast<std::size_t>(src)]);
                if (example_weights) wb(i) = (*example_weights)(src);
            }
            if (example_weights) {
                double s = wb.sum();
                if (s > 0.0) wb /= s;
                else wb.setConstant(1.0 / static_cast<double>(B));
            }

            std::vector<Eigen::MatrixXd> masks;
            if (cfg.dropout_rate > 0.0) {
                const double keep = 1.0 - cfg.dropout_rate;
                masks.resize(static_cast<std::size_t>(M));
                for (int m = 0; m < M; ++m) {
                    Eigen::MatrixXd mk(cfg.hidden, B);
                    for (Eigen::Index b = 0; b < B; ++b)
                        for (Eigen::Index h = 0; h < cfg.hidden; ++h)
                            mk(h, b) = drop_rng.uniform() < keep ? 1.0 / keep : 0.0;
                    masks[static_cast<std::size_t>(m)] = std::move(mk);
                }
            }
            const auto* mask_ptr = masks.empty() ? nullptr : &masks;
            const auto* w_ptr = example_weights ? &wb : nullptr;
            const auto* t_ptr = cfg.use_manifold ? &tb : nullptr;

            objectives::BatchValue val;
            switch (cfg.method) {
                case Method::NCL:
                    val = objectives::ncl_batch_grads(res.members, Xb, yb, cfg.lambda,
                                                      grads, mask_ptr);
                    break;
                case Method::ACE:
                    val = objectives::ace_batch_grads(res.members, Xb, yb, cfg.lambda,
                                                      grads, mask_ptr);
                    break;
                default:
                    val = objectives::lit_batch_grads(res.members, Xb, yb, pcfg, grads,
                                                      t_ptr, mask_ptr, w_ptr);
                    break;
            }
            if (!std::isfinite(val.total)) throw DivergenceError(epoch);

            if (cfg.l2_penalty > 0.0) {
                for (int m = 0; m < M; ++m) {
                    auto& gm = grads[static_cast<std::size_t>(m)];
                    const auto& pm = res.members[static_cast<std::size_t>(m)];
                    gm.W1 += 2.0 * cfg.l2_penalty * pm.W1;
                    gm.w2 += 2.0 * cfg.l2_penalty * pm.w2;
                    val.total += cfg.l2_penalty *
                                 (pm.W1.squaredNorm() + pm.w2.squaredNorm());
                }
            }
            for (int m = 0; m < M; ++m) {
                auto mi = static_cast<std::size_t>(m);
                Eigen::VectorXd g = flatten_grads(grads[mi]);
                adam_step(flat[mi], g, adam[mi], hp);
                unflatten(flat[mi], res.members[mi]);
            }
            double frac = static_cast<double>(B) / static_cast<double>(n);
            ep_loss += val.total * frac;
            ep_nll += val.nll * frac;
            ep_pen += val.penalty * frac;
        }
        res.log.push_back({epoch, ep_loss, ep_nll, ep_pen});
    }
    return res;
}

Eigen::VectorXd uniform_weights(int m) {
    return Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
}

}  // namespace

// --- trainers ----------------------------------------------------------------

TrainedEnsemble train_joint(const EnsembleConfig& cfg, const data::Dataset& train,
                            const data::Dataset& /*valid*/) {
    if (!method_penalized(cfg.method))
        throw std::invalid_argument("train_joint: method has no joint objective");
    if (cfg.method != Method::LIT && cfg.size < 2)
        throw std::invalid_argument("train_joint: " + method_name(cfg.method) +
                                    " needs at least 2 members");
    if (cfg.use_manifold && cfg.method != Method::LIT)
        throw std::invalid_argument("train_joint: manifold penalty is LIT-only");
    std::vector<std::uint64_t> seeds;
    for (int m = 0; m < cfg.size; ++m)
        seeds.push_back(rng::mix(cfg.seed, static_cast<std::uint64_t>(1000 + m)));
    auto core = train_core(cfg, seeds, train, nullptr);
    TrainedEnsemble e;
    e.members = std::move(core.members);
    e.training_log = std::move(core.log);
    e.member_weights = uniform_weights(cfg.size);
    e.config = cfg;
    return e;
}

TrainedEnsemble train_independent(const EnsembleConfig& cfg, const data::Dataset& train,
                                  const data::Dataset& /*valid*/) {
    if (cfg.method != Method::RRs && cfg.method != Method::Bag)
        throw std::invalid_argument("train_independent: method must be RRs or Bag");
    TrainedEnsemble e;
    e.config = cfg;
    e.member_weights = uniform_weights(cfg.size);
    if (cfg.method == Method::RRs) {
        // Independent members share the minibatch loop; with no coupling term
        // the joint pass decomposes exactly into per-member training.
        std::vector<std::uint64_t> seeds;
        for (int m = 0; m < cfg.size; ++m)
            seeds.push_back(rng::mix(cfg.seed, static_cast<std::uint64_t>(1000 + m)));
        auto core = train_core(cfg, seeds, train, nullptr);
        e.members = std::move(core.members);
        e.training_log = std::move(core.log);
        return e;
    }
    // Bag: one seeded bootstrap resample per member.
    const Eigen::Index n = train.n();
    for (int m = 0; m < cfg.size; ++m) {
        data::Dataset boot;
        boot.feature_names = train.feature_names;
        boot.X.resize(n, train.dim());
        boot.y.resize(n);
        rng::Rng resample_rng(rng::mix(cfg.seed, static_cast<std::uint64_t>(2000 + m)));
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index src = cfg.bag_identity_resample
                                   ? i
                                   : static_cast<Eigen::Index>(
                                         resample_rng.integer(static_cast<std::uint64_t>(n)));
            boot.X.row(i) = train.X.row(src);
            boot.y(i) = train.y(src);
            if (train.has_tangents())
                boot.tangents.push_back(train.tangents[static_cast<std::size_t>(src)]);
        }
        std::vector<std::uint64_t> seeds{rng::mix(cfg.seed, static_cast<std::uint64_t>(1000 + m))};
        auto core = train_core(cfg, seeds, boot, nullptr);
        e.members.push_back(std::move(core.members[0]));
        for (auto& rec : core.log) e.training_log.push_back(rec);
    }
    return e;
}

TrainedEnsemble train_adaboost(const EnsembleConfig& cfg, const data::Dataset& train,
                               const data::Dataset& /*valid*/) {
    if (cfg.method != Method::Ada)
        throw std::invalid_argument("train_adaboost: method must be Ada");
    const Eigen::Index n = train.n();
    if (n == 0) throw std::invalid_argument("train_adaboost: empty training set");
    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));

    TrainedEnsemble e;
    e.config = cfg;
    std::vector<double> alphas;
    const double alpha_cap = std::log(1e6);

    for (int t = 0; t < cfg.size; ++t) {
        EnsembleConfig round_cfg = cfg;
        round_cfg.size = 1;
        round_cfg.seed = rng::mix(cfg.seed, static_cast<std::uint64_t>(3000 + t));
        std::vector<std::uint64_t> seeds{rng::mix(round_cfg.seed, 1000)};
        auto core = train_core(round_cfg, seeds, train, &w);
        const auto& member = core.members[0];
        for (auto& rec : core.log) e.training_log.push_back(rec);

        double err = 0.0;
        Eigen::VectorXd wrong(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            int pred = models::predict_proba(member, train.X.row(i).transpose()) >= 0.5 ? 1 : 0;
            wrong(i) = pred == static_cast<int>(train.y(i)) ? 0.0 : 1.0;
            err += w(i) * wrong(i);
        }
        e.members.push_back(member);
        if (err <= 0.0) {
            alphas.push_back(alpha_cap);  // perfect round: cap the vote, stop early
            break;
        }
        if (err >= 0.5) {
            alphas.push_back(0.0);  // no better than chance: zero vote, reset weights
            w.setConstant(1.0 / static_cast<double>(n));
            continue;
        }
        double alpha = std::min(std::log((1.0 - err) / err), alpha_cap);
        alphas.push_back(alpha);
        for (Eigen::Index i = 0; i < n; ++i) w(i) *= std::exp(alpha * wrong(i));
        w /= w.sum();
    }
    double asum = std::accumulate(alphas.begin(), alphas.end(), 0.0);
    if (asum > 0.0) {
        e.member_weights.resize(static_cast<Eigen::Index>(alphas.size()));
        for (std::size_t i = 0; i < alphas.size(); ++i)
            e.member_weights(static_cast<Eigen::Index>(i)) = alphas[i] / asum;
    } else {
        e.member_weights = uniform_weights(static_cast<int>(e.members.size()));
    }
    return e;
}

TrainedEnsemble train(const EnsembleConfig& cfg, const data::Dataset& tr,
                      const data::Dataset& valid) {
    switch (cfg.method) {
        case Method::RRs:
        case Method::Bag:
            return train_independent(cfg, tr, valid);
        case Method::Ada:
            return train_adaboost(cfg, tr, valid);
        default:
            return train_joint(cfg, tr, valid);
    }
}

// --- serialization --------------------------------------------------------------

void save_ensemble(const TrainedEnsemble& e, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json j;
    j["method"] = method_name(e.config.method);
    j["size"] = static_cast<int>(e.members.size());
    if (method_penalized(e.config.method)) j["lambda"] = e.config.lambda;
    j["epochs"] = e.config.epochs;
    j["batch_size"] = e.config.batch_size;
    j["learning_rate"] = e.config.learning_rate;
    j["dropout_rate"] = e.config.dropout_rate;
    j["l2_penalty"] = e.config.l2_penalty;
    j["seed"] = e.config.seed;
    j["hidden"] = static_cast<long>(e.config.hidden);
    j["activation"] = models::activation_name(e.config.activation);
    j["denom_epsilon"] = e.config.denom_epsilon;
    j["use_manifold"] = e.config.use_manifold;
    std::vector<double> mw(e.member_weights.data(),
                           e.member_weights.data() + e.member_weights.size());
    j["member_weights"] = mw;
    nlohmann::json logj = nlohmann::json::array();
    for (const auto& rec : e.training_log)
        logj.push_back({{"epoch", rec.epoch},
                        {"loss", rec.loss},
                        {"nll", rec.nll},
                        {"penalty", rec.penalty}});
    j["training_log"] = logj;
    std::ofstream out(fs::path(dir) / "ensemble.json");
    if (!out) throw std::runtime_error("save_ensemble: cannot write to " + dir);
    out << j.dump(2) << "\n";
    for (std::size_t m = 0; m < e.members.size(); ++m)
        models::save_file(e.members[m],
                          (fs::path(dir) / ("member_" + std::to_string(m) + ".txt")).string());
}

TrainedEnsemble load_ensemble(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "ensemble.json");
    if (!in) throw std::runtime_error("load_ensemble: cannot open " + dir + "/ensemble.json");
    nlohmann::json j;
    in >> j;
    TrainedEnsemble e;
    e.config.method = method_from_name(j.at("method").get<std::string>());
    int size = j.at("size").get<int>();
    e.config.size = size;
    if (j.contains("lambda") && !j["lambda"].is_null())
        e.config.lambda = j["lambda"].get<double>();
    e.config.epochs = j.at("epochs").get<int>();
    e.config.batch_size = j.at("batch_size").get<int>();
    e.config.learning_rate = j.at("learning_rate").get<double>();
    e.config.dropout_rate = j.at("dropout_rate").get<double>();
    e.config.l2_penalty = j.at("l2_penalty").get<double>();
    e.config.seed = j.at("seed").get<std::uint64_t>();
    e.config.hidden = j.at("hidden").get<long>();
    e.config.activation = models::activation_from_name(j.at("activation").get<std::string>());
    e.config.denom_epsilon = j.at("denom_epsilon").get<double>();
    e.config.use_manifold = j.at("use_manifold").get<bool>();
    auto mw = j.at("member_weights").get<std::vector<double>>();
    e.member_weights.resize(static_cast<Eigen::Index>(mw.size()));
    for (std::size_t i = 0; i < mw.size(); ++i)
        e.member_weights(static_cast<Eigen::Index>(i)) = mw[i];
    if (j.contains("training_log"))
        for (const auto& rec : j["training_log"])
            e.training_log.push_back({rec.at("epoch").get<int>(), rec.at("loss").get<double>(),
                                      rec.at("nll").get<double>(),
                                      rec.at("penalty").get<double>()});
    for (int m = 0; m < size; ++m) {
        auto path = fs::path(dir) / ("member_" + std::to_string(m) + ".txt");
        if (!fs::exists(path)) break;  // early-stopped Ada may have fewer members
        e.members.push_back(models::load_file(path.string()));
    }
    if (e.members.empty()) throw std::runtime_error("load_ensemble: no member files in " + dir);
    if (e.member_weights.size() != static_cast<Eigen::Index>(e.members.size()))
        throw std::runtime_error("load_ensemble: member/weight count mismatch in " + dir);
    return e;
}

// --- hyperparameter grid --------------------------------------------------------

std::vector<double> log_lambda_grid(int count, double lo, double hi) {
    if (count < 2 || lo <= 0.0 || hi <= lo)
        throw std::invalid_argument("log_lambda_grid: need count >= 2 and 0 < lo < hi");
    std::vector<double> out(static_cast<std::size_t>(count));
    double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < count; ++i)
        out[static_cast<std::size_t>(i)] =
            std::exp(llo + (lhi - llo) * static_cast<double>(i) / (count - 1));
    out.front() = lo;  // exact endpoints
    out.back() = hi;
    return out;
}

namespace {

struct GridCell {
    Method method;
    int size;
    std::optional<double> lambda;
    int restart;
};

struct CellOutcome {
    std::vector<eval::MetricsRecord> records;
    std::string failure;  // empty on success
    bool ran = false;
};

std::string cell_key(const GridCell& c) {
    std::ostringstream os;
    os << method_name(c.method) << " size=" << c.size;
    if (c.lambda) os << " lambda=" << *c.lambda;
    os << " restart=" << c.restart;
    return os.str();
}

std::uint64_t cell_seed(std::uint64_t base, const GridCell& c) {
    std::uint64_t s = rng::mix(base, static_cast<std::uint64_t>(c.method) + 17);
    s = rng::mix(s, static_cast<std::uint64_t>(c.size));
    if (c.lambda) {
        std::uint64_t bits;
        double l = *c.lambda;
        static_assert(sizeof(bits) == sizeof(l));
        std::memcpy(&bits, &l, sizeof(bits));
        s = rng::mix(s, bits);
    }
    return rng::mix(s, static_cast<std::uint64_t>(c.restart) + 1);
}

struct Stats {
    std::optional<double> mean, sd;
    int count = 0;
};

Stats stats_of(const std::vector<std::optional<double>>& xs) {
    Stats st;
    double sum = 0.0;
    for (const auto& x : xs)
        if (x) {
            sum += *x;
            ++st.count;
        }
    if (st.count == 0) return st;
    double mean = sum / st.count;
    st.mean = mean;
    if (st.count > 1) {
        double ss = 0.0;
        for (const auto& x : xs)
            if (x) ss += (*x - mean) * (*x - mean);
        st.sd = std::sqrt(ss / (st.count - 1));
    }
    return st;
}

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os.precision(6);
    os << *v;
    return os.str();
}

}  // namespace

GridResult grid_search(
    const data::Dataset& full, const GridSpec& spec,
    const std::function<bool(const std::string&, int, double, int)>& skip,
    const std::vector<eval::MetricsRecord>* existing) {
    if (spec.methods.empty()) throw std::invalid_argument("grid_search: no methods");
    if (spec.restarts < 1) throw std::invalid_argument("grid_search: restarts must be >= 1");
    for (Method m : spec.methods)
        if (method_penalized(m) && spec.lambda_grid.empty())
            throw std::invalid_argument("grid_search: " + method_name(m) +
                                        " requires a lambda grid");

    // One split per restart, shared by every method so comparisons are paired.
    std::vector<data::SplitResult> splits;
    splits.reserve(static_cast<std::size_t>(spec.restarts));
    for (int r = 0; r < spec.restarts; ++r) {
        data::SplitSpec sp = spec.split_base;
        sp.seed = rng::mix(spec.split_base.seed, static_cast<std::uint64_t>(r));
        splits.push_back(data::split(full, sp));
    }

    std::vector<GridCell> cells;
    for (Method m : spec.methods)
        for (int size : spec.sizes) {
            std::vector<std::optional<double>> lambdas;
            if (method_penalized(m))
                for (double l : spec.lambda_grid) lambdas.emplace_back(l);
            else
                lambdas.emplace_back(std::nullopt);
            for (const auto& l : lambdas)
                for (int r = 0; r < spec.restarts; ++r)
                    cells.push_back({m, size, l, r});
        }

    std::vector<CellOutcome> outcomes(cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            const GridCell& c = cells[i];
            CellOutcome& out = outcomes[i];
            if (skip && skip(method_name(c.method), c.size,
                             c.lambda ? *c.lambda : std::numeric_limits<double>::quiet_NaN(),
                             c.restart))
                continue;
            out.ran = true;
            EnsembleConfig cfg = spec.base;
            cfg.method = c.method;
            cfg.size = c.size;
            cfg.lambda = c.lambda ? *c.lambda : 0.0;
            cfg.seed = cell_seed(spec.base.seed, c);
            const auto& sr = splits[static_cast<std::size_t>(c.restart)];
            auto t0 = std::chrono::steady_clock::now();
            try {
                TrainedEnsemble e = train(cfg, sr.train, sr.valid);
                double secs = std::chrono::duration<double>(
                                  std::chrono::steady_clock::now() - t0)
                                  .count();
                for (const char* which : {"valid", "test"}) {
                    const data::Dataset& ds =
                        std::string(which) == "valid" ? sr.valid : sr.test;
                    eval::MetricsRecord rec = eval::build_report(
                        e.members, e.member_weights, ds.X, ds.y, cfg.denom_epsilon);
                    rec.method = method_name(c.method);
                    rec.dataset = spec.dataset_name;
                    rec.split = which;
                    rec.size = c.size;
                    rec.lambda = c.lambda;
                    rec.restart = c.restart;
                    rec.wall_time_s = secs;
                    out.records.push_back(std::move(rec));
                }
            } catch (const std::exception& ex) {
                out.failure = cell_key(c) + ": " + ex.what();
            }
        }
    };
    int nthreads = std::max(1, spec.threads);
    if (nthreads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    GridResult result;
    if (existing)
        result.records.insert(result.records.end(), existing->begin(), existing->end());
    for (const auto& out : outcomes) {
        for (const auto& rec : out.records) result.records.push_back(rec);
        if (!out.failure.empty()) result.failures.push_back(out.failure);
    }

    // Selection: per method, the (size, lambda) cell with the best mean
    // validation AUC across restarts; ties go to the earlier cell.
    for (Method m : spec.methods) {
        const std::string mname = method_name(m);
        struct CellAgg {
            int size;
            std::optional<double> lambda;
        };
        std::vector<CellAgg> agg_cells;
        for (int size : spec.sizes) {
            if (method_penalized(m))
                for (double l : spec.lambda_grid) agg_cells.push_back({size, l});
            else
                agg_cells.push_back({size, std::nullopt});
        }
        auto match = [&](const eval::MetricsRecord& r, const CellAgg& c) {
            if (r.method != mname || r.size != c.size) return false;
            if (c.lambda.has_value() != r.lambda.has_value()) return false;
            return !c.lambda || *c.lambda == *r.lambda;
        };
        std::optional<std::size_t> best;
        std::optional<double> best_mean;
        std::vector<Stats> valid_stats(agg_cells.size());
        for (std::size_t ci = 0; ci < agg_cells.size(); ++ci) {
            std::vector<std::optional<double>> aucs;
            for (const auto& r : result.records)
                if (r.split == "valid" && match(r, agg_cells[ci])) aucs.push_back(r.auc);
            valid_stats[ci] = stats_of(aucs);
            if (valid_stats[ci].mean &&
                (!best_mean || *valid_stats[ci].mean > *best_mean)) {
                best = ci;
                best_mean = valid_stats[ci].mean;
            }
        }
        if (!best) continue;  // every run of this method failed
        const CellAgg& chosen = agg_cells[*best];
        MethodSelection sel;
        sel.method = mname;
        sel.size = chosen.size;
        sel.lambda = chosen.lambda;
        sel.valid_auc_mean = valid_stats[*best].mean;
        std::vector<std::optional<double>> auc_v, acc_v, rho_v, q_v, kap_v, cos_v;
        for (const auto& r : result.records)
            if (r.split == "test" && match(r, chosen)) {
                auc_v.push_back(r.auc);
                acc_v.push_back(r.accuracy);
                rho_v.push_back(r.rho_av);
                q_v.push_back(r.q_av);
                kap_v.push_back(r.kappa);
                cos_v.push_back(r.cos2);
            }
        Stats s_auc = stats_of(auc_v);
        sel.runs = static_cast<int>(auc_v.size());
        sel.test_auc_mean = s_auc.mean;
        sel.test_auc_sd = s_auc.sd;
        sel.test_acc_mean = stats_of(acc_v).mean;
        Stats s_rho = stats_of(rho_v);
        sel.rho_av_mean = s_rho.mean;
        sel.rho_av_sd = s_rho.sd;
        sel.q_av_mean = stats_of(q_v).mean;
        sel.kappa_mean = stats_of(kap_v).mean;
        Stats s_cos = stats_of(cos_v);
        sel.cos2_mean = s_cos.mean;
        sel.cos2_sd = s_cos.sd;
        result.selections.push_back(std::move(sel));
    }
    return result;
}

std::string selection_csv(const std::vector<MethodSelection>& selections,
                          const std::string& dataset, const std::string& split_kind) {
    std::ostringstream os;
    os << "dataset,split,method,size,lambda,runs,valid_auc_mean,test_auc_mean,"
          "test_auc_sd,test_acc_mean,rho_av_mean,rho_av_sd,q_av_mean,kappa_mean,"
          "cos2_mean,cos2_sd\n";
    for (const auto& s : selections) {
        os << dataset << ',' << split_kind << ',' << s.method << ',' << s.size << ','
           << fmt_opt(s.lambda) << ',' << s.runs << ',' << fmt_opt(s.valid_auc_mean) << ','
           << fmt_opt(s.test_auc_mean) << ',' << fmt_opt(s.test_auc_sd) << ','
           << fmt_opt(s.test_acc_mean) << ',' << fmt_opt(s.rho_av_mean) << ','
           << fmt_opt(s.rho_av_sd) << ',' << fmt_opt(s.q_av_mean) << ','
           << fmt_opt(s.kappa_mean) << ',' << fmt_opt(s.cos2_mean) << ','
           << fmt_opt(s.cos2_sd) << '\n';
    }
    return os.str();
}

}  // namespace lit::training
