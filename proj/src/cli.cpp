#include "lit/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lit/config.hpp"
#include "lit/data.hpp"
#include "lit/eval.hpp"
#include "lit/models.hpp"
#include "lit/rng.hpp"
#include "lit/training.hpp"

namespace lit::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

void write_text(const std::string& path, const std::string& text) {
    fs::path p(path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
}

// --- gen-data -----------------------------------------------------------------

int cmd_gen_data(const std::string& variant, long n, std::uint64_t seed, double noise,
                 const std::string& out_path) {
    if (variant == "manifold3d") {
        data::Dataset d = data::gen_manifold_3d(n, seed);
        std::ostringstream os;
        os << std::setprecision(17);
        os << "x0,x1,x2,label,u0,u1\n";
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            os << d.X(i, 0) << ',' << d.X(i, 1) << ',' << d.X(i, 2) << ','
               << static_cast<int>(d.y(i)) << ',' << d.chart(i, 0) << ',' << d.chart(i, 1)
               << '\n';
        }
        write_text(out_path, os.str());

        // Companion file: the embedding map, so tangents can be rebuilt at any
        // chart coordinate without re-running generation.
        data::EmbedMap map = data::make_embed_map(rng::mix(seed, 0x3d));
        nlohmann::json j;
        auto mat = [](const Eigen::MatrixXd& m) {
            std::vector<std::vector<double>> rows;
            for (Eigen::Index r = 0; r < m.rows(); ++r) {
                std::vector<double> row;
                for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
                rows.push_back(std::move(row));
            }
            return rows;
        };
        j["W1"] = mat(map.W1);
        j["b1"] = std::vector<double>(map.b1.data(), map.b1.data() + map.b1.size());
        j["W2"] = mat(map.W2);
        j["b2"] = std::vector<double>(map.b2.data(), map.b2.data() + map.b2.size());
        j["activation"] = "softplus";
        fs::path companion = fs::path(out_path);
        companion.replace_extension(".map.json");
        write_text(companion.string(), j.dump(2) + "\n");
        std::cout << "wrote " << out_path << " and " << companion.string() << "\n";
        return kExitOk;
    }
    data::Dataset d =
        data::gen_2d_gaps(data::gaps_variant_from_name(variant), n, noise, seed);
    fs::path p(out_path);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    data::save_csv(d, out_path);
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

// --- train --------------------------------------------------------------------

std::string training_log_csv(const std::vector<training::EpochLog>& log) {
    std::ostringstream os;
    os << std::setprecision(17) << "epoch,loss,nll,penalty\n";
    for (const auto& rec : log)
        os << rec.epoch << ',' << rec.loss << ',' << rec.nll << ',' << rec.penalty << '\n';
    return os.str();
}

eval::MetricsRecord report_for(const training::TrainedEnsemble& e, const data::Dataset& ds,
                               const std::string& dataset_name, const std::string& split,
                               double secs) {
    eval::MetricsRecord rec = eval::build_report(e.members, e.member_weights, ds.X, ds.y,
                                                 e.config.denom_epsilon);
    rec.method = training::method_name(e.config.method);
    rec.dataset = dataset_name;
    rec.split = split;
    if (training::method_penalized(e.config.method)) rec.lambda = e.config.lambda;
    rec.wall_time_s = secs;
    return rec;
}

int cmd_train(const std::string& config_path, const std::string& out_override) {
    config::RunConfig rc = config::load_run_config(config_path, /*need_train=*/true,
                                                   /*need_grid=*/false);
    std::string out_dir = out_override.empty() ? rc.out_dir : out_override;
    if (out_dir.empty())
        throw config::ConfigError("no output directory (set out.dir or pass --out)");

    data::Dataset full = config::load_dataset(rc.data);
    data::SplitResult sr = data::split(full, rc.split);
    auto t0 = std::chrono::steady_clock::now();
    training::TrainedEnsemble e = training::train(rc.train, sr.train, sr.valid);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    fs::create_directories(out_dir);
    training::save_ensemble(e, (fs::path(out_dir) / "ensemble").string());
    write_text((fs::path(out_dir) / "training_log.csv").string(),
               training_log_csv(e.training_log));
    std::ostringstream metrics;
    metrics << report_for(e, sr.valid, rc.data.name, "valid", secs).to_json_line() << "\n"
            << report_for(e, sr.test, rc.data.name, "test", secs).to_json_line() << "\n";
    write_text((fs::path(out_dir) / "metrics.jsonl").string(), metrics.str());
    std::cout << "wrote " << out_dir << "/{ensemble,training_log.csv,metrics.jsonl}\n";
    return kExitOk;
}

// --- grid ---------------------------------------------------------------------

std::string lambda_token(const std::optional<double>& l) {
    if (!l) return "-";
    std::ostringstream os;
    os << std::setprecision(17) << *l;
    return os.str();
}

int cmd_grid(const std::string& config_path, const std::string& out_override) {
    config::RunConfig rc = config::load_run_config(config_path, /*need_train=*/false,
                                                   /*need_grid=*/true);
    std::string out_dir = out_override.empty() ? rc.out_dir : out_override;
    if (out_dir.empty())
        throw config::ConfigError("no output directory (set out.dir or pass --out)");
    fs::create_directories(out_dir);
    fs::path results_path = fs::path(out_dir) / "results.jsonl";

    // Resume: a run counts as done when its validation record exists.
    std::vector<eval::MetricsRecord> existing;
    std::set<std::string> done;
    if (fs::exists(results_path)) {
        std::ifstream in(results_path);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            eval::MetricsRecord r = eval::MetricsRecord::from_json_line(line);
            if (r.split == "valid")
                done.insert(r.method + "|" + std::to_string(r.size) + "|" +
                            lambda_token(r.lambda) + "|" + std::to_string(r.restart));
            existing.push_back(std::move(r));
        }
    }
    auto skip = [&done](const std::string& method, int size, double lambda, int restart) {
        std::optional<double> l;
        if (std::isfinite(lambda)) l = lambda;
        return done.count(method + "|" + std::to_string(size) + "|" + lambda_token(l) + "|" +
                          std::to_string(restart)) > 0;
    };

    data::Dataset full = config::load_dataset(rc.data);
    training::GridSpec spec;
    spec.methods = rc.grid.methods;
    spec.sizes = rc.grid.sizes;
    spec.lambda_grid = rc.grid.lambdas;
    spec.restarts = rc.grid.restarts;
    spec.threads = rc.grid.threads;
    spec.base = rc.train;
    spec.split_base = rc.split;
    spec.dataset_name = rc.data.name;

    training::GridResult result = training::grid_search(full, spec, skip, &existing);

    // Append only the newly produced records.
    std::ofstream out(results_path, std::ios::app);
    if (!out) throw std::runtime_error("cannot open for writing: " + results_path.string());
    long appended = 0;
    for (std::size_t i = existing.size(); i < result.records.size(); ++i) {
        out << result.records[i].to_json_line() << "\n";
        ++appended;
    }
    out.close();

    std::string split_kind =
        rc.split.kind == data::SplitKind::random ? "random" : "extrapolation";
    write_text((fs::path(out_dir) / "selection.csv").string(),
               training::selection_csv(result.selections, rc.data.name, split_kind));

    std::cout << "appended " << appended << " records to " << results_path.string()
              << "; selection in " << out_dir << "/selection.csv\n";
    if (!result.failures.empty()) {
        std::cerr << result.failures.size() << " run(s) failed:\n";
        for (const auto& f : result.failures) std::cerr << "  " << f << "\n";
        if (result.records.empty()) return kExitRun;
    }
    return kExitOk;
}

// --- eval ---------------------------------------------------------------------

int cmd_eval(const std::string& config_path, const std::string& model_dir,
             const std::string& out_path) {
    config::RunConfig rc = config::load_run_config(config_path, /*need_train=*/false,
                                                   /*need_grid=*/false);
    training::TrainedEnsemble e = training::load_ensemble(model_dir);
    data::Dataset full = config::load_dataset(rc.data);
    data::SplitResult sr = data::split(full, rc.split);
    std::ostringstream os;
    os << report_for(e, sr.valid, rc.data.name, "valid", 0.0).to_json_line() << "\n"
       << report_for(e, sr.test, rc.data.name, "test", 0.0).to_json_line() << "\n";
    if (out_path.empty())
        std::cout << os.str();
    else {
        write_text(out_path, os.str());
        std::cout << "wrote " << out_path << "\n";
    }
    return kExitOk;
}

// --- export-boundary ------------------------------------------------------------

int cmd_export_boundary(const std::string& model_dir, double xmin, double xmax, double ymin,
                        double ymax, long resolution, const std::string& out_path) {
    training::TrainedEnsemble e = training::load_ensemble(model_dir);
    if (e.members.empty() || e.members[0].dim() != 2)
        throw std::runtime_error("export-boundary requires a 2-feature model (got " +
                                 std::to_string(e.members.empty() ? 0 : e.members[0].dim()) +
                                 ")");
    if (resolution < 2) throw config::ConfigError("--resolution must be >= 2");
    std::ostringstream os;
    os << std::setprecision(10) << "x1,x2";
    for (std::size_t m = 0; m < e.members.size(); ++m) os << ",logit_" << m;
    os << ",ensemble_prob\n";
    for (long i = 0; i < resolution; ++i) {
        double x1 = xmin + (xmax - xmin) * static_cast<double>(i) / (resolution - 1);
        for (long j = 0; j < resolution; ++j) {
            double x2 = ymin + (ymax - ymin) * static_cast<double>(j) / (resolution - 1);
            Eigen::Vector2d x(x1, x2);
            os << x1 << ',' << x2;
            for (const auto& mem : e.members) os << ',' << models::forward(mem, x);
            os << ',' << eval::ensemble_predict(e.members, e.member_weights, x) << '\n';
        }
    }
    write_text(out_path, os.str());
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

// --- export-gradients -----------------------------------------------------------

int cmd_export_gradients(const std::string& model_dir, const std::string& config_path,
                         const std::string& out_path) {
    training::TrainedEnsemble e = training::load_ensemble(model_dir);
    config::RunConfig rc = config::load_run_config(config_path, /*need_train=*/false,
                                                   /*need_grid=*/false);
    data::Dataset full = config::load_dataset(rc.data);
    data::SplitResult sr = data::split(full, rc.split);
    const data::Dataset& ds = sr.test;
    if (e.members[0].dim() != ds.dim())
        throw std::runtime_error("model dimension " + std::to_string(e.members[0].dim()) +
                                 " does not match dataset dimension " +
                                 std::to_string(ds.dim()));
    const auto M = static_cast<Eigen::Index>(e.members.size());
    std::ostringstream os;
    os << std::setprecision(17) << "example,member,feature,grad,mean_grad\n";
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        Eigen::MatrixXd g(M, ds.dim());
        for (Eigen::Index m = 0; m < M; ++m)
            g.row(m) = models::input_gradient(e.members[static_cast<std::size_t>(m)],
                                              ds.X.row(i).transpose())
                           .transpose();
        Eigen::VectorXd mean = g.colwise().mean();
        for (Eigen::Index m = 0; m < M; ++m)
            for (Eigen::Index f = 0; f < ds.dim(); ++f)
                os << i << ',' << m << ',' << f << ',' << g(m, f) << ',' << mean(f) << '\n';
    }
    write_text(out_path, os.str());
    std::cout << "wrote " << out_path << "\n";
    return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"ensemble training with locally independent input gradients"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset CSV");
    std::string gen_variant;
    long gen_n = 400;
    std::uint64_t gen_seed = 7;
    double gen_noise = 0.25;
    std::string gen_out = "data.csv";
    gen->add_option("--variant", gen_variant, "D1, D2, D3 or manifold3d")->required();
    gen->add_option("-n,--n", gen_n, "number of rows");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--noise", gen_noise, "cluster noise (D1/D2/D3 only)");
    gen->add_option("--out", gen_out, "output CSV path");

    // train
    auto* train = app.add_subcommand("train", "train one ensemble from a config file");
    std::string train_config, train_out;
    train->add_option("--config", train_config, "run config file")->required();
    train->add_option("--out", train_out, "output directory (overrides out.dir)");

    // grid
    auto* grid = app.add_subcommand("grid", "hyperparameter grid search (resumable)");
    std::string grid_config, grid_out;
    grid->add_option("--config", grid_config, "grid config file")->required();
    grid->add_option("--out", grid_out, "output directory (overrides out.dir)");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a saved ensemble on a configured split");
    std::string eval_config, eval_model, eval_out;
    ev->add_option("--config", eval_config, "dataset/split config file")->required();
    ev->add_option("--model", eval_model, "ensemble directory")->required();
    ev->add_option("--out", eval_out, "output JSON-lines path (default: stdout)");

    // export-boundary
    auto* eb = app.add_subcommand("export-boundary",
                                  "sample member logits and ensemble probability on a 2D grid");
    std::string eb_model, eb_out = "boundary.csv";
    double eb_xmin = -2, eb_xmax = 2, eb_ymin = -2, eb_ymax = 2;
    long eb_res = 100;
    eb->add_option("--model", eb_model, "ensemble directory")->required();
    eb->add_option("--xmin", eb_xmin);
    eb->add_option("--xmax", eb_xmax);
    eb->add_option("--ymin", eb_ymin);
    eb->add_option("--ymax", eb_ymax);
    eb->add_option("--resolution", eb_res, "grid points per axis");
    eb->add_option("--out", eb_out, "output CSV path");

    // export-gradients
    auto* eg = app.add_subcommand("export-gradients",
                                  "dump per-(example, member, feature) input gradients");
    std::string eg_model, eg_config, eg_out = "gradients.csv";
    eg->add_option("--model", eg_model, "ensemble directory")->required();
    eg->add_option("--config", eg_config, "dataset/split config file")->required();
    eg->add_option("--out", eg_out, "output CSV path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_variant, gen_n, gen_seed, gen_noise, gen_out);
        if (train->parsed()) return cmd_train(train_config, train_out);
        if (grid->parsed()) return cmd_grid(grid_config, grid_out);
        if (ev->parsed()) return cmd_eval(eval_config, eval_model, eval_out);
        if (eb->parsed())
            return cmd_export_boundary(eb_model, eb_xmin, eb_xmax, eb_ymin, eb_ymax, eb_res,
                                       eb_out);
        if (eg->parsed()) return cmd_export_gradients(eg_model, eg_config, eg_out);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRun;
    }
    return kExitConfig;
}

}  // namespace lit::cli
