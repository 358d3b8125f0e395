#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include "lit/cli.hpp"
#include "lit/config.hpp"
#include "lit/eval.hpp"

using namespace lit;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << content;
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(std::vector<std::string> args) {
    std::vector<const char*> argv{"lit"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

const char* kTrainConfig =
    "data.source = D1\n"
    "data.n = 120\n"
    "data.seed = 7\n"
    "split.seed = 1\n"
    "train.method = LIT\n"
    "train.size = 2\n"
    "train.lambda = 0.1\n"
    "train.epochs = 4\n"
    "train.hidden = 8\n";

}  // namespace

TEST_CASE("config parsing accepts a valid file and fills defaults") {
    auto path = write_temp("lit_cfg_ok.cfg", kTrainConfig);
    auto rc = config::load_run_config(path, true, false);
    CHECK(rc.train.method == training::Method::LIT);
    CHECK(rc.train.lambda == 0.1);
    CHECK(rc.train.batch_size == 64);            // default
    CHECK(rc.split.train_fraction == 0.8);       // default
    CHECK(rc.data.name == "D1");
}

TEST_CASE("config parsing rejects unknown keys with line numbers") {
    auto path = write_temp("lit_cfg_unknown.cfg",
                           std::string(kTrainConfig) + "train.lamda = 0.2\n");
    try {
        config::load_run_config(path, true, false);
        FAIL("expected ConfigError");
    } catch (const config::ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("train.lamda") != std::string::npos);
        CHECK(msg.find("line 10") != std::string::npos);
    }
}

TEST_CASE("config parsing rejects lambda for penalty-free methods") {
    std::string cfg =
        "data.source = D1\n"
        "train.method = RRs\n"
        "train.lambda = 0.1\n";
    auto path = write_temp("lit_cfg_rrs_lambda.cfg", cfg);
    CHECK_THROWS_AS(config::load_run_config(path, true, false), config::ConfigError);
}

TEST_CASE("config parsing rejects duplicates, malformed lines, bad values") {
    CHECK_THROWS_AS(config::KvFile::parse_string("a = 1\na = 2\n"), config::ConfigError);
    CHECK_THROWS_AS(config::KvFile::parse_string("just a line\n"), config::ConfigError);
    auto kv = config::KvFile::parse_string("x = abc\n");
    CHECK_THROWS_AS(kv.get_double("x"), config::ConfigError);
    auto kv2 = config::KvFile::parse_string("# comment\n\nb = 2\n");
    CHECK(kv2.get_double("b") == 2.0);
}

TEST_CASE("cli: gen-data is deterministic and byte-identical on re-run") {
    auto out = (fs::temp_directory_path() / "lit_cli_d1.csv").string();
    REQUIRE(run_cli({"gen-data", "--variant", "D1", "-n", "50", "--seed", "7", "--out", out}) ==
            0);
    std::string first = slurp(out);
    REQUIRE(run_cli({"gen-data", "--variant", "D1", "-n", "50", "--seed", "7", "--out", out}) ==
            0);
    CHECK(slurp(out) == first);
    CHECK(first.substr(0, first.find('\n')) == "x0,x1,label");
    CHECK(std::count(first.begin(), first.end(), '\n') == 51);
    // bad variant is a config error
    CHECK(run_cli({"gen-data", "--variant", "D9", "--out", out}) == 2);
}

TEST_CASE("cli: manifold gen-data writes chart columns and a map companion") {
    auto out = (fs::temp_directory_path() / "lit_cli_m3.csv").string();
    REQUIRE(run_cli({"gen-data", "--variant", "manifold3d", "-n", "30", "--seed", "3", "--out",
                     out}) == 0);
    std::string content = slurp(out);
    CHECK(content.substr(0, content.find('\n')) == "x0,x1,x2,label,u0,u1");
    CHECK(fs::exists(fs::path(out).replace_extension(".map.json")));
}

TEST_CASE("cli: train writes artifacts; eval reloads them; exit codes are honored") {
    auto cfg_path = write_temp("lit_cli_train.cfg", kTrainConfig);
    auto out_dir = (fs::temp_directory_path() / "lit_cli_run").string();
    fs::remove_all(out_dir);
    REQUIRE(run_cli({"train", "--config", cfg_path, "--out", out_dir}) == 0);
    CHECK(fs::exists(fs::path(out_dir) / "ensemble" / "ensemble.json"));
    CHECK(fs::exists(fs::path(out_dir) / "ensemble" / "member_1.txt"));
    CHECK(fs::exists(fs::path(out_dir) / "training_log.csv"));

    // metrics round-trip
    std::istringstream metrics(slurp((fs::path(out_dir) / "metrics.jsonl").string()));
    std::string line;
    int lines = 0;
    while (std::getline(metrics, line)) {
        auto rec = eval::MetricsRecord::from_json_line(line);
        CHECK(rec.method == "LIT");
        CHECK((rec.split == "valid" || rec.split == "test"));
        ++lines;
    }
    CHECK(lines == 2);

    auto eval_out = (fs::path(out_dir) / "eval.jsonl").string();
    REQUIRE(run_cli({"eval", "--config", cfg_path, "--model",
                     (fs::path(out_dir) / "ensemble").string(), "--out", eval_out}) == 0);
    std::istringstream ev(slurp(eval_out));
    int ev_lines = 0;
    while (std::getline(ev, line)) {
        auto rec = eval::MetricsRecord::from_json_line(line);
        CHECK(rec.auc.has_value());
        ++ev_lines;
    }
    CHECK(ev_lines == 2);

    // config errors exit 2, run errors exit 3
    auto bad_cfg = write_temp("lit_cli_bad.cfg", "data.source = D1\nnope = 1\n");
    CHECK(run_cli({"train", "--config", bad_cfg, "--out", out_dir}) == 2);
    CHECK(run_cli({"eval", "--config", cfg_path, "--model", "/nonexistent/dir"}) == 3);
}

TEST_CASE("cli: export-boundary and export-gradients schemas") {
    auto cfg_path = write_temp("lit_cli_train2.cfg", kTrainConfig);
    auto out_dir = (fs::temp_directory_path() / "lit_cli_run2").string();
    fs::remove_all(out_dir);
    REQUIRE(run_cli({"train", "--config", cfg_path, "--out", out_dir}) == 0);
    std::string model = (fs::path(out_dir) / "ensemble").string();

    auto bpath = (fs::path(out_dir) / "boundary.csv").string();
    REQUIRE(run_cli({"export-boundary", "--model", model, "--resolution", "20", "--out",
                     bpath}) == 0);
    std::string b = slurp(bpath);
    CHECK(b.substr(0, b.find('\n')) == "x1,x2,logit_0,logit_1,ensemble_prob");
    CHECK(std::count(b.begin(), b.end(), '\n') == 401);  // header + 20^2 rows

    auto gpath = (fs::path(out_dir) / "grads.csv").string();
    REQUIRE(run_cli({"export-gradients", "--model", model, "--config", cfg_path, "--out",
                     gpath}) == 0);
    std::istringstream gs(slurp(gpath));
    std::string line;
    std::getline(gs, line);
    CHECK(line == "example,member,feature,grad,mean_grad");
    // mean_grad column equals the member average for each (example, feature)
    std::map<std::pair<long, long>, std::pair<double, double>> sums;  // (sum, mean_col)
    long rows = 0;
    while (std::getline(gs, line)) {
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream ls(line);
        long ex, mem, feat;
        double grad, mean;
        ls >> ex >> mem >> feat >> grad >> mean;
        auto& s = sums[{ex, feat}];
        s.first += grad;
        s.second = mean;
        ++rows;
    }
    CHECK(rows % (2 * 2) == 0);  // M=2 members, D=2 features
    for (const auto& [key, s] : sums)
        CHECK(std::abs(s.first / 2.0 - s.second) < 1e-12);
}

TEST_CASE("cli: grid runs, then resumes without re-executing") {
    std::string cfg =
        "data.source = D1\n"
        "data.n = 120\n"
        "split.seed = 1\n"
        "train.epochs = 3\n"
        "train.hidden = 8\n"
        "grid.methods = RRs,LIT\n"
        "grid.sizes = 2\n"
        "grid.lambdas = 0.01,0.1\n"
        "grid.restarts = 2\n";
    auto cfg_path = write_temp("lit_cli_grid.cfg", cfg);
    auto out_dir = (fs::temp_directory_path() / "lit_cli_grid").string();
    fs::remove_all(out_dir);
    REQUIRE(run_cli({"grid", "--config", cfg_path, "--out", out_dir}) == 0);
    std::string results = slurp((fs::path(out_dir) / "results.jsonl").string());
    long n1 = std::count(results.begin(), results.end(), '\n');
    CHECK(n1 == 12);  // (2 RRs runs + 4 LIT runs) x 2 splits
    CHECK(fs::exists(fs::path(out_dir) / "selection.csv"));

    // rerun: nothing new appended
    REQUIRE(run_cli({"grid", "--config", cfg_path, "--out", out_dir}) == 0);
    std::string again = slurp((fs::path(out_dir) / "results.jsonl").string());
    CHECK(std::count(again.begin(), again.end(), '\n') == n1);

    // drop one run's records: exactly that run is re-executed
    std::istringstream in(again);
    std::ostringstream keep;
    std::string line, dropped_key;
    int dropped = 0;
    while (std::getline(in, line)) {
        auto rec = eval::MetricsRecord::from_json_line(line);
        if (rec.method == "LIT" && rec.restart == 0 && rec.lambda &&
            *rec.lambda == 0.01) {
            ++dropped;
            continue;
        }
        keep << line << "\n";
    }
    CHECK(dropped == 2);
    {
        std::ofstream out((fs::path(out_dir) / "results.jsonl").string());
        out << keep.str();
    }
    REQUIRE(run_cli({"grid", "--config", cfg_path, "--out", out_dir}) == 0);
    std::string after = slurp((fs::path(out_dir) / "results.jsonl").string());
    CHECK(std::count(after.begin(), after.end(), '\n') == n1);
}
