#include "lit/config.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lit::config {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "': expected a number, got '" + v + "'");
    }
}

long parse_long(const std::string& key, const std::string& v, int line) {
    try {
        std::size_t pos = 0;
        long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(line) + ": key '" + key +
                          "': expected an integer, got '" + v + "'");
    }
}

}  // namespace

KvFile KvFile::parse_string(const std::string& text, const std::string& name) {
    KvFile f;
    f.name_ = name;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(name + ":" + std::to_string(lineno) +
                              ": expected 'key = value', got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError(name + ":" + std::to_string(lineno) + ": empty key");
        if (f.entries_.count(key))
            throw ConfigError(name + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' (first at line " + std::to_string(f.entries_[key].line) + ")");
        f.entries_[key] = Entry{value, lineno, false};
    }
    return f;
}

KvFile KvFile::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

bool KvFile::has(const std::string& key) const { return entries_.count(key) > 0; }

const KvFile::Entry& KvFile::require(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end())
        throw ConfigError(name_ + ": missing required key '" + key + "'");
    it->second.used = true;
    return it->second;
}

std::string KvFile::get_string(const std::string& key) { return require(key).value; }

std::string KvFile::get_string(const std::string& key, const std::string& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return it->second.value;
}

long KvFile::get_long(const std::string& key, long fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return parse_long(key, it->second.value, it->second.line);
}

double KvFile::get_double(const std::string& key) {
    const Entry& e = require(key);
    return parse_double(key, e.value, e.line);
}

double KvFile::get_double(const std::string& key, double fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return parse_double(key, it->second.value, it->second.line);
}

bool KvFile::get_bool(const std::string& key, bool fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    std::string v = it->second.value;
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("line " + std::to_string(it->second.line) + ": key '" + key +
                      "': expected a boolean, got '" + it->second.value + "'");
}

std::uint64_t KvFile::get_uint64(const std::string& key, std::uint64_t fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    try {
        std::size_t pos = 0;
        unsigned long long v = std::stoull(it->second.value, &pos);
        if (pos != it->second.value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("line " + std::to_string(it->second.line) + ": key '" + key +
                          "': expected an unsigned integer, got '" + it->second.value + "'");
    }
}

std::vector<std::string> KvFile::get_list(const std::string& key,
                                          const std::vector<std::string>& fallback) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    it->second.used = true;
    return split_commas(it->second.value);
}

int KvFile::line_of(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

void KvFile::reject_unused() const {
    std::vector<std::string> bad;
    for (const auto& [key, e] : entries_)
        if (!e.used) bad.push_back(key + " (line " + std::to_string(e.line) + ")");
    if (!bad.empty()) {
        std::string msg = name_ + ": unknown key";
        if (bad.size() > 1) msg += "s";
        msg += ": ";
        for (std::size_t i = 0; i < bad.size(); ++i) {
            if (i) msg += ", ";
            msg += bad[i];
        }
        throw ConfigError(msg);
    }
}

namespace {

DataConfig read_data(KvFile& kv) {
    DataConfig dc;
    dc.source = kv.get_string("data.source");
    if (dc.source == "D1" || dc.source == "D2" || dc.source == "D3") {
        dc.n = kv.get_long("data.n", 400);
        dc.noise = kv.get_double("data.noise", 0.25);
        dc.seed = kv.get_uint64("data.seed", 7);
        dc.name = kv.get_string("data.name", dc.source);
    } else if (dc.source == "manifold3d") {
        dc.n = kv.get_long("data.n", 400);
        dc.seed = kv.get_uint64("data.seed", 7);
        dc.name = kv.get_string("data.name", dc.source);
    } else if (dc.source == "csv") {
        dc.path = kv.get_string("data.path");
        dc.label_column = kv.get_string("data.label");
        dc.categoricals = kv.get_list("data.categoricals", {});
        std::string stem = std::filesystem::path(dc.path).stem().string();
        dc.name = kv.get_string("data.name", stem);
        if (!std::filesystem::exists(dc.path))
            throw ConfigError("data.path does not exist: " + dc.path);
    } else {
        throw ConfigError("line " + std::to_string(kv.line_of("data.source")) +
                          ": data.source must be one of D1, D2, D3, manifold3d, csv (got '" +
                          dc.source + "')");
    }
    if (dc.n <= 0) throw ConfigError("data.n must be positive");
    return dc;
}

data::SplitSpec read_split(KvFile& kv) {
    data::SplitSpec sp;
    std::string kind = kv.get_string("split.kind", "random");
    if (kind == "random") sp.kind = data::SplitKind::random;
    else if (kind == "extrapolation") sp.kind = data::SplitKind::extrapolation;
    else
        throw ConfigError("split.kind must be 'random' or 'extrapolation' (got '" + kind + "')");
    sp.train_fraction = kv.get_double("split.train_fraction", 0.8);
    sp.valid_fraction_of_train = kv.get_double("split.valid_fraction", 0.2);
    sp.seed = kv.get_uint64("split.seed", 0);
    if (sp.train_fraction <= 0.0 || sp.train_fraction >= 1.0)
        throw ConfigError("split.train_fraction must lie in (0, 1)");
    if (sp.valid_fraction_of_train < 0.0 || sp.valid_fraction_of_train >= 1.0)
        throw ConfigError("split.valid_fraction must lie in [0, 1)");
    return sp;
}

// Shared optimizer/regularization keys; method/size/lambda handled by caller.
void read_train_common(KvFile& kv, training::EnsembleConfig& cfg) {
    cfg.epochs = static_cast<int>(kv.get_long("train.epochs", cfg.epochs));
    cfg.batch_size = static_cast<int>(kv.get_long("train.batch_size", cfg.batch_size));
    cfg.learning_rate = kv.get_double("train.learning_rate", cfg.learning_rate);
    cfg.dropout_rate = kv.get_double("train.dropout", cfg.dropout_rate);
    cfg.l2_penalty = kv.get_double("train.l2", cfg.l2_penalty);
    cfg.seed = kv.get_uint64("train.seed", cfg.seed);
    cfg.hidden = kv.get_long("train.hidden", cfg.hidden);
    cfg.activation = models::activation_from_name(
        kv.get_string("train.activation", models::activation_name(cfg.activation)));
    cfg.denom_epsilon = kv.get_double("train.denom_epsilon", cfg.denom_epsilon);
    cfg.use_manifold = kv.get_bool("train.use_manifold", cfg.use_manifold);
    if (cfg.epochs <= 0) throw ConfigError("train.epochs must be positive");
    if (cfg.batch_size <= 0) throw ConfigError("train.batch_size must be positive");
    if (cfg.learning_rate <= 0.0) throw ConfigError("train.learning_rate must be positive");
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
        throw ConfigError("train.dropout must lie in [0, 1)");
    if (cfg.l2_penalty < 0.0) throw ConfigError("train.l2 must be nonnegative");
    if (cfg.hidden <= 0) throw ConfigError("train.hidden must be positive");
}

}  // namespace

RunConfig load_run_config(const std::string& path, bool need_train, bool need_grid) {
    KvFile kv = KvFile::parse_file(path);
    RunConfig rc;
    rc.data = read_data(kv);
    rc.split = read_split(kv);
    rc.out_dir = kv.get_string("out.dir", "");

    rc.has_train = kv.has("train.method");
    if (need_train && !rc.has_train)
        throw ConfigError(path + ": missing required key 'train.method'");
    if (rc.has_train) {
        try {
            rc.train.method = training::method_from_name(kv.get_string("train.method"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError("line " + std::to_string(kv.line_of("train.method")) + ": " +
                              e.what());
        }
        rc.train.size = static_cast<int>(kv.get_long("train.size", 2));
        if (rc.train.size < 1) throw ConfigError("train.size must be >= 1");
        bool penalized = training::method_penalized(rc.train.method);
        if (kv.has("train.lambda") && !penalized)
            throw ConfigError("line " + std::to_string(kv.line_of("train.lambda")) +
                              ": train.lambda is not valid for method " +
                              training::method_name(rc.train.method));
        if (penalized) {
            rc.train.lambda = kv.get_double("train.lambda");
            if (rc.train.lambda < 0.0) throw ConfigError("train.lambda must be nonnegative");
        }
        read_train_common(kv, rc.train);
        if (rc.train.use_manifold &&
            (rc.train.method != training::Method::LIT || rc.data.source != "manifold3d"))
            throw ConfigError(
                "train.use_manifold requires method LIT and a tangent-bearing dataset");
    }

    rc.has_grid = kv.has("grid.methods");
    if (need_grid && !rc.has_grid)
        throw ConfigError(path + ": missing required key 'grid.methods'");
    if (rc.has_grid) {
        for (const std::string& name : kv.get_list("grid.methods", {})) {
            try {
                rc.grid.methods.push_back(training::method_from_name(name));
            } catch (const std::invalid_argument& e) {
                throw ConfigError("line " + std::to_string(kv.line_of("grid.methods")) + ": " +
                                  e.what());
            }
        }
        if (rc.grid.methods.empty()) throw ConfigError("grid.methods is empty");
        if (kv.has("grid.sizes")) {
            rc.grid.sizes.clear();
            for (const std::string& s : kv.get_list("grid.sizes", {})) {
                long v = parse_long("grid.sizes", s, kv.line_of("grid.sizes"));
                if (v < 1) throw ConfigError("grid.sizes entries must be >= 1");
                rc.grid.sizes.push_back(static_cast<int>(v));
            }
            if (rc.grid.sizes.empty()) throw ConfigError("grid.sizes is empty");
        }
        bool any_penalized = std::any_of(rc.grid.methods.begin(), rc.grid.methods.end(),
                                         training::method_penalized);
        std::string lspec = kv.get_string("grid.lambdas", "log:16:1e-4:1e1");
        if (any_penalized) {
            if (lspec.rfind("log:", 0) == 0) {
                auto parts = split_commas(lspec.substr(4));
                // log:<count>:<lo>:<hi> with ':' separators
                parts.clear();
                std::stringstream ss(lspec.substr(4));
                std::string item;
                while (std::getline(ss, item, ':')) parts.push_back(trim(item));
                if (parts.size() != 3)
                    throw ConfigError("grid.lambdas log spec must be log:<count>:<lo>:<hi>");
                int line = kv.line_of("grid.lambdas");
                rc.grid.lambdas = training::log_lambda_grid(
                    static_cast<int>(parse_long("grid.lambdas", parts[0], line)),
                    parse_double("grid.lambdas", parts[1], line),
                    parse_double("grid.lambdas", parts[2], line));
            } else {
                for (const std::string& s : split_commas(lspec))
                    rc.grid.lambdas.push_back(
                        parse_double("grid.lambdas", s, kv.line_of("grid.lambdas")));
                if (rc.grid.lambdas.empty()) throw ConfigError("grid.lambdas is empty");
            }
        } else if (kv.has("grid.lambdas")) {
            throw ConfigError("line " + std::to_string(kv.line_of("grid.lambdas")) +
                              ": grid.lambdas given but no method in grid.methods uses a penalty");
        }
        rc.grid.restarts = static_cast<int>(kv.get_long("grid.restarts", 10));
        if (rc.grid.restarts < 1) throw ConfigError("grid.restarts must be >= 1");
        rc.grid.threads = static_cast<int>(kv.get_long("grid.threads", 1));
        if (rc.grid.threads < 1) throw ConfigError("grid.threads must be >= 1");
        // optimizer keys are shared with single runs
        read_train_common(kv, rc.train);
        if (rc.train.use_manifold && rc.data.source != "manifold3d")
            throw ConfigError("train.use_manifold requires a tangent-bearing dataset");
    }

    kv.reject_unused();
    return rc;
}

data::Dataset load_dataset(const DataConfig& dc) {
    if (dc.source == "csv")
        return data::load_csv(dc.path, dc.label_column, dc.categoricals);
    if (dc.source == "manifold3d") return data::gen_manifold_3d(dc.n, dc.seed);
    return data::gen_2d_gaps(data::gaps_variant_from_name(dc.source), dc.n, dc.noise, dc.seed);
}

}  // namespace lit::config
