#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lit/data.hpp"
#include "lit/training.hpp"

namespace lit::config {

// Raised for malformed files, unknown keys, and invalid combinations
// (maps to exit code 2 at the CLI).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// key = value file with dotted section prefixes; '#' starts a comment line.
// Keys never consumed by the loader are reported as unknown, with line
// numbers, so typos cannot silently change a run.
class KvFile {
public:
    static KvFile parse_file(const std::string& path);
    static KvFile parse_string(const std::string& text, const std::string& name = "<string>");

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key);
    std::string get_string(const std::string& key, const std::string& fallback);
    long get_long(const std::string& key, long fallback);
    double get_double(const std::string& key);
    double get_double(const std::string& key, double fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::uint64_t get_uint64(const std::string& key, std::uint64_t fallback);
    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback);

    int line_of(const std::string& key) const;
    void reject_unused() const;  // throws ConfigError naming every unconsumed key

private:
    struct Entry {
        std::string value;
        int line = 0;
        mutable bool used = false;
    };
    std::string name_;
    std::map<std::string, Entry> entries_;

    const Entry& require(const std::string& key);
};

struct DataConfig {
    std::string source;  // D1 | D2 | D3 | manifold3d | csv
    std::string name;    // label used in records; defaults from source/path
    long n = 400;
    double noise = 0.25;
    std::uint64_t seed = 7;
    std::string path;
    std::string label_column;
    std::vector<std::string> categoricals;
};

struct GridConfig {
    std::vector<training::Method> methods;
    std::vector<int> sizes{2, 3, 5, 8, 13};
    std::vector<double> lambdas;
    int restarts = 10;
    int threads = 1;
};

struct RunConfig {
    DataConfig data;
    data::SplitSpec split;
    training::EnsembleConfig train;
    GridConfig grid;
    std::string out_dir;
    bool has_train = false;
    bool has_grid = false;
};

// Parses and validates; `need_train` / `need_grid` select which sections are
// mandatory for the invoking subcommand.
RunConfig load_run_config(const std::string& path, bool need_train, bool need_grid);

// Materializes the dataset a config refers to (generation or CSV load).
data::Dataset load_dataset(const DataConfig& dc);

}  // namespace lit::config
