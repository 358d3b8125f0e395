#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lit::data {

// Feature matrix plus binary labels. Manifold datasets additionally carry
// per-row tangent Jacobians (D x K) and the chart coordinates they were
// generated from.
struct Dataset {
    Eigen::MatrixXd X;  // n x D
    Eigen::VectorXd y;  // n, entries 0/1
    std::vector<std::string> feature_names;
    std::vector<Eigen::MatrixXd> tangents;  // empty or one D x K Jacobian per row
    Eigen::MatrixXd chart;                  // n x K chart coordinates (manifold only)
    bool standardize_on_split = false;      // z-score with train stats inside split()
    long dropped_rows = 0;                  // rows removed for missing values
    std::vector<std::string> dropped_columns;  // constant columns removed at load

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index dim() const { return X.cols(); }
    bool has_tangents() const { return !tangents.empty(); }
};

enum class SplitKind { random, extrapolation };

struct SplitSpec {
    SplitKind kind = SplitKind::random;
    double train_fraction = 0.8;
    double valid_fraction_of_train = 0.2;
    std::uint64_t seed = 0;
};

struct SplitResult {
    Dataset train, valid, test;
};

enum class GapsVariant { D1, D2, D3 };
GapsVariant gaps_variant_from_name(const std::string& name);

// 2D synthetic datasets with gaps admitting multiple orthogonal boundaries.
Dataset gen_2d_gaps(GapsVariant variant, Eigen::Index n, double noise, std::uint64_t seed);

// 2D chart uniformly sampled on [-1,1]^2, embedded in R^3 by a fixed random
// softplus network; labels by sign of the first chart coordinate; analytic
// tangent Jacobians attached.
Dataset gen_manifold_3d(Eigen::Index n, std::uint64_t seed);

// Random 1-hidden-layer embedding map R^2 -> R^3 used by gen_manifold_3d.
struct EmbedMap {
    Eigen::MatrixXd W1;  // H x 2
    Eigen::VectorXd b1;  // H
    Eigen::MatrixXd W2;  // 3 x H
    Eigen::VectorXd b2;  // 3

    Eigen::VectorXd embed(const Eigen::Vector2d& u) const;
    Eigen::MatrixXd jacobian(const Eigen::Vector2d& u) const;  // 3 x 2
};
EmbedMap make_embed_map(std::uint64_t seed);

// CSV ingestion; categorical columns one-hot expanded, rows with missing
// values dropped (counted), whole-file constant columns dropped with a
// warning on stderr. Z-scoring happens later, inside split(), on training
// statistics only.
Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& categorical_columns);

SplitResult split(const Dataset& d, const SplitSpec& spec);

// Norms used by the extrapolation split: ||x||_2 over full-data z-scores.
Eigen::VectorXd extrapolation_norms(const Dataset& d);

void save_csv(const Dataset& d, const std::string& path);

struct ManifestEntry {
    std::string path;
    std::string label_column;
    std::vector<std::string> categorical_columns;
};

// JSON manifest: {"name": {"path": ..., "label": ..., "categoricals": [...]}}
std::map<std::string, ManifestEntry> load_manifest(const std::string& path);

}  // namespace lit::data
