#include "lit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "lit/rng.hpp"

namespace lit::data {

GapsVariant gaps_variant_from_name(const std::string& name) {
    if (name == "D1") return GapsVariant::D1;
    if (name == "D2") return GapsVariant::D2;
    if (name == "D3") return GapsVariant::D3;
    throw std::invalid_argument("unknown 2d-gaps variant '" + name + "'");
}

Dataset gen_2d_gaps(GapsVariant variant, Eigen::Index n, double noise, std::uint64_t seed) {
    if (n < 8) throw std::invalid_argument("gen_2d_gaps: n must be >= 8");
    rng::Rng r(seed);
    Dataset d;
    d.X.resize(n, 2);
    d.y.resize(n);
    d.feature_names = {"x0", "x1"};

    Eigen::Index n1 = n / 2;       // class 1
    Eigen::Index n0 = n - n1;      // class 0
    Eigen::Index row = 0;

    auto blob = [&](double cx, double cy, double s, double label, Eigen::Index count) {
        for (Eigen::Index i = 0; i < count; ++i, ++row) {
            d.X(row, 0) = cx + s * r.normal();
            d.X(row, 1) = cy + s * r.normal();
            d.y(row) = label;
        }
    };
    auto square = [&](double lo, double hi, double label, Eigen::Index count) {
        for (Eigen::Index i = 0; i < count; ++i, ++row) {
            d.X(row, 0) = r.uniform(lo, hi);
            d.X(row, 1) = r.uniform(lo, hi);
            d.y(row) = label;
        }
    };

    switch (variant) {
        case GapsVariant::D1:
            blob(1.0, 1.0, noise, 1.0, n1);
            blob(-1.0, -1.0, noise, 0.0, n0);
            break;
        case GapsVariant::D2:
            square(0.5, 1.5, 1.0, n1);
            square(-1.5, -0.5, 0.0, n0);
            break;
        case GapsVariant::D3: {
            // off-quadrant blobs cost ~5% accuracy for the horizontal
            // boundary x1 = 0 while the vertical boundary stays perfect
            Eigen::Index small = std::max<Eigen::Index>(1, n / 40);
            blob(1.0, 1.0, noise, 1.0, n1 - small);
            blob(1.0, -1.0, noise / 2.0, 1.0, small);
            blob(-1.0, -1.0, noise, 0.0, n0 - small);
            blob(-1.0, 1.0, noise / 2.0, 0.0, small);
            break;
        }
    }
    return d;
}

Eigen::VectorXd EmbedMap::embed(const Eigen::Vector2d& u) const {
    Eigen::ArrayXd z = (W1 * u + b1).array();
    Eigen::ArrayXd a = z.unaryExpr([](double v) {
        return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    });
    return W2 * a.matrix() + b2;
}

Eigen::MatrixXd EmbedMap::jacobian(const Eigen::Vector2d& u) const {
    Eigen::ArrayXd z = (W1 * u + b1).array();
    Eigen::ArrayXd s = z.unaryExpr([](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
    });
    return W2 * s.matrix().asDiagonal() * W1;
}

EmbedMap make_embed_map(std::uint64_t seed) {
    const Eigen::Index H = 16;
    rng::Rng r(seed);
    EmbedMap e;
    e.W1.resize(H, 2);
    for (Eigen::Index i = 0; i < H; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) e.W1(i, j) = r.normal();
    e.b1.resize(H);
    for (Eigen::Index i = 0; i < H; ++i) e.b1(i) = 0.5 * r.normal();
    e.W2.resize(3, H);
    double s2 = std::sqrt(2.0 / static_cast<double>(H));
    for (Eigen::Index i = 0; i < 3; ++i)
        for (Eigen::Index j = 0; j < H; ++j) e.W2(i, j) = s2 * r.normal();
    e.b2 = Eigen::VectorXd::Zero(3);
    return e;
}

Dataset gen_manifold_3d(Eigen::Index n, std::uint64_t seed) {
    if (n < 16) throw std::invalid_argument("gen_manifold_3d: n must be >= 16");
    EmbedMap map = make_embed_map(rng::mix(seed, 0x3d));
    rng::Rng r(seed);
    Dataset d;
    d.X.resize(n, 3);
    d.y.resize(n);
    d.chart.resize(n, 2);
    d.feature_names = {"x0", "x1", "x2"};
    d.tangents.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Vector2d u(r.uniform(-1.0, 1.0), r.uniform(-1.0, 1.0));
        d.chart.row(i) = u.transpose();
        d.X.row(i) = map.embed(u).transpose();
        d.y(i) = u(0) > 0 ? 1.0 : 0.0;
        d.tangents.push_back(map.jacobian(u));
    }
    return d;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

bool is_missing(const std::string& s) { return s.empty() || s == "?" || s == "NA"; }

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column,
                 const std::vector<std::string>& categorical_columns) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path);
    std::vector<std::string> header = split_line(line);

    auto col_index = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw std::runtime_error("CSV column '" + name + "' not found in " + path);
        return static_cast<std::size_t>(it - header.begin());
    };
    std::size_t label_idx = col_index(label_column);
    std::set<std::size_t> cat_idx;
    for (const auto& c : categorical_columns) cat_idx.insert(col_index(c));

    std::vector<std::vector<std::string>> rows;
    long dropped = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong field count");
        bool missing = std::any_of(cells.begin(), cells.end(),
                                   [](const std::string& s) { return is_missing(s); });
        if (missing) {
            ++dropped;
            continue;
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw std::runtime_error("no usable rows in " + path);
    const std::size_t n = rows.size();

    // label mapping
    std::set<std::string> label_values;
    for (const auto& r : rows) label_values.insert(r[label_idx]);
    if (label_values.size() != 2)
        throw std::runtime_error("label column '" + label_column + "' is not binary (" +
                                 std::to_string(label_values.size()) + " distinct values)");
    std::string neg = *label_values.begin();

    // expanded feature columns
    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j == label_idx) continue;
        if (cat_idx.count(j)) {
            std::set<std::string> levels;
            for (const auto& r : rows) levels.insert(r[j]);
            for (const auto& lv : levels) {
                names.push_back(header[j] + "=" + lv);
                std::vector<double> col(n);
                for (std::size_t i = 0; i < n; ++i) col[i] = rows[i][j] == lv ? 1.0 : 0.0;
                cols.push_back(std::move(col));
            }
        } else {
            names.push_back(header[j]);
            std::vector<double> col(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t pos = 0;
                try {
                    col[i] = std::stod(rows[i][j], &pos);
                } catch (const std::exception&) {
                    throw std::runtime_error(path + ": unparseable numeric value '" +
                                             rows[i][j] + "' in column " + header[j]);
                }
            }
            cols.push_back(std::move(col));
        }
    }

    Dataset d;
    d.dropped_rows = dropped;
    d.standardize_on_split = true;
    // drop constant columns (z-score undefined)
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        bool constant = std::all_of(cols[j].begin(), cols[j].end(),
                                    [&](double v) { return v == cols[j][0]; });
        if (constant) {
            std::cerr << "warning: dropping constant column '" << names[j] << "' from "
                      << path << "\n";
            d.dropped_columns.push_back(names[j]);
        } else {
            keep.push_back(j);
        }
    }
    if (keep.empty()) throw std::runtime_error("all feature columns constant in " + path);

    d.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t jj = 0; jj < keep.size(); ++jj) {
        d.feature_names.push_back(names[keep[jj]]);
        for (std::size_t i = 0; i < n; ++i)
            d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(jj)) = cols[keep[jj]][i];
    }
    d.y.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i)
        d.y(static_cast<Eigen::Index>(i)) = rows[i][label_idx] == neg ? 0.0 : 1.0;
    return d;
}

namespace {

Dataset take_rows(const Dataset& d, const std::vector<Eigen::Index>& idx) {
    Dataset out;
    out.feature_names = d.feature_names;
    out.standardize_on_split = d.standardize_on_split;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), d.dim());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    if (d.chart.rows() == d.n() && d.chart.cols() > 0)
        out.chart.resize(static_cast<Eigen::Index>(idx.size()), d.chart.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.X.row(static_cast<Eigen::Index>(i)) = d.X.row(idx[i]);
        out.y(static_cast<Eigen::Index>(i)) = d.y(idx[i]);
        if (out.chart.size() > 0) out.chart.row(static_cast<Eigen::Index>(i)) = d.chart.row(idx[i]);
        if (d.has_tangents()) out.tangents.push_back(d.tangents[static_cast<std::size_t>(idx[i])]);
    }
    return out;
}

struct ZStats {
    Eigen::RowVectorXd mean;
    Eigen::RowVectorXd std;
};

ZStats fit_zstats(const Eigen::MatrixXd& X) {
    ZStats s;
    s.mean = X.colwise().mean();
    Eigen::MatrixXd c = X.rowwise() - s.mean;
    s.std = (c.array().square().colwise().sum() / static_cast<double>(X.rows())).sqrt();
    for (Eigen::Index j = 0; j < s.std.size(); ++j)
        if (s.std(j) < 1e-12) s.std(j) = 1.0;  // constant on this subset: center only
    return s;
}

void apply_zstats(const ZStats& s, Dataset& d) {
    d.X = (d.X.rowwise() - s.mean).array().rowwise() / s.std.array();
    // ambient rescaling applies to tangent Jacobian rows too
    for (auto& J : d.tangents)
        J = s.std.transpose().array().inverse().matrix().asDiagonal() * J;
}

}  // namespace

Eigen::VectorXd extrapolation_norms(const Dataset& d) {
    ZStats s = fit_zstats(d.X);
    Eigen::MatrixXd Z = (d.X.rowwise() - s.mean).array().rowwise() / s.std.array();
    return Z.rowwise().norm();
}

SplitResult split(const Dataset& d, const SplitSpec& spec) {
    if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0 ||
        spec.valid_fraction_of_train <= 0.0 || spec.valid_fraction_of_train >= 1.0)
        throw std::invalid_argument("split: fractions must lie in (0,1)");
    const Eigen::Index n = d.n();
    std::vector<Eigen::Index> trainvalid, test;

    if (spec.kind == SplitKind::random) {
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        rng::Rng r(spec.seed);
        r.shuffle(order);
        Eigen::Index ntv = static_cast<Eigen::Index>(
            std::llround(spec.train_fraction * static_cast<double>(n)));
        trainvalid.assign(order.begin(), order.begin() + ntv);
        test.assign(order.begin() + ntv, order.end());
    } else {
        Eigen::VectorXd norms = extrapolation_norms(d);
        std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
            if (norms(a) != norms(b)) return norms(a) < norms(b);
            return a < b;  // ties resolved toward the train side by index
        });
        Eigen::Index ntv = (n + 1) / 2;
        trainvalid.assign(order.begin(), order.begin() + ntv);
        test.assign(order.begin() + ntv, order.end());
    }

    // carve validation out of the training portion
    rng::Rng rv(rng::mix(spec.seed, 0x5eed));
    std::vector<Eigen::Index> tv = trainvalid;
    rv.shuffle(tv);
    Eigen::Index nvalid = static_cast<Eigen::Index>(
        std::llround(spec.valid_fraction_of_train * static_cast<double>(tv.size())));
    std::vector<Eigen::Index> valid(tv.begin(), tv.begin() + nvalid);
    std::vector<Eigen::Index> train(tv.begin() + nvalid, tv.end());

    if (train.empty() || valid.empty() || test.empty())
        throw std::runtime_error("split: a partition came out empty");

    SplitResult out;
    out.train = take_rows(d, train);
    out.valid = take_rows(d, valid);
    out.test = take_rows(d, test);
    if (d.standardize_on_split) {
        ZStats s = fit_zstats(out.train.X);
        apply_zstats(s, out.train);
        apply_zstats(s, out.valid);
        apply_zstats(s, out.test);
    }
    return out;
}

void save_csv(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << std::setprecision(17);
    for (const auto& name : d.feature_names) out << name << ',';
    out << "label\n";
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        for (Eigen::Index j = 0; j < d.dim(); ++j) out << d.X(i, j) << ',';
        out << static_cast<int>(d.y(i)) << '\n';
    }
}

std::map<std::string, ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    nlohmann::json j;
    in >> j;
    std::map<std::string, ManifestEntry> out;
    for (auto& [name, entry] : j.items()) {
        ManifestEntry e;
        e.path = entry.at("path").get<std::string>();
        e.label_column = entry.at("label").get<std::string>();
        if (entry.contains("categoricals"))
            e.categorical_columns = entry["categoricals"].get<std::vector<std::string>>();
        out[name] = e;
    }
    return out;
}

}  // namespace lit::data
