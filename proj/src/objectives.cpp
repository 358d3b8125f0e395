#include "lit/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace lit::objectives {

namespace {

constexpr double kProbClamp = 1e-7;

using diffcore::Expr;
using diffcore::Graph;
using diffcore::Shape;
using models::MlpParams;

struct ModelVars {
    Expr W1, b1, w2, b2;
};

ModelVars declare_params(Graph& g, const MlpParams& p, const std::string& prefix) {
    return ModelVars{
        g.param(prefix + ".W1", Shape{p.hidden(), p.dim()}),
        g.param(prefix + ".b1", Shape{p.hidden(), 1}),
        g.param(prefix + ".w2", Shape{p.hidden(), 1}),
        g.param(prefix + ".b2", Shape{1, 1}),
    };
}

Expr logit_expr(Graph& g, const ModelVars& v, models::Activation act, Expr x) {
    Expr z = g.add(g.matvec(v.W1, x), v.b1);
    Expr a = z;
    if (act == models::Activation::relu) a = g.relu(z);
    if (act == models::Activation::softplus) a = g.softplus(z);
    return g.add(g.dot(v.w2, a), v.b2);
}

Expr nll_expr(Graph& g, Expr logit, double y) {
    return g.sub(g.softplus(logit), g.mul(g.scalar(y), logit));
}

Expr cos_sq_expr(Graph& g, Expr g1, Expr g2, double eps) {
    Expr d = g.dot(g1, g2);
    Expr n1 = g.sqrt(g.squared_norm(g1));
    Expr n2 = g.sqrt(g.squared_norm(g2));
    Expr den = g.add(g.mul(n1, n2), g.scalar(eps));
    return g.quotient(g.mul(d, d), g.mul(den, den));
}

struct BuildCommon {
    std::vector<ModelVars> vars;
    std::vector<Expr> xs;
    std::vector<std::vector<Expr>> logits;  // [member][point]
    diffcore::Bindings inputs;
    std::vector<std::string> param_names;
};

BuildCommon build_common(const std::vector<MlpParams>& members,
                         const Eigen::MatrixXd& X, Graph& g) {
    if (members.empty()) throw std::invalid_argument("objective: no models");
    if (X.rows() == 0) throw std::invalid_argument("objective: empty batch");
    BuildCommon c;
    for (std::size_t m = 0; m < members.size(); ++m) {
        std::string prefix = "m" + std::to_string(m);
        c.vars.push_back(declare_params(g, members[m], prefix));
        for (const char* t : {".W1", ".b1", ".w2", ".b2"})
            c.param_names.push_back(prefix + t);
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        std::string name = "x" + std::to_string(i);
        c.xs.push_back(g.input(name, Shape{X.cols(), 1}));
        c.inputs[name] = X.row(i).transpose();
    }
    c.logits.resize(members.size());
    for (std::size_t m = 0; m < members.size(); ++m)
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            c.logits[m].push_back(logit_expr(g, c.vars[m], members[m].activation, c.xs[static_cast<std::size_t>(i)]));
    return c;
}

}  // namespace

double nll(double logit, int y) {
    if (y != 0 && y != 1) throw std::invalid_argument("nll: label must be 0 or 1");
    return models::softplus(logit) - y * logit;
}

double cos_sq(const Eigen::VectorXd& g1, const Eigen::VectorXd& g2, double denom_epsilon) {
    if (g1.size() != g2.size()) throw std::invalid_argument("cos_sq: length mismatch");
    double d = g1.dot(g2);
    double den = g1.norm() * g2.norm() + denom_epsilon;
    double r = d / den;
    return r * r;
}

double manif_cos_sq(const Eigen::VectorXd& g1, const Eigen::VectorXd& g2,
                    const Eigen::MatrixXd& J, double denom_epsilon) {
    if (g1.size() != J.rows() || g2.size() != J.rows())
        throw std::invalid_argument("manif_cos_sq: Jacobian shape mismatch");
    return cos_sq(J.transpose() * g1, J.transpose() * g2, denom_epsilon);
}

ObjectiveExpr lit_objective(const std::vector<MlpParams>& members,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const PenaltyConfig& cfg, Graph& g,
                            const std::vector<Eigen::MatrixXd>* tangents) {
    BuildCommon c = build_common(members, X, g);
    const Eigen::Index n = X.rows();
    const std::size_t M = members.size();

    std::vector<Expr> nll_terms;
    for (std::size_t m = 0; m < M; ++m)
        for (Eigen::Index i = 0; i < n; ++i)
            nll_terms.push_back(nll_expr(g, c.logits[m][static_cast<std::size_t>(i)], y(i)));
    Expr nll_term = g.mul(g.scalar(1.0 / static_cast<double>(n)), g.add(nll_terms));

    ObjectiveExpr out;
    out.nll_term = nll_term;
    out.inputs = std::move(c.inputs);
    out.param_names = std::move(c.param_names);

    if (cfg.lambda == 0.0 || M < 2) {
        out.loss = nll_term;
        return out;
    }

    // input-gradient expressions per (member, point)
    std::vector<std::vector<Expr>> grads(M);
    for (std::size_t m = 0; m < M; ++m) {
        for (Eigen::Index i = 0; i < n; ++i) {
            std::string xi = "x" + std::to_string(i);
            Expr gx = g.differentiate(c.logits[m][static_cast<std::size_t>(i)], {xi}).at(xi);
            if (tangents != nullptr)
                gx = g.matvec(g.constant((*tangents)[static_cast<std::size_t>(i)]), gx, true);
            grads[m].push_back(gx);
        }
    }

    std::vector<Expr> pair_terms;
    for (std::size_t m = 0; m < M; ++m)
        for (std::size_t l = m + 1; l < M; ++l)
            for (Eigen::Index i = 0; i < n; ++i)
                pair_terms.push_back(cos_sq_expr(g, grads[m][static_cast<std::size_t>(i)],
                                                 grads[l][static_cast<std::size_t>(i)],
                                                 cfg.denom_epsilon));
    // ordered pairs l != m count each unordered pair twice
    Expr penalty = g.mul(g.scalar(2.0 * cfg.lambda / static_cast<double>(n)),
                         g.add(pair_terms));
    out.penalty_term = penalty;
    out.loss = g.add(nll_term, penalty);
    return out;
}

ObjectiveExpr ncl_objective(const std::vector<MlpParams>& members,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double lambda, Graph& g) {
    if (members.size() < 2) throw std::invalid_argument("ncl_objective: needs >= 2 models");
    BuildCommon c = build_common(members, X, g);
    const Eigen::Index n = X.rows();
    const std::size_t M = members.size();

    std::vector<std::vector<Expr>> probs(M);
    for (std::size_t m = 0; m < M; ++m)
        for (Eigen::Index i = 0; i < n; ++i)
            probs[m].push_back(g.sigmoid(c.logits[m][static_cast<std::size_t>(i)]));

    std::vector<Expr> sq_terms;
    for (std::size_t m = 0; m < M; ++m)
        for (Eigen::Index i = 0; i < n; ++i) {
            Expr e = g.sub(probs[m][static_cast<std::size_t>(i)], g.scalar(y(i)));
            sq_terms.push_back(g.mul(e, e));
        }
    Expr sq_term = g.mul(g.scalar(1.0 / static_cast<double>(n)), g.add(sq_terms));

    std::vector<Expr> pen_terms;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<Expr> ps;
        for (std::size_t m = 0; m < M; ++m) ps.push_back(probs[m][static_cast<std::size_t>(i)]);
        Expr mean = g.mul(g.scalar(1.0 / static_cast<double>(M)), g.add(ps));
        for (std::size_t m = 0; m < M; ++m) {
            std::vector<Expr> others;
            for (std::size_t l = 0; l < M; ++l)
                if (l != m) others.push_back(g.sub(ps[l], mean));
            pen_terms.push_back(g.mul(g.sub(ps[m], mean), g.add(others)));
        }
    }
    Expr penalty = g.mul(g.scalar(lambda / static_cast<double>(n)), g.add(pen_terms));

    ObjectiveExpr out;
    out.nll_term = sq_term;
    out.penalty_term = penalty;
    out.loss = g.add(sq_term, penalty);
    out.inputs = std::move(c.inputs);
    out.param_names = std::move(c.param_names);
    return out;
}

ObjectiveExpr ace_objective(const std::vector<MlpParams>& members,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            double lambda, Graph& g) {
    if (members.size() < 2) throw std::invalid_argument("ace_objective: needs >= 2 models");
    BuildCommon c = build_common(members, X, g);
    const Eigen::Index n = X.rows();
    const std::size_t M = members.size();

    std::vector<Expr> nll_terms;
    for (std::size_t m = 0; m < M; ++m)
        for (Eigen::Index i = 0; i < n; ++i)
            nll_terms.push_back(nll_expr(g, c.logits[m][static_cast<std::size_t>(i)], y(i)));
    Expr nll_term = g.mul(g.scalar(1.0 / static_cast<double>(n)), g.add(nll_terms));

    std::vector<std::vector<Expr>> probs(M);
    for (std::size_t m = 0; m < M; ++m)
        for (Eigen::Index i = 0; i < n; ++i)
            probs[m].push_back(g.clamp(g.sigmoid(c.logits[m][static_cast<std::size_t>(i)]),
                                       kProbClamp, 1.0 - kProbClamp));

    std::vector<Expr> ce_terms;
    for (std::size_t l = 0; l < M; ++l)
        for (std::size_t m = 0; m < M; ++m) {
            if (l == m) continue;
            for (Eigen::Index i = 0; i < n; ++i) {
                Expr p = probs[l][static_cast<std::size_t>(i)];
                Expr q = probs[m][static_cast<std::size_t>(i)];
                Expr one = g.scalar(1.0);
                Expr ce = g.mul(g.scalar(-1.0),
                                g.add(g.mul(p, g.log(q)),
                                      g.mul(g.sub(one, p), g.log(g.sub(one, q)))));
                ce_terms.push_back(ce);
            }
        }
    Expr penalty = g.mul(g.scalar(-lambda / (static_cast<double>(M) - 1.0) /
                                  static_cast<double>(n)),
                         g.add(ce_terms));

    ObjectiveExpr out;
    out.nll_term = nll_term;
    out.penalty_term = penalty;
    out.loss = g.add(nll_term, penalty);
    out.inputs = std::move(c.inputs);
    out.param_names = std::move(c.param_names);
    return out;
}

// --- analytic route ---------------------------------------------------------

namespace {

struct Cache {
    Eigen::MatrixXd Z;       // H x B preactivations
    Eigen::MatrixXd A;       // activations
    Eigen::MatrixXd Aprime;  // a'(Z)
    Eigen::MatrixXd W2eff;   // per-column effective output weights (dropout folded in)
    Eigen::MatrixXd Amask;   // masked activations
    Eigen::MatrixXd U;       // W2eff .* Aprime
    Eigen::VectorXd logits;  // B
};

Cache forward_batch(const MlpParams& p, const Eigen::MatrixXd& X,
                    const Eigen::MatrixXd* mask) {
    Cache c;
    const Eigen::Index B = X.rows();
    c.Z = (p.W1 * X.transpose()).colwise() + p.b1;
    c.A.resize(p.hidden(), B);
    c.Aprime.resize(p.hidden(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
        c.A.col(b) = models::act_value(p.activation, c.Z.col(b).array()).matrix();
        c.Aprime.col(b) = models::act_deriv(p.activation, c.Z.col(b).array()).matrix();
    }
    if (mask != nullptr) {
        c.Amask = c.A.cwiseProduct(*mask);
        c.W2eff = mask->array().colwise() * p.w2.array();
    } else {
        c.Amask = c.A;
        c.W2eff = p.w2.replicate(1, B);
    }
    c.U = c.W2eff.cwiseProduct(c.Aprime);
    c.logits = (c.Amask.transpose() * p.w2).array() + p.b2;
    return c;
}

void zero_grads(const std::vector<MlpParams>& members, std::vector<MemberGrads>& grads) {
    grads.resize(members.size());
    for (std::size_t m = 0; m < members.size(); ++m) {
        grads[m].W1 = Eigen::MatrixXd::Zero(members[m].hidden(), members[m].dim());
        grads[m].b1 = Eigen::VectorXd::Zero(members[m].hidden());
        grads[m].w2 = Eigen::VectorXd::Zero(members[m].hidden());
        grads[m].b2 = 0.0;
    }
}

// backprop of sum_b coef(b) * f_m(x_b) into parameter gradients
void accumulate_logit_grads(const Cache& c,
                            const Eigen::MatrixXd& X, const Eigen::VectorXd& coef,
                            MemberGrads& g) {
    g.w2 += c.Amask * coef;
    g.b2 += coef.sum();
    Eigen::MatrixXd Uc = c.U.array().rowwise() * coef.transpose().array();
    g.b1 += Uc.rowwise().sum();
    g.W1 += Uc * X;
}

}  // namespace

BatchValue lit_batch_grads(const std::vector<MlpParams>& members,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const PenaltyConfig& cfg,
                           std::vector<MemberGrads>& grads,
                           const std::vector<Eigen::MatrixXd>* tangents,
                           const std::vector<Eigen::MatrixXd>* dropout,
                           const Eigen::VectorXd* example_weights) {
    if (members.empty()) throw std::invalid_argument("lit_batch_grads: no models");
    const Eigen::Index B = X.rows();
    if (B == 0) throw std::invalid_argument("lit_batch_grads: empty batch");
    const std::size_t M = members.size();
    zero_grads(members, grads);

    Eigen::VectorXd w = example_weights != nullptr
                            ? *example_weights
                            : Eigen::VectorXd::Constant(B, 1.0 / static_cast<double>(B));

    BatchValue val;
    std::vector<Cache> caches(M);
    for (std::size_t m = 0; m < M; ++m) {
        caches[m] = forward_batch(members[m], X,
                                  dropout != nullptr ? &(*dropout)[m] : nullptr);
        Eigen::VectorXd coef(B);
        for (Eigen::Index b = 0; b < B; ++b) {
            int yb = static_cast<int>(y(b));
            val.nll += w(b) * nll(caches[m].logits(b), yb);
            coef(b) = w(b) * (models::sigmoid(caches[m].logits(b)) - y(b));
        }
        accumulate_logit_grads(caches[m], X, coef, grads[m]);
    }

    if (cfg.lambda > 0.0 && M >= 2) {
        const double scale = 2.0 * cfg.lambda / static_cast<double>(B);
        std::vector<Eigen::MatrixXd> G(M);   // ambient input gradients, D x B
        std::vector<Eigen::MatrixXd> Gp(M);  // penalty-space gradients
        for (std::size_t m = 0; m < M; ++m) {
            G[m] = members[m].W1.transpose() * caches[m].U;
            if (tangents != nullptr) {
                Eigen::Index K = (*tangents)[0].cols();
                Gp[m].resize(K, B);
                for (Eigen::Index b = 0; b < B; ++b)
                    Gp[m].col(b) = (*tangents)[static_cast<std::size_t>(b)].transpose() * G[m].col(b);
            } else {
                Gp[m] = G[m];
            }
        }
        // dPenalty/dG per member
        std::vector<Eigen::MatrixXd> H(M);
        for (std::size_t m = 0; m < M; ++m)
            H[m] = Eigen::MatrixXd::Zero(Gp[0].rows(), B);

        for (std::size_t m = 0; m < M; ++m) {
            for (std::size_t l = m + 1; l < M; ++l) {
                for (Eigen::Index b = 0; b < B; ++b) {
                    Eigen::VectorXd g1 = Gp[m].col(b);
                    Eigen::VectorXd g2 = Gp[l].col(b);
                    double d = g1.dot(g2);
                    double n1 = g1.norm(), n2 = g2.norm();
                    double q = n1 * n2 + cfg.denom_epsilon;
                    double cval = (d / q) * (d / q);
                    val.penalty += scale * cval;
                    double a = 2.0 * d / (q * q);
                    double bq = 2.0 * d * d / (q * q * q);
                    Eigen::VectorXd h1 = a * g2;
                    Eigen::VectorXd h2 = a * g1;
                    if (n1 > 0.0) h1 -= (bq * n2 / n1) * g1;
                    if (n2 > 0.0) h2 -= (bq * n1 / n2) * g2;
                    H[m].col(b) += scale * h1;
                    H[l].col(b) += scale * h2;
                }
            }
        }

        for (std::size_t m = 0; m < M; ++m) {
            Eigen::MatrixXd Ha;  // back to ambient space, D x B
            if (tangents != nullptr) {
                Ha.resize(X.cols(), B);
                for (Eigen::Index b = 0; b < B; ++b)
                    Ha.col(b) = (*tangents)[static_cast<std::size_t>(b)] * H[m].col(b);
            } else {
                Ha = H[m];
            }
            const Cache& c = caches[m];
            Eigen::MatrixXd V = members[m].W1 * Ha;  // H x B
            Eigen::MatrixXd Asec(c.Z.rows(), B);
            for (Eigen::Index b = 0; b < B; ++b)
                Asec.col(b) = models::act_second(members[m].activation, c.Z.col(b).array()).matrix();
            Eigen::MatrixXd P = c.W2eff.cwiseProduct(Asec).cwiseProduct(V);
            if (dropout != nullptr)
                grads[m].w2 += ((*dropout)[m].cwiseProduct(c.Aprime).cwiseProduct(V)).rowwise().sum();
            else
                grads[m].w2 += c.Aprime.cwiseProduct(V).rowwise().sum();
            grads[m].b1 += P.rowwise().sum();
            grads[m].W1 += c.U * Ha.transpose() + P * X;
        }
    }

    val.total = val.nll + val.penalty;
    return val;
}

BatchValue ncl_batch_grads(const std::vector<MlpParams>& members,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double lambda, std::vector<MemberGrads>& grads,
                           const std::vector<Eigen::MatrixXd>* dropout) {
    if (members.size() < 2) throw std::invalid_argument("ncl_batch_grads: needs >= 2 models");
    const Eigen::Index B = X.rows();
    if (B == 0) throw std::invalid_argument("ncl_batch_grads: empty batch");
    const std::size_t M = members.size();
    zero_grads(members, grads);

    std::vector<Cache> caches(M);
    Eigen::MatrixXd P(M, B);
    for (std::size_t m = 0; m < M; ++m) {
        caches[m] = forward_batch(members[m], X,
                                  dropout != nullptr ? &(*dropout)[m] : nullptr);
        for (Eigen::Index b = 0; b < B; ++b)
            P(static_cast<Eigen::Index>(m), b) = models::sigmoid(caches[m].logits(b));
    }
    Eigen::RowVectorXd pbar = P.colwise().mean();

    BatchValue val;
    const double inv_b = 1.0 / static_cast<double>(B);
    for (std::size_t m = 0; m < M; ++m) {
        Eigen::VectorXd coef(B);
        for (Eigen::Index b = 0; b < B; ++b) {
            double p = P(static_cast<Eigen::Index>(m), b);
            double dm = p - pbar(b);
            val.nll += inv_b * (p - y(b)) * (p - y(b));
            val.penalty += lambda * inv_b * (-dm * dm);
            double dldp = inv_b * (2.0 * (p - y(b)) - 2.0 * lambda * dm);
            coef(b) = dldp * p * (1.0 - p);
        }
        accumulate_logit_grads(caches[m], X, coef, grads[m]);
    }
    val.total = val.nll + val.penalty;
    return val;
}

BatchValue ace_batch_grads(const std::vector<MlpParams>& members,
                           const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           double lambda, std::vector<MemberGrads>& grads,
                           const std::vector<Eigen::MatrixXd>* dropout) {
    if (members.size() < 2) throw std::invalid_argument("ace_batch_grads: needs >= 2 models");
    const Eigen::Index B = X.rows();
    if (B == 0) throw std::invalid_argument("ace_batch_grads: empty batch");
    const std::size_t M = members.size();
    zero_grads(members, grads);

    std::vector<Cache> caches(M);
    Eigen::MatrixXd P(M, B);
    for (std::size_t m = 0; m < M; ++m) {
        caches[m] = forward_batch(members[m], X,
                                  dropout != nullptr ? &(*dropout)[m] : nullptr);
        for (Eigen::Index b = 0; b < B; ++b)
            P(static_cast<Eigen::Index>(m), b) = models::sigmoid(caches[m].logits(b));
    }

    BatchValue val;
    const double inv_b = 1.0 / static_cast<double>(B);
    const double pen_scale = lambda / (static_cast<double>(M) - 1.0);
    Eigen::MatrixXd dLdlogit = Eigen::MatrixXd::Zero(M, B);  // NLL part
    Eigen::MatrixXd dLdp = Eigen::MatrixXd::Zero(M, B);      // penalty part

    for (std::size_t m = 0; m < M; ++m)
        for (Eigen::Index b = 0; b < B; ++b) {
            double logit = caches[m].logits(b);
            val.nll += inv_b * nll(logit, static_cast<int>(y(b)));
            dLdlogit(static_cast<Eigen::Index>(m), b) =
                inv_b * (P(static_cast<Eigen::Index>(m), b) - y(b));
        }

    auto clamp01 = [](double p) { return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp); };
    for (std::size_t l = 0; l < M; ++l)
        for (std::size_t m = 0; m < M; ++m) {
            if (l == m) continue;
            for (Eigen::Index b = 0; b < B; ++b) {
                double pl = P(static_cast<Eigen::Index>(l), b);
                double qm = P(static_cast<Eigen::Index>(m), b);
                double pc = clamp01(pl), qc = clamp01(qm);
                double ce = -(pc * std::log(qc) + (1.0 - pc) * std::log(1.0 - qc));
                val.penalty -= pen_scale * inv_b * ce;
                // minus the cross-entropy term: gradients flip sign
                if (pl > kProbClamp && pl < 1.0 - kProbClamp)
                    dLdp(static_cast<Eigen::Index>(l), b) +=
                        pen_scale * inv_b * (std::log(qc) - std::log(1.0 - qc));
                if (qm > kProbClamp && qm < 1.0 - kProbClamp)
                    dLdp(static_cast<Eigen::Index>(m), b) +=
                        pen_scale * inv_b * (pc / qc - (1.0 - pc) / (1.0 - qc));
            }
        }

    for (std::size_t m = 0; m < M; ++m) {
        Eigen::VectorXd coef(B);
        for (Eigen::Index b = 0; b < B; ++b) {
            double p = P(static_cast<Eigen::Index>(m), b);
            coef(b) = dLdlogit(static_cast<Eigen::Index>(m), b) +
                      dLdp(static_cast<Eigen::Index>(m), b) * p * (1.0 - p);
        }
        accumulate_logit_grads(caches[m], X, coef, grads[m]);
    }
    val.total = val.nll + val.penalty;
    return val;
}

}  // namespace lit::objectives
