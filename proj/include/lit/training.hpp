#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lit/data.hpp"
#include "lit/eval.hpp"
#include "lit/models.hpp"
#include "lit/objectives.hpp"

namespace lit::training {

enum class Method { RRs, Bag, Ada, NCL, ACE, LIT };

std::string method_name(Method m);
Method method_from_name(const std::string& name);
bool method_penalized(Method m);

struct EnsembleConfig {
    Method method = Method::RRs;
    int size = 2;
    double lambda = 0.0;  // LIT/NCL/ACE only
    int epochs = 200;
    int batch_size = 64;
    double learning_rate = 1e-3;
    double dropout_rate = 0.0;
    double l2_penalty = 0.0;
    std::uint64_t seed = 0;
    Eigen::Index hidden = 256;
    models::Activation activation = models::Activation::relu;
    double denom_epsilon = 1e-8;
    bool use_manifold = false;         // LIT penalty on tangent-projected gradients
    bool bag_identity_resample = false;  // test hook: Bag without resampling
};

struct EpochLog {
    int epoch = 0;
    double loss = 0.0;
    double nll = 0.0;
    double penalty = 0.0;
};

struct TrainedEnsemble {
    std::vector<models::MlpParams> members;
    Eigen::VectorXd member_weights;  // nonnegative, sum 1
    EnsembleConfig config;
    std::vector<EpochLog> training_log;
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(int epoch_)
        : std::runtime_error("training diverged (non-finite loss) at epoch " +
                             std::to_string(epoch_)),
          epoch(epoch_) {}
    int epoch;
};

// --- optimizer ---------------------------------------------------------------

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    Eigen::VectorXd m, v;
    long t = 0;
};

// Bias-corrected adaptive-moment update, in place. Throws on non-finite
// gradients.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads,
               AdamState& state, const AdamHyper& hp);

Eigen::VectorXd flatten(const models::MlpParams& p);
void unflatten(const Eigen::VectorXd& v, models::MlpParams& p);
Eigen::VectorXd flatten_grads(const objectives::MemberGrads& g);

// --- trainers ----------------------------------------------------------------

// Joint minibatch training of all members on a shared objective
// (method must be LIT, NCL or ACE).
TrainedEnsemble train_joint(const EnsembleConfig& cfg, const data::Dataset& train,
                            const data::Dataset& valid);

// RRs (per-member seeds, full data) and Bag (seeded bootstrap resamples).
TrainedEnsemble train_independent(const EnsembleConfig& cfg, const data::Dataset& train,
                                  const data::Dataset& valid);

// Sequential reweighted rounds with real-valued base learners; example
// weights folded into the per-example NLL.
TrainedEnsemble train_adaboost(const EnsembleConfig& cfg, const data::Dataset& train,
                               const data::Dataset& valid);

// Dispatch on cfg.method.
TrainedEnsemble train(const EnsembleConfig& cfg, const data::Dataset& train,
                      const data::Dataset& valid);

void save_ensemble(const TrainedEnsemble& e, const std::string& dir);
TrainedEnsemble load_ensemble(const std::string& dir);

// --- hyperparameter grid -------------------------------------------------------

// `count` logarithmically spaced values with exact endpoints.
std::vector<double> log_lambda_grid(int count, double lo = 1e-4, double hi = 1e1);

struct GridSpec {
    std::vector<Method> methods;
    std::vector<int> sizes{2, 3, 5, 8, 13};
    std::vector<double> lambda_grid;  // used by penalized methods
    int restarts = 10;
    EnsembleConfig base;       // epochs, lr, dropout, l2, hidden, activation, seed
    data::SplitSpec split_base;  // split kind/fractions; seed varies per restart
    std::string dataset_name;
    int threads = 1;
};

struct MethodSelection {
    std::string method;
    int size = 0;
    std::optional<double> lambda;
    int runs = 0;
    std::optional<double> valid_auc_mean;
    std::optional<double> test_auc_mean, test_auc_sd;
    std::optional<double> test_acc_mean;
    std::optional<double> rho_av_mean, rho_av_sd;
    std::optional<double> q_av_mean;
    std::optional<double> kappa_mean;
    std::optional<double> cos2_mean, cos2_sd;
};

struct GridResult {
    std::vector<eval::MetricsRecord> records;  // two per run: valid and test
    std::vector<MethodSelection> selections;
    std::vector<std::string> failures;  // run keys that threw, with messages
};

// Runs every (method, size, lambda, restart) cell; `skip` (optional) lets a
// caller resume by suppressing already-recorded runs. Records are ordered
// deterministically regardless of thread count. Selection maximizes mean
// validation AUC of the ensemble.
GridResult grid_search(
    const data::Dataset& full, const GridSpec& spec,
    const std::function<bool(const std::string& method, int size, double lambda,
                             int restart)>& skip = nullptr,
    const std::vector<eval::MetricsRecord>* existing = nullptr);

std::string selection_csv(const std::vector<MethodSelection>& selections,
                          const std::string& dataset, const std::string& split_kind);

}  // namespace lit::training
