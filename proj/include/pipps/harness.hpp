#pragma once

#include "pipps/common.hpp"
#include "pipps/environment.hpp"
#include "pipps/gp_model.hpp"
#include "pipps/gradients.hpp"
#include "pipps/optimizer.hpp"
#include "pipps/policy.hpp"
#include "pipps/rollout.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipps {

/// Bad configuration file or value; the CLI maps it to exit code 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrialSettings {
    int random_trials = 1;
    int learned_trials = 15;
    int evals_per_trial = 600;
    int eval_repeats = 30;
    /// Success when the final evaluated mean per-step cost is below this.
    double success_threshold = 0.2;
};

struct TpSettings {
    bool biw = true;
    VarianceStrategy strategy = VarianceStrategy::sample_trace;
    double moving_average_decay = 0.9;
};

struct LandscapeSettings {
    int grid_points = 31;
    double range = 1.0;  ///< grid spans [-range, range] along the unit direction
    std::uint64_t direction_seed = 1;
    std::uint64_t rollout_seed = 2;
    Eigen::Index particles = 100;
    std::vector<Estimator> estimators{Estimator::rp, Estimator::lr, Estimator::biw_lr, Estimator::tp};
};

struct GradvarSettings {
    std::vector<Eigen::Index> particles{10, 25, 50, 100, 250};
    int repetitions = 50;
    std::uint64_t rollout_seed = 3;
    std::vector<Estimator> estimators{Estimator::rp, Estimator::lr, Estimator::biw_lr, Estimator::tp};
};

struct PolicyInitSettings {
    double initial_region_fraction = 0.2;
    double weight_std = 0.1;
};

/// Everything a command needs. Parsed strictly: unknown keys are errors.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    int workers = 1;
    CartPoleParams env;
    NoiseConfig noise;
    CostConfig cost;
    InitialStateDist init;
    PolicyConfig policy;
    PolicyInitSettings policy_init;
    RolloutConfig rollout;  ///< particles, horizon and ablations; mode and seed are set per use
    Estimator estimator = Estimator::tp;
    TpSettings tp;
    OptimizerConfig optimizer;
    TrialSettings trials;
    GpTrainOptions gp;
    LandscapeSettings landscape;
    GradvarSettings gradvar;
    std::string checkpoint;  ///< learn checkpoint read by landscape, gradvar and rollout
    std::string data;        ///< dataset CSV read by gp-fit

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);

    /// Throws ConfigError on out-of-range values.
    void validate() const;
};

/// Flags that make a command report a numerical failure.
Flags failure_flags(const Flags& flags);

/// One episode on the simulated system. `observations` are what the policy
/// saw; costs are taken on the true states.
struct TrialRecord {
    std::uint32_t id = 0;
    std::vector<CartPoleState> states;        ///< T+1
    std::vector<CartPoleState> observations;  ///< T+1
    std::vector<double> actions;              ///< T
    std::vector<double> costs;                ///< T+1

    double total_cost() const;
    double mean_cost() const;
};

/// Random trials draw actions uniformly on [-u_max, u_max]; otherwise the
/// policy acts on the observations.
TrialRecord run_trial(const ExperimentConfig& cfg, const CounterRng& rng, std::uint32_t id,
                      const Policy* policy = nullptr, const Vector* theta = nullptr);

/// GP training pairs from a trial: inputs [obs_t, u_t], targets obs_{t+1} - obs_t.
void append_transitions(const TrialRecord& trial, Matrix& inputs, Matrix& targets);

struct Evaluation {
    double mean_return = 0.0;
    double se_return = 0.0;
    double mean_cost = 0.0;
};

Evaluation evaluate_policy(const ExperimentConfig& cfg, const CounterRng& rng, std::uint32_t block,
                           const Policy& policy, const Vector& theta);

struct TrialSummary {
    int index = 0;
    std::string kind;  ///< random, untrained or learned
    double real_return = std::numeric_limits<double>::quiet_NaN();
    double real_mean_cost = std::numeric_limits<double>::quiet_NaN();
    double eval_mean_return = std::numeric_limits<double>::quiet_NaN();
    double eval_se_return = std::numeric_limits<double>::quiet_NaN();
    double eval_mean_cost = std::numeric_limits<double>::quiet_NaN();
    double predicted_return = std::numeric_limits<double>::quiet_NaN();
    Eigen::Index data_points = 0;
};

struct OptLogEntry {
    int trial = 0;
    OptLogRow row;
    double predicted_return = 0.0;
    double predicted_se = 0.0;
    bool skipped = false;
};

struct RunResult {
    ExperimentConfig config;
    std::vector<TrialSummary> trials;
    std::vector<OptLogEntry> optlog;
    std::vector<TrialRecord> real_trials;
    Matrix data_inputs;
    Matrix data_targets;
    double final_eval_mean_cost = std::numeric_limits<double>::quiet_NaN();
    double final_eval_mean_return = std::numeric_limits<double>::quiet_NaN();
    bool success = false;
    bool aborted = false;
    std::string abort_reason;
    Flags flags;
    double wall_clock_seconds = 0.0;
    std::optional<GpModel> model;
    std::optional<PolicyParams> policy;

    int exit_code() const;
};

/// The outer loop: random trials, then {retrain GP, optimize, real trial,
/// evaluate} per learned trial. With a non-empty `out_dir`, a checkpoint is
/// written after every learned trial.
RunResult learn(const ExperimentConfig& cfg, const std::string& out_dir = "");

/// result.json, trials.csv, optlog.csv, trial_log.csv, dataset.csv,
/// checkpoint.json and timing.json.
void write_learn_outputs(const RunResult& result, const std::string& out_dir);

struct Checkpoint {
    GpModel model;
    PolicyParams policy;
};

nlohmann::json checkpoint_json(const GpModel& model, const PolicyParams& policy);
Checkpoint load_checkpoint(const std::string& path);

/// Unit random direction over the trainable coordinates.
Vector landscape_direction(const Policy& policy, std::uint64_t seed);

struct LandscapeEstimate {
    Estimator estimator = Estimator::rp;
    double projected_grad = 0.0;
    double projected_se = 0.0;
    double trace_variance = 0.0;
};

struct LandscapeRow {
    double delta = 0.0;
    double mean_return = 0.0;
    double se_return = 0.0;
    std::vector<LandscapeEstimate> estimates;
};

struct LandscapeTable {
    std::vector<LandscapeRow> rows;
    Vector direction;
    Flags flags;

    void write_csv(std::ostream& os) const;
};

/// Every grid point reuses the same fixed rollout seed.
LandscapeTable landscape_scan(const ExperimentConfig& cfg, const GpModel& model, const PolicyParams& policy);

struct VarianceRow {
    Estimator estimator = Estimator::rp;
    Eigen::Index particles = 0;
    double variance = 0.0;  ///< trace of the covariance of the estimate across repetitions
    double mean_norm = 0.0;
};

struct VarianceTable {
    std::vector<VarianceRow> rows;
    Flags flags;

    void write_csv(std::ostream& os) const;
    double variance(Estimator e, Eigen::Index particles) const;
};

VarianceTable variance_scan(const ExperimentConfig& cfg, const GpModel& model, const PolicyParams& policy);

/// Train the GP on a dataset CSV (dataset.csv from learn), or on fresh random
/// trials when `cfg.data` is empty.
GpModel gp_fit(const ExperimentConfig& cfg, Flags* flags = nullptr);

void write_dataset_csv(std::ostream& os, const Matrix& inputs, const Matrix& targets);
void read_dataset_csv(std::istream& is, Matrix& inputs, Matrix& targets);

/// Result document shared by every command.
nlohmann::json result_document(const std::string& command, const ExperimentConfig& cfg, const Flags& flags,
                               nlohmann::json summary);

}  // namespace pipps
