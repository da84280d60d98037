#include "pipps/harness.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace pipps {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) {
        throw ConfigError(where + ": expected an object");
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError(where + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read(const json& j, const std::string& where, const char* key, T& out) {
    if (!j.contains(key)) {
        return;
    }
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

template <int N>
void read_vec(const json& j, const std::string& where, const char* key, Eigen::Matrix<double, N, 1>& out) {
    if (!j.contains(key)) {
        return;
    }
    std::vector<double> v;
    read(j, where, key, v);
    if (static_cast<int>(v.size()) != N) {
        throw ConfigError(where + "." + key + ": expected " + std::to_string(N) + " numbers");
    }
    out = Eigen::Map<const Eigen::Matrix<double, N, 1>>(v.data());
}

void read_square(const json& j, const std::string& where, const char* key, Eigen::Index n, Matrix& out) {
    if (!j.contains(key)) {
        return;
    }
    std::vector<std::vector<double>> rows;
    read(j, where, key, rows);
    if (static_cast<Eigen::Index>(rows.size()) != n) {
        throw ConfigError(where + "." + key + ": expected " + std::to_string(n) + " rows");
    }
    out.resize(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != n) {
            throw ConfigError(where + "." + key + ": expected " + std::to_string(n) + " columns");
        }
        for (Eigen::Index c = 0; c < n; ++c) {
            out(r, c) = rows[r][c];
        }
    }
}

template <typename E, typename Parse>
void read_enum(const json& j, const std::string& where, const char* key, E& out, Parse parse) {
    if (!j.contains(key)) {
        return;
    }
    std::string s;
    read(j, where, key, s);
    try {
        out = parse(s);
    } catch (const ContractError& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

void read_estimators(const json& j, const std::string& where, std::vector<Estimator>& out) {
    if (!j.contains("estimators")) {
        return;
    }
    std::vector<std::string> names;
    read(j, where, "estimators", names);
    out.clear();
    for (const auto& n : names) {
        try {
            out.push_back(estimator_from_string(n));
        } catch (const ContractError& e) {
            throw ConfigError(where + ".estimators: " + e.what());
        }
    }
}

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = m(r, c);
        }
        rows.push_back(row);
    }
    return rows;
}

template <typename V>
std::vector<double> vec(const V& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

std::vector<std::string> estimator_names(const std::vector<Estimator>& es) {
    std::vector<std::string> out;
    for (auto e : es) {
        out.push_back(to_string(e));
    }
    return out;
}

std::string to_string(VarianceStrategy s) {
    switch (s) {
        case VarianceStrategy::sample_trace:
            return "sample_trace";
        case VarianceStrategy::parameter_subset:
            return "parameter_subset";
        case VarianceStrategy::moving_average:
            return "moving_average";
    }
    return "sample_trace";
}

VarianceStrategy variance_strategy_from_string(const std::string& s) {
    for (auto v : {VarianceStrategy::sample_trace, VarianceStrategy::parameter_subset, VarianceStrategy::moving_average}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw ContractError("unknown variance strategy '" + s + "'");
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["env"] = {{"cart_mass", env.cart_mass},       {"pole_mass", env.pole_mass},
                {"pole_length", env.pole_length},   {"friction", env.friction},
                {"gravity", env.gravity},           {"max_force", env.max_force},
                {"control_period", env.control_period}, {"substeps", env.substeps}};
    j["noise"] = {{"multiplier", noise.multiplier}, {"base_std", vec(noise.base_std)}};
    j["cost"] = {{"variant", pipps::to_string(cost.variant)},
                 {"target", vec(cost.target)},
                 {"weights", matrix_json(cost.weights)},
                 {"tip_lengthscale", cost.tip_lengthscale}};
    j["init"] = {{"mean", vec(init.mean)}, {"covariance", matrix_json(init.covariance)}};
    j["policy"] = {{"kind", pipps::to_string(policy.kind)},
                   {"basis_count", policy.basis_count},
                   {"train_centers", policy.train_centers},
                   {"train_lengthscales", policy.train_lengthscales},
                   {"initial_region_fraction", policy_init.initial_region_fraction},
                   {"weight_std", policy_init.weight_std}};
    j["rollout"] = {{"particles", rollout.particles},
                    {"horizon", rollout.horizon},
                    {"drop_model_uncertainty", rollout.drop_model_uncertainty},
                    {"noise_variance_multiplier", rollout.noise_variance_multiplier}};
    j["estimator"] = pipps::to_string(estimator);
    j["tp"] = {{"biw", tp.biw},
               {"variance_strategy", to_string(tp.strategy)},
               {"moving_average_decay", tp.moving_average_decay}};
    j["optimizer"] = {{"learning_rate", optimizer.learning_rate},
                      {"momentum", optimizer.momentum},
                      {"delta", optimizer.delta}};
    j["trials"] = {{"random", trials.random_trials},
                   {"learned", trials.learned_trials},
                   {"evals_per_trial", trials.evals_per_trial},
                   {"eval_repeats", trials.eval_repeats},
                   {"success_threshold", trials.success_threshold}};
    j["gp"] = {{"restarts", gp.restarts},
               {"max_iterations", gp.max_iterations},
               {"gradient_tolerance", gp.gradient_tolerance},
               {"min_noise_ratio", gp.min_noise_ratio}};
    j["landscape"] = {{"grid_points", landscape.grid_points},
                      {"range", landscape.range},
                      {"direction_seed", landscape.direction_seed},
                      {"rollout_seed", landscape.rollout_seed},
                      {"particles", landscape.particles},
                      {"estimators", estimator_names(landscape.estimators)}};
    j["gradvar"] = {{"particles", gradvar.particles},
                    {"repetitions", gradvar.repetitions},
                    {"rollout_seed", gradvar.rollout_seed},
                    {"estimators", estimator_names(gradvar.estimators)}};
    j["checkpoint"] = checkpoint;
    j["data"] = data;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    check_keys(j, "config", {"seed", "workers", "env", "noise", "cost", "init", "policy", "rollout", "estimator", "tp",
                             "optimizer", "trials", "gp", "landscape", "gradvar", "checkpoint", "data"});
    read(j, "config", "seed", c.seed);
    read(j, "config", "workers", c.workers);
    read(j, "config", "checkpoint", c.checkpoint);
    read(j, "config", "data", c.data);
    read_enum(j, "config", "estimator", c.estimator, estimator_from_string);

    if (j.contains("env")) {
        const json& e = j["env"];
        check_keys(e, "env", {"cart_mass", "pole_mass", "pole_length", "friction", "gravity", "max_force",
                              "control_period", "substeps"});
        read(e, "env", "cart_mass", c.env.cart_mass);
        read(e, "env", "pole_mass", c.env.pole_mass);
        read(e, "env", "pole_length", c.env.pole_length);
        read(e, "env", "friction", c.env.friction);
        read(e, "env", "gravity", c.env.gravity);
        read(e, "env", "max_force", c.env.max_force);
        read(e, "env", "control_period", c.env.control_period);
        read(e, "env", "substeps", c.env.substeps);
    }
    if (j.contains("noise")) {
        const json& n = j["noise"];
        check_keys(n, "noise", {"multiplier", "base_std"});
        read(n, "noise", "multiplier", c.noise.multiplier);
        read_vec(n, "noise", "base_std", c.noise.base_std);
    }
    if (j.contains("cost")) {
        const json& n = j["cost"];
        check_keys(n, "cost", {"variant", "target", "weights", "tip_lengthscale"});
        read_enum(n, "cost", "variant", c.cost.variant, cost_variant_from_string);
        read_vec(n, "cost", "target", c.cost.target);
        Matrix w = c.cost.weights;
        read_square(n, "cost", "weights", 4, w);
        c.cost.weights = w;
        read(n, "cost", "tip_lengthscale", c.cost.tip_lengthscale);
    }
    if (j.contains("init")) {
        const json& n = j["init"];
        check_keys(n, "init", {"mean", "covariance"});
        Eigen::Vector4d m = c.init.mean;
        read_vec(n, "init", "mean", m);
        c.init.mean = m;
        read_square(n, "init", "covariance", 4, c.init.covariance);
    }
    if (j.contains("policy")) {
        const json& n = j["policy"];
        check_keys(n, "policy", {"kind", "basis_count", "train_centers", "train_lengthscales",
                                 "initial_region_fraction", "weight_std"});
        read_enum(n, "policy", "kind", c.policy.kind, policy_kind_from_string);
        read(n, "policy", "basis_count", c.policy.basis_count);
        read(n, "policy", "train_centers", c.policy.train_centers);
        read(n, "policy", "train_lengthscales", c.policy.train_lengthscales);
        read(n, "policy", "initial_region_fraction", c.policy_init.initial_region_fraction);
        read(n, "policy", "weight_std", c.policy_init.weight_std);
    }
    if (j.contains("rollout")) {
        const json& n = j["rollout"];
        check_keys(n, "rollout", {"particles", "horizon", "drop_model_uncertainty", "noise_variance_multiplier"});
        read(n, "rollout", "particles", c.rollout.particles);
        read(n, "rollout", "horizon", c.rollout.horizon);
        read(n, "rollout", "drop_model_uncertainty", c.rollout.drop_model_uncertainty);
        read(n, "rollout", "noise_variance_multiplier", c.rollout.noise_variance_multiplier);
    }
    if (j.contains("tp")) {
        const json& n = j["tp"];
        check_keys(n, "tp", {"biw", "variance_strategy", "moving_average_decay"});
        read(n, "tp", "biw", c.tp.biw);
        read_enum(n, "tp", "variance_strategy", c.tp.strategy, variance_strategy_from_string);
        read(n, "tp", "moving_average_decay", c.tp.moving_average_decay);
    }
    if (j.contains("optimizer")) {
        const json& n = j["optimizer"];
        check_keys(n, "optimizer", {"learning_rate", "momentum", "delta"});
        read(n, "optimizer", "learning_rate", c.optimizer.learning_rate);
        read(n, "optimizer", "momentum", c.optimizer.momentum);
        read(n, "optimizer", "delta", c.optimizer.delta);
    }
    if (j.contains("trials")) {
        const json& n = j["trials"];
        check_keys(n, "trials", {"random", "learned", "evals_per_trial", "eval_repeats", "success_threshold"});
        read(n, "trials", "random", c.trials.random_trials);
        read(n, "trials", "learned", c.trials.learned_trials);
        read(n, "trials", "evals_per_trial", c.trials.evals_per_trial);
        read(n, "trials", "eval_repeats", c.trials.eval_repeats);
        read(n, "trials", "success_threshold", c.trials.success_threshold);
    }
    if (j.contains("gp")) {
        const json& n = j["gp"];
        check_keys(n, "gp", {"restarts", "max_iterations", "gradient_tolerance", "min_noise_ratio"});
        read(n, "gp", "restarts", c.gp.restarts);
        read(n, "gp", "max_iterations", c.gp.max_iterations);
        read(n, "gp", "gradient_tolerance", c.gp.gradient_tolerance);
        read(n, "gp", "min_noise_ratio", c.gp.min_noise_ratio);
    }
    if (j.contains("landscape")) {
        const json& n = j["landscape"];
        check_keys(n, "landscape", {"grid_points", "range", "direction_seed", "rollout_seed", "particles", "estimators"});
        read(n, "landscape", "grid_points", c.landscape.grid_points);
        read(n, "landscape", "range", c.landscape.range);
        read(n, "landscape", "direction_seed", c.landscape.direction_seed);
        read(n, "landscape", "rollout_seed", c.landscape.rollout_seed);
        read(n, "landscape", "particles", c.landscape.particles);
        read_estimators(n, "landscape", c.landscape.estimators);
    }
    if (j.contains("gradvar")) {
        const json& n = j["gradvar"];
        check_keys(n, "gradvar", {"particles", "repetitions", "rollout_seed", "estimators"});
        read(n, "gradvar", "particles", c.gradvar.particles);
        read(n, "gradvar", "repetitions", c.gradvar.repetitions);
        read(n, "gradvar", "rollout_seed", c.gradvar.rollout_seed);
        read_estimators(n, "gradvar", c.gradvar.estimators);
    }
    c.cost.pole_length = c.env.pole_length;
    c.policy.max_action = c.env.max_force;
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void ExperimentConfig::validate() const {
    auto check = [](bool ok, const char* what) {
        if (!ok) {
            throw ConfigError(what);
        }
    };
    check(workers >= 1, "workers must be >= 1");
    check(env.cart_mass > 0 && env.pole_mass > 0 && env.pole_length > 0, "env masses and length must be positive");
    check(env.friction >= 0 && env.gravity > 0, "env friction must be >= 0 and gravity positive");
    check(env.max_force > 0 && env.control_period > 0 && env.substeps >= 1, "env force, period and substeps must be positive");
    check(noise.multiplier >= 0 && (noise.base_std.array() >= 0).all(), "noise levels must be >= 0");
    check(cost.tip_lengthscale > 0, "cost.tip_lengthscale must be positive");
    check(init.covariance.isApprox(init.covariance.transpose()) && init.covariance.ldlt().vectorD().minCoeff() >= 0,
          "init.covariance must be symmetric positive semi-definite");
    check(policy.kind == PolicyKind::linear || policy.basis_count >= 1, "policy.basis_count must be >= 1");
    check(policy_init.initial_region_fraction >= 0 && policy_init.initial_region_fraction <= 1,
          "policy.initial_region_fraction must lie in [0, 1]");
    check(policy_init.weight_std >= 0, "policy.weight_std must be >= 0");
    check(rollout.particles >= 2, "rollout.particles must be >= 2");
    check(rollout.horizon >= 1, "rollout.horizon must be >= 1");
    check(rollout.noise_variance_multiplier >= 0, "rollout.noise_variance_multiplier must be >= 0");
    check(tp.moving_average_decay >= 0 && tp.moving_average_decay < 1, "tp.moving_average_decay must lie in [0, 1)");
    check(optimizer.learning_rate > 0 && optimizer.momentum >= 0 && optimizer.momentum < 1 && optimizer.delta >= 0,
          "optimizer: need learning_rate > 0, momentum in [0, 1), delta >= 0");
    check(trials.random_trials >= 1, "trials.random must be >= 1");
    check(trials.learned_trials >= 0, "trials.learned must be >= 0");
    check(trials.evals_per_trial >= 1 && trials.eval_repeats >= 1, "trials.evals_per_trial and eval_repeats must be >= 1");
    check(trials.success_threshold > 0, "trials.success_threshold must be positive");
    check(gp.restarts >= 1 && gp.max_iterations >= 1 && gp.gradient_tolerance > 0 && gp.min_noise_ratio > 0,
          "gp options must be positive");
    check(landscape.grid_points >= 1 && landscape.range >= 0 && landscape.particles >= 2,
          "landscape: need grid_points >= 1, range >= 0, particles >= 2");
    check(!landscape.estimators.empty(), "landscape.estimators must not be empty");
    check(gradvar.repetitions >= 2, "gradvar.repetitions must be >= 2");
    check(!gradvar.particles.empty() && !gradvar.estimators.empty(), "gradvar particles and estimators must not be empty");
    for (auto p : gradvar.particles) {
        check(p >= 2, "gradvar.particles entries must be >= 2");
    }
}

Flags failure_flags(const Flags& flags) {
    Flags out;
    for (auto f : {Flag::non_finite_state, Flag::non_finite_gradient, Flag::training_diverged}) {
        if (flags.has(f)) {
            out.raise(f);
        }
    }
    return out;
}

json result_document(const std::string& command, const ExperimentConfig& cfg, const Flags& flags, json summary) {
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["config"] = cfg.to_json();
    j["summary"] = std::move(summary);
    j["flags"] = flags.names();
    j["failure"] = failure_flags(flags).any();
    return j;
}

}  // namespace pipps
