#include "pipps/harness.hpp"

#include "pipps/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace pipps {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix psd_sqrt(const Matrix& cov) {
    const Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

PolicyInitInfo init_info(const ExperimentConfig& cfg) {
    PolicyInitInfo info =
        cartpole_policy_init_info(cfg.init.mean, cfg.init.covariance.diagonal().cwiseMax(0.0).cwiseSqrt());
    info.initial_region_fraction = cfg.policy_init.initial_region_fraction;
    info.weight_std = cfg.policy_init.weight_std;
    return info;
}

/// Coordinates used by the parameter-subset variance strategy: the output
/// weights of an RBF policy, everything for a linear one.
Vector subset_mask(const Policy& policy) {
    Vector mask = Vector::Zero(policy.param_count());
    const PolicyConfig& pc = policy.config();
    if (pc.kind == PolicyKind::rbf) {
        mask.tail(pc.basis_count * pc.action_dim).setOnes();
    } else {
        mask.setOnes();
    }
    return mask;
}

GradEstimate run_estimator(Estimator e, const TrajectoryRecord& tape, const TpOptions& tp) {
    if (e == Estimator::tp) {
        return total_propagation(tape, tp);
    }
    if (e == Estimator::gr || e == Estimator::gr_fs) {
        return gr_rp_gradient(tape);
    }
    return estimate_gradient(e, tape);
}

bool needs_resampling(Estimator e) { return e == Estimator::gr || e == Estimator::gr_fs; }

std::uint32_t eval_trial_id(std::uint32_t block, int repeat) {
    return ((block + 1u) << 16) | static_cast<std::uint32_t>(repeat);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path);
    if (!os) {
        throw std::runtime_error("cannot write '" + path.string() + "'");
    }
    os << std::setprecision(17);
    return os;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os = open_out(path);
    os << j.dump(2) << '\n';
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

double TrialRecord::total_cost() const {
    double s = 0.0;
    for (double c : costs) {
        s += c;
    }
    return s;
}

double TrialRecord::mean_cost() const { return costs.empty() ? kNaN : total_cost() / static_cast<double>(costs.size()); }

TrialRecord run_trial(const ExperimentConfig& cfg, const CounterRng& rng, std::uint32_t id, const Policy* policy,
                      const Vector* theta) {
    require((policy == nullptr) == (theta == nullptr), "run_trial: policy and theta go together");
    const Eigen::Index horizon = cfg.rollout.horizon;
    TrialRecord rec;
    rec.id = id;
    Vector z(4);
    for (int d = 0; d < 4; ++d) {
        z[d] = rng.normal(Stream::initial_state, id, static_cast<std::uint32_t>(d), 0);
    }
    CartPoleState x = cfg.init.mean + psd_sqrt(cfg.init.covariance) * z;
    for (Eigen::Index t = 0; t <= horizon; ++t) {
        const auto step = static_cast<std::uint32_t>(t);
        const CartPoleState y = observe(x, cfg.noise, rng, id, step);
        rec.states.push_back(x);
        rec.observations.push_back(y);
        rec.costs.push_back(cost(x, cfg.cost));
        if (t == horizon) {
            break;
        }
        double u = 0.0;
        if (policy == nullptr) {
            u = cfg.env.max_force * (2.0 * rng.uniform(Stream::action, id, step, 0) - 1.0);
        } else {
            u = policy->act(*theta, y)[0];
        }
        rec.actions.push_back(u);
        x = step_dynamics(x, u, cfg.env);
    }
    return rec;
}

void append_transitions(const TrialRecord& trial, Matrix& inputs, Matrix& targets) {
    const auto n = static_cast<Eigen::Index>(trial.actions.size());
    const Eigen::Index start = inputs.rows();
    inputs.conservativeResize(start + n, 5);
    targets.conservativeResize(start + n, 4);
    for (Eigen::Index t = 0; t < n; ++t) {
        inputs.row(start + t) << trial.observations[t].transpose(), trial.actions[t];
        targets.row(start + t) = (trial.observations[t + 1] - trial.observations[t]).transpose();
    }
}

Evaluation evaluate_policy(const ExperimentConfig& cfg, const CounterRng& rng, std::uint32_t block,
                           const Policy& policy, const Vector& theta) {
    const int n = cfg.trials.eval_repeats;
    std::vector<double> totals(static_cast<std::size_t>(n));
    std::vector<double> means(static_cast<std::size_t>(n));
    parallel_for(n, cfg.workers, 1, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
        for (std::ptrdiff_t r = b; r < e; ++r) {
            const TrialRecord rec = run_trial(cfg, rng, eval_trial_id(block, static_cast<int>(r)), &policy, &theta);
            totals[static_cast<std::size_t>(r)] = rec.total_cost();
            means[static_cast<std::size_t>(r)] = rec.mean_cost();
        }
    });
    const Eigen::Map<const Vector> g(totals.data(), n);
    Evaluation ev;
    ev.mean_return = g.mean();
    ev.se_return = n > 1 ? std::sqrt((g.array() - ev.mean_return).square().sum() / (n - 1) / n) : 0.0;
    ev.mean_cost = Eigen::Map<const Vector>(means.data(), n).mean();
    return ev;
}

int RunResult::exit_code() const { return aborted || failure_flags(flags).any() ? 2 : 0; }

nlohmann::json checkpoint_json(const GpModel& model, const PolicyParams& policy) {
    return json{{"kind", "checkpoint"}, {"model", model.to_json()}, {"policy", policy.to_json()}};
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open checkpoint '" + path + "'");
    }
    try {
        const json j = json::parse(in);
        if (j.value("kind", "") != "checkpoint" || j.at("model").is_null()) {
            throw ConfigError("'" + path + "' is not a checkpoint with a trained model");
        }
        return Checkpoint{GpModel::from_json(j.at("model")), PolicyParams::from_json(j.at("policy"))};
    } catch (const json::exception& e) {
        throw ConfigError("checkpoint '" + path + "' is malformed: " + e.what());
    } catch (const ContractError& e) {
        throw ConfigError("checkpoint '" + path + "' is malformed: " + e.what());
    }
}

RunResult learn(const ExperimentConfig& cfg, const std::string& out_dir) {
    const auto start = std::chrono::steady_clock::now();
    RunResult res;
    res.config = cfg;
    const CounterRng master(cfg.seed);
    const CounterRng env_rng(master.derive(1));
    const Policy policy(cfg.policy);
    const CartPoleCost cost_fn(cfg.cost);
    res.data_inputs.resize(0, 5);
    res.data_targets.resize(0, 4);

    auto add_real = [&](const TrialRecord& rec, TrialSummary& s) {
        append_transitions(rec, res.data_inputs, res.data_targets);
        s.real_return = rec.total_cost();
        s.real_mean_cost = rec.mean_cost();
        s.data_points = res.data_inputs.rows();
        res.real_trials.push_back(rec);
    };
    auto set_eval = [&](const Evaluation& ev, TrialSummary& s) {
        s.eval_mean_return = ev.mean_return;
        s.eval_se_return = ev.se_return;
        s.eval_mean_cost = ev.mean_cost;
        res.final_eval_mean_return = ev.mean_return;
        res.final_eval_mean_cost = ev.mean_cost;
    };

    for (int r = 0; r < cfg.trials.random_trials; ++r) {
        TrialSummary s;
        s.index = r;
        s.kind = "random";
        add_real(run_trial(cfg, env_rng, static_cast<std::uint32_t>(r)), s);
        res.trials.push_back(s);
    }

    Vector theta = policy.initial_params(init_info(cfg), CounterRng(master.derive(2)));
    const Vector mask = policy.trainable_mask();
    {
        TrialSummary s;
        s.index = -1;
        s.kind = "untrained";
        s.data_points = res.data_inputs.rows();
        set_eval(evaluate_policy(cfg, env_rng, 0, policy, theta), s);
        res.trials.push_back(s);
    }
    res.policy = PolicyParams{cfg.policy, theta};

    for (int j = 0; j < cfg.trials.learned_trials; ++j) {
        const int index = cfg.trials.random_trials + j;
        GpTrainOptions gpo = cfg.gp;
        gpo.seed = master.derive(100 + static_cast<std::uint64_t>(index));
        Flags train_flags;
        GpModel model = train_hyperparams(GpModel(res.data_inputs, res.data_targets), gpo, &train_flags);
        res.flags.merge(train_flags);
        if (train_flags.has(Flag::training_diverged)) {
            res.aborted = true;
            res.abort_reason = "GP training failed before trial " + std::to_string(index);
            break;
        }

        RolloutConfig rc = cfg.rollout;
        rc.mode = rollout_mode_for(cfg.estimator);
        rc.seed = master.derive(1000 + static_cast<std::uint64_t>(index));
        rc.workers = cfg.workers;
        rc.record_jacobians = true;
        TpVarianceMemory memory;
        memory.decay = cfg.tp.moving_average_decay;
        TpOptions tp;
        tp.biw = cfg.tp.biw;
        tp.strategy = cfg.tp.strategy;
        tp.subset_mask = subset_mask(policy);
        tp.memory = &memory;

        OptState opt = OptState::create(policy.param_count(), cfg.optimizer);
        double predicted = kNaN;
        for (int it = 0; it < cfg.trials.evals_per_trial; ++it) {
            const TrajectoryRecord tape =
                rollout_batch(model, policy, cost_fn, theta, rc, cfg.init, static_cast<std::uint64_t>(it));
            const GradEstimate g = run_estimator(cfg.estimator, tape, tp);
            res.flags.merge(g.flags);
            OptLogEntry entry;
            entry.trial = index;
            entry.predicted_return = tape.mean_return();
            entry.predicted_se = tape.return_standard_error();
            if (g.infinite_variance || !g.mean.allFinite()) {
                entry.skipped = true;
                entry.row.step = opt.step;
                res.flags.raise(Flag::non_finite_gradient);
            } else {
                entry.row = sgd_step(opt, theta, g, &mask);
            }
            predicted = entry.predicted_return;
            res.optlog.push_back(entry);
        }

        TrialSummary s;
        s.index = index;
        s.kind = "learned";
        s.predicted_return = predicted;
        add_real(run_trial(cfg, env_rng, static_cast<std::uint32_t>(index), &policy, &theta), s);
        set_eval(evaluate_policy(cfg, env_rng, static_cast<std::uint32_t>(j + 1), policy, theta), s);
        res.trials.push_back(s);
        res.policy = PolicyParams{cfg.policy, theta};
        res.model = std::move(model);

        if (!out_dir.empty()) {
            const fs::path dir = fs::path(out_dir) / "checkpoints";
            fs::create_directories(dir);
            std::ostringstream name;
            name << "trial_" << std::setw(3) << std::setfill('0') << index << ".json";
            write_json(dir / name.str(), checkpoint_json(*res.model, *res.policy));
        }
    }

    res.success = res.final_eval_mean_cost < cfg.trials.success_threshold;
    res.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

void write_learn_outputs(const RunResult& result, const std::string& out_dir) {
    const fs::path dir(out_dir);
    fs::create_directories(dir);

    json trials = json::array();
    for (const TrialSummary& s : result.trials) {
        trials.push_back({{"trial", s.index},
                          {"kind", s.kind},
                          {"return", num(s.real_return)},
                          {"mean_cost", num(s.real_mean_cost)},
                          {"eval_mean_return", num(s.eval_mean_return)},
                          {"eval_se_return", num(s.eval_se_return)},
                          {"eval_mean_cost", num(s.eval_mean_cost)},
                          {"predicted_return", num(s.predicted_return)},
                          {"data_points", s.data_points}});
    }
    json summary{{"success", result.success},
                 {"success_threshold", result.config.trials.success_threshold},
                 {"final_eval_mean_cost", num(result.final_eval_mean_cost)},
                 {"final_eval_mean_return", num(result.final_eval_mean_return)},
                 {"aborted", result.aborted},
                 {"abort_reason", result.abort_reason},
                 {"data_points", result.data_inputs.rows()},
                 {"optimizer_steps", result.optlog.size()},
                 {"exit_code", result.exit_code()},
                 {"trials", trials}};
    write_json(dir / "result.json", result_document("learn", result.config, result.flags, summary));
    write_json(dir / "timing.json",
               json{{"wall_clock_seconds", result.wall_clock_seconds}, {"workers", result.config.workers}});

    {
        std::ofstream os = open_out(dir / "trials.csv");
        os << "trial,kind,return,mean_cost,eval_mean_return,eval_se_return,eval_mean_cost,predicted_return,data_points\n";
        for (const TrialSummary& s : result.trials) {
            os << s.index << ',' << s.kind << ',' << s.real_return << ',' << s.real_mean_cost << ','
               << s.eval_mean_return << ',' << s.eval_se_return << ',' << s.eval_mean_cost << ','
               << s.predicted_return << ',' << s.data_points << '\n';
        }
    }
    {
        std::ofstream os = open_out(dir / "optlog.csv");
        os << "trial,step,grad_norm,mean_variance,momentum_norm,predicted_return,predicted_se,skipped\n";
        for (const OptLogEntry& e : result.optlog) {
            os << e.trial << ',' << e.row.step << ',' << e.row.grad_norm << ',' << e.row.mean_variance << ','
               << e.row.momentum_norm << ',' << e.predicted_return << ',' << e.predicted_se << ','
               << (e.skipped ? 1 : 0) << '\n';
        }
    }
    {
        std::ofstream os = open_out(dir / "trial_log.csv");
        os << "trial,t,s,beta,s_dot,beta_dot,u,cost\n";
        for (const TrialRecord& rec : result.real_trials) {
            for (std::size_t t = 0; t < rec.states.size(); ++t) {
                const CartPoleState& x = rec.states[t];
                os << rec.id << ',' << t << ',' << x[0] << ',' << x[1] << ',' << x[2] << ',' << x[3] << ','
                   << (t < rec.actions.size() ? rec.actions[t] : 0.0) << ',' << rec.costs[t] << '\n';
            }
        }
    }
    {
        std::ofstream os = open_out(dir / "dataset.csv");
        write_dataset_csv(os, result.data_inputs, result.data_targets);
    }
    if (result.policy) {
        json ck{{"kind", "checkpoint"},
                {"model", result.model ? result.model->to_json() : json(nullptr)},
                {"policy", result.policy->to_json()}};
        write_json(dir / "checkpoint.json", ck);
    }
}

Vector landscape_direction(const Policy& policy, std::uint64_t seed) {
    const CounterRng rng(seed);
    const Vector mask = policy.trainable_mask();
    Vector d(policy.param_count());
    for (Eigen::Index k = 0; k < d.size(); ++k) {
        d[k] = mask[k] * rng.normal(Stream::misc, static_cast<std::uint32_t>(k), 0xd1u, 0);
    }
    const double n = d.norm();
    require(n > 0.0, "landscape_direction: no trainable coordinates");
    return d / n;
}

LandscapeTable landscape_scan(const ExperimentConfig& cfg, const GpModel& model, const PolicyParams& params) {
    const LandscapeSettings& ls = cfg.landscape;
    const Policy policy(params.config);
    const CartPoleCost cost_fn(cfg.cost);
    LandscapeTable table;
    table.direction = landscape_direction(policy, ls.direction_seed);

    RolloutConfig rc = cfg.rollout;
    rc.particles = ls.particles;
    rc.seed = ls.rollout_seed;
    rc.workers = cfg.workers;
    TpOptions tp;
    tp.biw = cfg.tp.biw;
    const bool any_gr = std::any_of(ls.estimators.begin(), ls.estimators.end(), needs_resampling);

    const int n = ls.grid_points;
    for (int k = 0; k < n; ++k) {
        LandscapeRow row;
        row.delta = n == 1 ? 0.0 : ls.range * static_cast<double>(2 * k - (n - 1)) / static_cast<double>(n - 1);
        const Vector theta = params.theta + row.delta * table.direction;
        rc.mode = RolloutMode::fixed_seed;
        const TrajectoryRecord tape = rollout_batch(model, policy, cost_fn, theta, rc, cfg.init);
        table.flags.merge(tape.flags);
        row.mean_return = tape.mean_return();
        row.se_return = tape.return_standard_error();
        std::optional<TrajectoryRecord> gr_tape;
        if (any_gr) {
            rc.mode = RolloutMode::gaussian_resample_fixed_seed;
            gr_tape = rollout_batch(model, policy, cost_fn, theta, rc, cfg.init);
        }
        for (Estimator e : ls.estimators) {
            const GradEstimate g = run_estimator(e, needs_resampling(e) ? *gr_tape : tape, tp);
            table.flags.merge(g.flags);
            LandscapeEstimate le;
            le.estimator = e;
            le.projected_grad = g.mean.dot(table.direction);
            le.projected_se = std::sqrt(g.projected_variance(table.direction) / static_cast<double>(ls.particles));
            le.trace_variance = g.trace_variance();
            row.estimates.push_back(le);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void LandscapeTable::write_csv(std::ostream& os) const {
    os << std::setprecision(17) << "delta,mean_return,se_return";
    if (!rows.empty()) {
        for (const LandscapeEstimate& e : rows.front().estimates) {
            const std::string name = to_string(e.estimator);
            os << ',' << name << "_grad," << name << "_se," << name << "_var";
        }
    }
    os << '\n';
    for (const LandscapeRow& r : rows) {
        os << r.delta << ',' << r.mean_return << ',' << r.se_return;
        for (const LandscapeEstimate& e : r.estimates) {
            os << ',' << e.projected_grad << ',' << e.projected_se << ',' << e.trace_variance;
        }
        os << '\n';
    }
}

VarianceTable variance_scan(const ExperimentConfig& cfg, const GpModel& model, const PolicyParams& params) {
    const GradvarSettings& gs = cfg.gradvar;
    const Policy policy(params.config);
    const CartPoleCost cost_fn(cfg.cost);
    const auto n_est = gs.estimators.size();
    const bool any_gr = std::any_of(gs.estimators.begin(), gs.estimators.end(), needs_resampling);
    const int reps = gs.repetitions;
    TpOptions tp;
    tp.biw = cfg.tp.biw;
    const CounterRng seeds(gs.rollout_seed);

    VarianceTable table;
    for (Eigen::Index p : gs.particles) {
        std::vector<Matrix> means(n_est, Matrix(policy.param_count(), reps));
        std::vector<Flags> flags(static_cast<std::size_t>(reps));
        parallel_for(reps, cfg.workers, 1, [&](std::ptrdiff_t b, std::ptrdiff_t e) {
            for (std::ptrdiff_t r = b; r < e; ++r) {
                RolloutConfig rc = cfg.rollout;
                rc.particles = p;
                rc.seed = seeds.derive(static_cast<std::uint64_t>(p));
                rc.workers = 1;
                rc.mode = RolloutMode::plain;
                const auto it = static_cast<std::uint64_t>(r);
                const TrajectoryRecord tape = rollout_batch(model, policy, cost_fn, params.theta, rc, cfg.init, it);
                std::optional<TrajectoryRecord> gr_tape;
                if (any_gr) {
                    rc.mode = RolloutMode::gaussian_resample;
                    gr_tape = rollout_batch(model, policy, cost_fn, params.theta, rc, cfg.init, it);
                }
                Flags& f = flags[static_cast<std::size_t>(r)];
                f.merge(tape.flags);
                for (std::size_t k = 0; k < n_est; ++k) {
                    const Estimator est = gs.estimators[k];
                    const GradEstimate g = run_estimator(est, needs_resampling(est) ? *gr_tape : tape, tp);
                    f.merge(g.flags);
                    means[k].col(r) = g.mean;
                }
            }
        });
        for (const Flags& f : flags) {
            table.flags.merge(f);
        }
        for (std::size_t k = 0; k < n_est; ++k) {
            const Matrix& m = means[k];
            const Vector centre = m.rowwise().mean();
            VarianceRow row;
            row.estimator = gs.estimators[k];
            row.particles = p;
            row.variance = (m.colwise() - centre).squaredNorm() / static_cast<double>(reps - 1);
            row.mean_norm = centre.norm();
            table.rows.push_back(row);
        }
    }
    return table;
}

void VarianceTable::write_csv(std::ostream& os) const {
    os << std::setprecision(17) << "estimator,P,variance,mean_norm\n";
    for (const VarianceRow& r : rows) {
        os << to_string(r.estimator) << ',' << r.particles << ',' << r.variance << ',' << r.mean_norm << '\n';
    }
}

double VarianceTable::variance(Estimator e, Eigen::Index particles) const {
    for (const VarianceRow& r : rows) {
        if (r.estimator == e && r.particles == particles) {
            return r.variance;
        }
    }
    throw ContractError("VarianceTable: no row for that estimator and particle count");
}

void write_dataset_csv(std::ostream& os, const Matrix& inputs, const Matrix& targets) {
    require(inputs.rows() == targets.rows(), "write_dataset_csv: row counts differ");
    os << std::setprecision(17);
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
        os << (c == 0 ? "" : ",") << "in" << c;
    }
    for (Eigen::Index c = 0; c < targets.cols(); ++c) {
        os << ",out" << c;
    }
    os << '\n';
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
            os << (c == 0 ? "" : ",") << inputs(r, c);
        }
        for (Eigen::Index c = 0; c < targets.cols(); ++c) {
            os << ',' << targets(r, c);
        }
        os << '\n';
    }
}

void read_dataset_csv(std::istream& is, Matrix& inputs, Matrix& targets) {
    std::string line;
    if (!std::getline(is, line)) {
        throw ConfigError("dataset: empty file");
    }
    Eigen::Index n_in = 0;
    Eigen::Index n_out = 0;
    {
        std::istringstream hs(line);
        for (std::string cell; std::getline(hs, cell, ',');) {
            if (cell.rfind("in", 0) == 0) {
                ++n_in;
            } else if (cell.rfind("out", 0) == 0) {
                ++n_out;
            } else {
                throw ConfigError("dataset: unexpected column '" + cell + "'");
            }
        }
    }
    if (n_in == 0 || n_out == 0) {
        throw ConfigError("dataset: need in* and out* columns");
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        std::istringstream ls(line);
        for (std::string cell; std::getline(ls, cell, ',');) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("dataset: bad number '" + cell + "'");
            }
        }
        if (static_cast<Eigen::Index>(row.size()) != n_in + n_out) {
            throw ConfigError("dataset: row with the wrong number of columns");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ConfigError("dataset: no rows");
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    inputs.resize(n, n_in);
    targets.resize(n, n_out);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n_in; ++c) {
            inputs(r, c) = rows[r][c];
        }
        for (Eigen::Index c = 0; c < n_out; ++c) {
            targets(r, c) = rows[r][n_in + c];
        }
    }
}

GpModel gp_fit(const ExperimentConfig& cfg, Flags* flags) {
    const CounterRng master(cfg.seed);
    Matrix inputs(0, 5);
    Matrix targets(0, 4);
    if (!cfg.data.empty()) {
        std::ifstream in(cfg.data);
        if (!in) {
            throw ConfigError("cannot open dataset '" + cfg.data + "'");
        }
        read_dataset_csv(in, inputs, targets);
    } else {
        const CounterRng env_rng(master.derive(1));
        for (int r = 0; r < cfg.trials.random_trials; ++r) {
            append_transitions(run_trial(cfg, env_rng, static_cast<std::uint32_t>(r)), inputs, targets);
        }
    }
    GpTrainOptions gpo = cfg.gp;
    gpo.seed = master.derive(100);
    return train_hyperparams(GpModel(inputs, targets), gpo, flags);
}

}  // namespace pipps
