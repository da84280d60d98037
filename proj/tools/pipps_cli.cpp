#include "pipps/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

namespace {

using namespace pipps;
using nlohmann::json;
namespace fs = std::filesystem;

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config, "JSON experiment config (defaults when omitted)");
    cmd->add_option("--seed", args.seed, "Master seed, overrides the config");
    cmd->add_option("--workers", args.workers, "Worker threads, overrides the config");
    cmd->add_option("--out", args.out, "Output directory");
}

ExperimentConfig resolve(const CommonArgs& args) {
    ExperimentConfig cfg = args.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(args.config);
    if (args.seed) {
        cfg.seed = *args.seed;
    }
    if (args.workers) {
        cfg.workers = *args.workers;
    }
    cfg.validate();
    return cfg;
}

std::ofstream open_in(const fs::path& dir, const char* name) {
    fs::create_directories(dir);
    std::ofstream os(dir / name);
    if (!os) {
        throw std::runtime_error("cannot write '" + (dir / name).string() + "'");
    }
    os << std::setprecision(17);
    return os;
}

int finish(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg, const Flags& flags,
           json summary) {
    open_in(dir, "result.json") << result_document(command, cfg, flags, std::move(summary)).dump(2) << '\n';
    const Flags failed = failure_flags(flags);
    if (failed.any()) {
        std::cerr << command << ": numerical failure:";
        for (const auto& n : failed.names()) {
            std::cerr << ' ' << n;
        }
        std::cerr << '\n';
        return 2;
    }
    return 0;
}

int run_learn(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve(args);
    const RunResult res = learn(cfg, args.out);
    write_learn_outputs(res, args.out);
    std::cout << "learn: final mean cost " << res.final_eval_mean_cost << ", success " << std::boolalpha << res.success
              << '\n';
    if (res.aborted) {
        std::cerr << "learn: " << res.abort_reason << '\n';
    }
    return res.exit_code();
}

int run_landscape(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve(args);
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    const LandscapeTable table = landscape_scan(cfg, ck.model, ck.policy);
    std::ofstream os = open_in(args.out, "landscape.csv");
    table.write_csv(os);
    return finish(args.out, "landscape", cfg, table.flags, json{{"grid_points", table.rows.size()}});
}

int run_gradvar(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve(args);
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    const VarianceTable table = variance_scan(cfg, ck.model, ck.policy);
    std::ofstream os = open_in(args.out, "gradvar.csv");
    table.write_csv(os);
    return finish(args.out, "gradvar", cfg, table.flags, json{{"rows", table.rows.size()}});
}

int run_rollout(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve(args);
    const Checkpoint ck = load_checkpoint(cfg.checkpoint);
    const Policy policy(ck.policy.config);
    RolloutConfig rc = cfg.rollout;
    rc.mode = rollout_mode_for(cfg.estimator);
    rc.seed = cfg.seed;
    rc.workers = cfg.workers;
    const TrajectoryRecord tape = rollout_batch(ck.model, policy, CartPoleCost(cfg.cost), ck.policy.theta, rc, cfg.init);
    std::ofstream os = open_in(args.out, "tape.csv");
    tape.write_csv(os);
    return finish(args.out, "rollout", cfg, tape.flags,
                  json{{"mode", to_string(rc.mode)},
                       {"particles", tape.particles},
                       {"horizon", tape.horizon},
                       {"mean_return", tape.mean_return()},
                       {"se_return", tape.return_standard_error()}});
}

int run_gp_fit(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve(args);
    Flags flags;
    const GpModel model = gp_fit(cfg, &flags);
    open_in(args.out, "model.json") << model.to_json().dump(2) << '\n';
    json dims = json::array();
    for (Eigen::Index a = 0; a < model.output_dim(); ++a) {
        const GpHyperparams& h = model.hyperparams(a);
        const Vector l = h.lengthscales();
        dims.push_back({{"lengthscales", std::vector<double>(l.data(), l.data() + l.size())},
                        {"signal_std", h.signal_std()},
                        {"noise_std", h.noise_std()},
                        {"nlml", nlml(model, a).value}});
    }
    return finish(args.out, "gp-fit", cfg, flags, json{{"data_points", model.size()}, {"dimensions", dims}});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Particle-based model-based policy search"};
    app.require_subcommand(1);
    CommonArgs args;
    struct Command {
        const char* name;
        const char* help;
        int (*run)(const CommonArgs&);
    };
    const Command commands[] = {
        {"learn", "Run the episodic learning loop", run_learn},
        {"landscape", "Scan the objective and gradients along a random direction", run_landscape},
        {"gradvar", "Gradient variance against particle count", run_gradvar},
        {"rollout", "One particle rollout from a checkpoint", run_rollout},
        {"gp-fit", "Train the dynamics GP on a dataset", run_gp_fit},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const Command& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, args);
        subs.emplace_back(sub, &c);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    try {
        for (const auto& [sub, cmd] : subs) {
            if (sub->parsed()) {
                return cmd->run(args);
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
