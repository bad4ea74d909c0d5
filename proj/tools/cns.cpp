#include <iostream>

#include <CLI11.hpp>

#include "cns/harness.hpp"

namespace {

int report(const cns::ExperimentResult& r) {
    std::cout << r.summary.value("status", "?") << "  " << r.dir.string() << "\n";
    for (const auto& g : r.summary["gates"])
        std::cout << "  " << (g["pass"].get<bool>() ? "PASS " : "FAIL ") << g["name"].get<std::string>() << "\n";
    if (!r.summary["fault"].is_null()) std::cout << "  fault: " << r.summary["fault"].get<std::string>() << "\n";
    return r.exit_code;
}

template <class F>
int guarded(F&& f) {
    try {
        return f();
    } catch (const cns::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return cns::kExitConfigError;
    } catch (const cns::InitialDataError& e) {
        std::cerr << "config error: initial." << (e.field() == "n0" ? "n" : "c") << ": " << e.what() << "\n";
        return cns::kExitConfigError;
    } catch (const cns::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cns::kExitRuntimeFault;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cns::kExitRuntimeFault;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic chemotaxis-Navier-Stokes Galerkin simulator"};
    app.require_subcommand(1);

    std::string config, dir, ckpt;
    bool seed_stdin = false;
    std::uint64_t master = 0, index = 0;

    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config, "Experiment config (JSON)")->required();

    auto* verify = app.add_subcommand("verify", "Recompute ledger gates of a finished run directory");
    verify->add_option("dir", dir, "Run directory")->required();

    auto* resume = app.add_subcommand("resume", "Continue a single run from a checkpoint");
    resume->add_option("checkpoint", ckpt, "Checkpoint file")->required();
    resume->add_option("config", config, "Config of the interrupted run")->required();

    auto* hyp = app.add_subcommand("hypotheses", "Print the noise hypothesis report");
    hyp->add_option("config", config, "Experiment config (JSON)")->required();

    auto* seed = app.add_subcommand("seed", "Print a derived trajectory seed");
    seed->add_option("master", master, "Master seed");
    seed->add_option("index", index, "Trajectory index");
    seed->add_flag("--stdin", seed_stdin, "Read 'master index' pairs from stdin");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed())
        return guarded([&] { return report(cns::run_experiment(cns::load_config(config))); });
    if (verify->parsed()) return guarded([&] { return report(cns::verify_directory(dir)); });
    if (resume->parsed())
        return guarded([&] {
            const auto cfg = cns::load_config(config);
            return report(cns::resume_experiment(cfg, cns::detail::read_bytes(ckpt)));
        });
    if (hyp->parsed())
        return guarded([&] {
            const auto cfg = cns::load_config(config);
            const auto r = cns::check_hypotheses(cfg);
            const auto j = cns::hypotheses_json(r);
            const cns::OutputTree out(cns::resolve_output_dir(cfg.output_dir));
            out.write("hypotheses.json", j.dump(2) + "\n");
            std::cout << j.dump(2) << "\n";
            return r.pass() ? cns::kExitPass : cns::kExitGateFailure;
        });
    if (seed->parsed()) {
        if (!seed_stdin) {
            std::cout << cns::seed_derivation(master, index) << "\n";
            return 0;
        }
        while (std::cin >> master >> index) std::cout << cns::seed_derivation(master, index) << "\n";
        return 0;
    }
    return 0;
}
