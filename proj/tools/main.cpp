// crosskit — command-line front end.
//
//   crosskit simulate --config run.cfg --delta -78 [--out traces.csv]
//   crosskit fit      --in traces.csv [--out jeff.csv]
//   crosskit mu       --config run.cfg [--deltas -300:20:500] [--out mu.csv]
//   crosskit sweep    --config run.cfg [--deltas ...] [--out DIR]
//   crosskit report   DIR
//
// The configuration file is flat key=value text (see cli.hpp); --config falls
// back to $CROSSKIT_CONFIG. Command-line overrides win over the file, and the
// effective configuration is what gets echoed into sweep output directories.
//
// Exit codes: 0 success, 2 bad configuration or arguments, 3 numerical
// failure (non-convergence, pole, step control), 4 I/O failure.
#include "crosskit/cli.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

crosskit::cli::RunConfig load_config_or_env(const std::string& config_arg) {
    std::string path = config_arg;
    if (path.empty()) {
        if (const char* env = std::getenv("CROSSKIT_CONFIG"); env && *env) {
            path = env;
        } else {
            throw crosskit::cli::ParseError(
                "no configuration: pass --config FILE or set CROSSKIT_CONFIG");
        }
    }
    return crosskit::cli::load_config(path);
}

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> amplitudes;
    std::optional<std::string> deltas;
    std::optional<double> tmax_ns;
    std::optional<double> dt_ns;
    std::optional<int> shots;
    std::optional<std::string> out;

    void apply(crosskit::cli::RunConfig& cfg) const {
        if (seed) {
            cfg.seed = *seed;
        }
        if (amplitudes) {
            cfg.amplitudes = crosskit::cli::parse_range(*amplitudes);
        }
        if (deltas) {
            cfg.deltas = crosskit::cli::parse_range(*deltas);
            cfg.has_deltas = true;
        }
        if (tmax_ns) {
            cfg.tmax_ns = *tmax_ns;
        }
        if (dt_ns) {
            cfg.dt_ns = *dt_ns;
        }
        if (shots) {
            cfg.shots = *shots;
        }
        if (out) {
            cfg.out = *out;
        }
    }
};

// Options shared by every configured subcommand.
void add_common(CLI::App* cmd, std::string& config_path, Overrides& over) {
    cmd->add_option("--config", config_path,
                    "configuration file (default: $CROSSKIT_CONFIG)");
    cmd->add_option("--seed", over.seed, "override the run seed");
    cmd->add_option("--amplitudes", over.amplitudes,
                    "override drive amplitudes (start:step:stop, log:lo:hi:n, or list)");
    cmd->add_option("--tmax-ns", over.tmax_ns, "override the longest pulse duration");
    cmd->add_option("--dt-ns", over.dt_ns, "override the duration grid step");
    cmd->add_option("--shots", over.shots, "override measurement shots per point");
    cmd->add_option("--out", over.out, "override the output path");
}

// The detuning grid for mu/sweep: --deltas beats the file's `deltas` key.
crosskit::cli::RangeSpec resolve_deltas(const crosskit::cli::RunConfig& cfg) {
    if (!cfg.has_deltas) {
        throw crosskit::cli::MissingKey(
            "no detuning grid: pass --deltas or set `deltas` in the configuration");
    }
    return cfg.deltas;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-resonance transmon simulation and analysis"};
    app.require_subcommand(1);

    std::string config_path;
    Overrides over;

    double delta_mhz = 0.0;
    auto* simulate = app.add_subcommand(
        "simulate", "write raw Rabi traces for one detuning, both control states");
    add_common(simulate, config_path, over);
    simulate->add_option("--delta", delta_mhz, "control-target detuning (MHz)")
        ->required();

    std::string fit_in;
    auto* fit = app.add_subcommand(
        "fit", "fit a trace table into effective-coupling curves");
    fit->add_option("--in", fit_in, "trace CSV (simulate/sweep output)")->required();
    fit->add_option("--out", over.out, "output CSV path");

    auto* mu = app.add_subcommand(
        "mu", "tabulate the conditional drive coefficient along a detuning grid");
    add_common(mu, config_path, over);
    mu->add_option("--deltas", over.deltas, "detuning grid (range syntax)");

    auto* sweep = app.add_subcommand(
        "sweep", "run the full detuning sweep pipeline into a directory");
    add_common(sweep, config_path, over);
    sweep->add_option("--deltas", over.deltas, "detuning grid (range syntax)");

    std::string report_dir;
    auto* report = app.add_subcommand("report", "render SVG plots from a sweep directory");
    report->add_option("dir", report_dir, "sweep output directory")->required();

    try {
        app.parse(argc, argv);

        if (simulate->parsed()) {
            auto cfg = load_config_or_env(config_path);
            over.apply(cfg);
            std::string out = over.out.value_or("traces.csv");
            crosskit::cli::run_simulate(cfg, delta_mhz, out);
            std::cout << "wrote " << out << '\n';
        } else if (fit->parsed()) {
            std::string out = over.out.value_or("jeff.csv");
            crosskit::cli::run_fit(fit_in, out);
            std::cout << "wrote " << out << '\n';
        } else if (mu->parsed()) {
            auto cfg = load_config_or_env(config_path);
            over.apply(cfg);
            std::string out = over.out.value_or("mu.csv");
            crosskit::cli::run_mu(cfg, resolve_deltas(cfg), out);
            std::cout << "wrote " << out << '\n';
        } else if (sweep->parsed()) {
            auto cfg = load_config_or_env(config_path);
            over.apply(cfg);
            std::string out = over.out.value_or(cfg.out);
            auto result = crosskit::cli::run_sweep(cfg, resolve_deltas(cfg), out);
            std::cout << "wrote " << out << ": " << result.curves.size()
                      << " detunings, " << result.diagnostics.size() << " diagnostics\n";
        } else if (report->parsed()) {
            crosskit::cli::run_report(report_dir);
            std::cout << "wrote " << report_dir << "/{jeff,mu,saturation}.svg\n";
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        // app.exit prints the usage message; --help yields 0, anything else is
        // a bad command line and folds into the config exit code.
        int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    } catch (const crosskit::cli::ParseError& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kExitConfig;
    } catch (const crosskit::cli::MissingKey& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kExitConfig;
    } catch (const crosskit::fitting::NonConvergence& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const crosskit::fitting::RegimeNotFound& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const crosskit::fitting::NoPlateau& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const crosskit::pipeline::CurveRejected& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const crosskit::pipeline::DegenerateTheory& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const crosskit::perturbation::LabelAmbiguity& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::domain_error& e) {
        // ResonancePole and any other out-of-validity-domain failure
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const crosskit::dynamics::StepTooLarge& e) {
        std::cerr << "error: numerical: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: config: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: io: " << e.what() << '\n';
        return kExitIo;
    }
}
