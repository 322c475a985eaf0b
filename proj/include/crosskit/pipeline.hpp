// pipeline.hpp — sweep orchestration: amplitude sweeps per detuning, detuning
// sweeps assembling mu(detuning) and saturation(detuning) curves, the drive
// susceptibility calibration, and the CSV artifacts a sweep leaves on disk.
//
// Conventions: detuning means omega1 - omega2 (MHz); sweeps move omega1 with
// every other device parameter fixed. Random seeds derive from a root seed
// and the (detuning, amplitude, control) key, so results are reproducible and
// independent of completion order.
#pragma once

#include "crosskit/dynamics.hpp"
#include "crosskit/fitting.hpp"
#include "crosskit/model.hpp"
#include "crosskit/perturbation.hpp"
#include "crosskit/version.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace crosskit::pipeline {

// --------------------------- error types -------------------------------------

struct CurveRejected : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateTheory : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------- seeding -----------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Per-trace seed from the root seed and the sweep key, so a sweep can be
// sharded or resumed without changing any trace's noise stream.
inline std::uint64_t derive_seed(std::uint64_t root, double delta_mhz, double amplitude,
                                 bool control_excited) {
    std::uint64_t h = splitmix64(root ^ 0x6a09e667f3bcc909ull);
    h = splitmix64(h ^ std::bit_cast<std::uint64_t>(delta_mhz));
    h = splitmix64(h ^ std::bit_cast<std::uint64_t>(amplitude));
    h = splitmix64(h ^ (control_excited ? 0x9e3779b97f4a7c15ull : 0ull));
    return h;
}

// --------------------------- sweep settings ----------------------------------

struct TraceOptions {
    std::uint64_t root_seed{1};
    int shots{0};             // per-point projective readouts; 0 = exact populations
    bool decoherence{false};  // apply T1/T2 envelopes before fitting
    double t1_us{50.0};
    double t2_us{2.8};
};

struct SweepSettings {
    std::vector<double> amplitudes;    // MHz, ascending
    std::vector<double> durations_ns;  // shared time grid for every trace
    double pole_window_mhz{10.0};      // exclusion half-width around PT poles
    TraceOptions trace{};

    // Desk-scale defaults: amplitudes 0.5..40 MHz in 17 log-spaced steps,
    // durations 0..8 us at 10 ns sampling.
    static SweepSettings desk_defaults() {
        SweepSettings s;
        for (int k = 0; k <= 16; ++k) {
            s.amplitudes.push_back(0.5 * std::pow(80.0, k / 16.0));
        }
        for (int i = 0; i <= 800; ++i) {
            s.durations_ns.push_back(10.0 * i);
        }
        return s;
    }
};

// --------------------------- measurement noise -------------------------------

// Projective-readout statistics: each population is replaced by a
// binomial(shots, p)/shots estimate. The coherence channel is an internal
// probe, not a measured observable, and stays exact.
inline dynamics::RabiTrace apply_shot_noise(const dynamics::RabiTrace& trace, int shots,
                                            std::uint64_t seed) {
    if (shots <= 0) {
        return trace;
    }
    dynamics::RabiTrace noisy = trace;
    std::mt19937_64 rng(seed);
    auto sample = [&](double p) {
        double clipped = std::clamp(p, 0.0, 1.0);
        std::binomial_distribution<int> dist(shots, clipped);
        return static_cast<double>(dist(rng)) / shots;
    };
    for (size_t i = 0; i < noisy.p_excited.size(); ++i) {
        noisy.p_excited[i] = sample(noisy.p_excited[i]);
        noisy.p_leakage[i] = sample(noisy.p_leakage[i]);
    }
    return noisy;
}

// --------------------------- rotation sense ----------------------------------

// Populations are blind to the rotation sense of the target. The dressed
// coherence recorded alongside each trace is not: correlating it against
// sin(2 pi f t) at the fitted frequency recovers the sign of the conditional
// drive element, which is what makes the extracted coupling signed.
inline int rotation_sense(const dynamics::RabiTrace& trace, const fitting::SinusoidFit& fit) {
    if (fit.frequency <= 0.0) {
        return +1;
    }
    double acc = 0.0;
    for (size_t i = 0; i < trace.durations_ns.size(); ++i) {
        double t_us = trace.durations_ns[i] * 1e-3;
        double envelope = std::isfinite(fit.decay_time_us) && fit.decay_time_us > 0.0
                              ? std::exp(-t_us / fit.decay_time_us)
                              : 1.0;
        acc += trace.target_coherence[i] * std::sin(2.0 * M_PI * fit.frequency * t_us) *
               envelope;
    }
    return acc < 0.0 ? +1 : -1;
}

// Signed effective coupling from a conditional trace pair: half the
// difference of the sense-signed fitted frequencies.
inline fitting::JeffPoint signed_jeff_point(const dynamics::RabiTrace& trace0,
                                            const fitting::SinusoidFit& fit0,
                                            const dynamics::RabiTrace& trace1,
                                            const fitting::SinusoidFit& fit1,
                                            double amplitude) {
    fitting::JeffPoint out;
    out.amplitude = amplitude;
    double f0 = rotation_sense(trace0, fit0) * fit0.frequency;
    double f1 = rotation_sense(trace1, fit1) * fit1.frequency;
    out.jeff = 0.5 * (f1 - f0);
    out.uncertainty = 0.5 * std::hypot(fit0.frequency_ci95(), fit1.frequency_ci95());
    return out;
}

// --------------------------- amplitude sweep ---------------------------------

struct PointFailure {
    double amplitude{0.0};
    std::string reason;
};

struct JeffCurve {
    double delta_mhz{0.0};
    std::vector<fitting::JeffPoint> points;  // successful extractions, ascending
    std::vector<PointFailure> failures;
    bool has_linear{false};
    fitting::LinearRegime linear{};
    std::string linear_note;  // why the linear fit is absent
    bool has_saturation{false};
    fitting::SaturationFit saturation{};
    std::string saturation_note;
};

namespace detail {

inline model::DeviceParams device_at_detuning(const model::DeviceParams& base,
                                              double delta_mhz) {
    model::DeviceParams device = base;
    device.omega1 = base.omega2 + delta_mhz;
    return device;
}

// Linear-regime and saturation fits are optional curve features; record why
// they are absent instead of failing the sweep.
inline void fit_curve_summaries(JeffCurve& curve) {
    try {
        curve.linear = fitting::fit_linear_regime(curve.points);
        curve.has_linear = true;
    } catch (const std::exception& e) {
        curve.linear_note = e.what();
    }
    try {
        curve.saturation = fitting::fit_saturation(curve.points);
        curve.has_saturation = true;
    } catch (const std::exception& e) {
        curve.saturation_note = e.what();
    }
}

}  // namespace detail

// One J_eff(amplitude) curve at a fixed detuning: simulate both control
// states per amplitude, fit both traces, extract the signed coupling, then
// attempt the linear-regime and saturation summaries. Per-point fit failures
// are recorded and skipped; a curve with fewer than 4 valid points is
// rejected outright. `trace_sink`, when given, receives every (possibly
// decohered and noisy) trace exactly as the fits saw it.
inline JeffCurve amplitude_sweep(const model::DeviceParams& device_base, double delta_mhz,
                                 const std::vector<double>& amplitudes,
                                 const std::vector<double>& durations_ns,
                                 const TraceOptions& options = {},
                                 std::vector<dynamics::RabiTrace>* trace_sink = nullptr) {
    if (amplitudes.size() < 6) {
        throw std::invalid_argument("amplitude_sweep: need at least 6 amplitudes");
    }
    for (size_t i = 1; i < amplitudes.size(); ++i) {
        if (amplitudes[i] <= amplitudes[i - 1]) {
            throw std::invalid_argument("amplitude_sweep: amplitudes must be strictly ascending");
        }
    }
    model::DeviceParams device = detail::device_at_detuning(device_base, delta_mhz);
    device.validate();

    JeffCurve curve;
    curve.delta_mhz = delta_mhz;
    for (double amplitude : amplitudes) {
        auto run_trace = [&](bool excited) {
            auto trace = dynamics::simulate_cr_rabi(device, amplitude, durations_ns, excited);
            if (options.decoherence) {
                trace = dynamics::decoherence_envelope(trace, options.t1_us, options.t2_us);
            }
            return apply_shot_noise(
                trace, options.shots,
                derive_seed(options.root_seed, delta_mhz, amplitude, excited));
        };
        try {
            auto trace0 = run_trace(false);
            auto trace1 = run_trace(true);
            if (trace_sink != nullptr) {
                trace_sink->push_back(trace0);
                trace_sink->push_back(trace1);
            }
            if (amplitude == 0.0) {
                // No drive, no oscillation: the coupling is identically zero.
                curve.points.push_back({0.0, 0.0, 0.0});
                continue;
            }
            auto fit0 = fitting::fit_damped_sinusoid(trace0.durations_ns, trace0.p_excited);
            auto fit1 = fitting::fit_damped_sinusoid(trace1.durations_ns, trace1.p_excited);
            if (fit0.status == fitting::FitStatus::NoOscillation ||
                fit1.status == fitting::FitStatus::NoOscillation) {
                curve.failures.push_back({amplitude, "no oscillation resolved in trace"});
                continue;
            }
            // Very strong drive can scramble a trace into several drifting
            // tones; a single-sinusoid fit whose residual exceeds its own
            // oscillation amplitude has not resolved a coherent tone, and a
            // frequency difference built on it would be noise.
            if (fit0.residual_rms > fit0.amplitude || fit1.residual_rms > fit1.amplitude) {
                curve.failures.push_back(
                    {amplitude, "ambiguous fit: residual exceeds oscillation amplitude"});
                continue;
            }
            curve.points.push_back(
                signed_jeff_point(trace0, fit0, trace1, fit1, amplitude));
        } catch (const fitting::NonConvergence& e) {
            curve.failures.push_back({amplitude, e.what()});
        } catch (const dynamics::StepTooLarge& e) {
            curve.failures.push_back({amplitude, e.what()});
        }
    }
    if (curve.points.size() < 4) {
        throw CurveRejected("amplitude_sweep: fewer than 4 valid points at detuning " +
                            std::to_string(delta_mhz));
    }
    detail::fit_curve_summaries(curve);
    return curve;
}

// --------------------------- calibration -------------------------------------

struct ScaleFit {
    double scale{0.0};         // MHz per amplitude unit
    double residual_rms{0.0};  // weighted rms of measured - scale * theory
};

// Single best-fit scalar mapping the theory curve onto the measured points,
// weighted by inverse variance when uncertainties are supplied.
inline ScaleFit calibrate_scale_factor(const std::vector<double>& measured,
                                       const std::vector<double>& theory,
                                       const std::vector<double>& ci95 = {}) {
    if (measured.size() != theory.size() || (!ci95.empty() && ci95.size() != measured.size())) {
        throw std::invalid_argument("calibrate_scale_factor: length mismatch");
    }
    if (measured.size() < 2) {
        throw std::invalid_argument("calibrate_scale_factor: need at least 2 points");
    }
    std::vector<double> w(measured.size(), 1.0);
    bool usable = !ci95.empty();
    for (double c : ci95) {
        if (!(c > 0.0) || !std::isfinite(c)) {
            usable = false;
        }
    }
    if (usable) {
        for (size_t i = 0; i < ci95.size(); ++i) {
            w[i] = 1.0 / (ci95[i] * ci95[i]);
        }
    }
    double stt = 0.0, stm = 0.0;
    for (size_t i = 0; i < measured.size(); ++i) {
        stt += w[i] * theory[i] * theory[i];
        stm += w[i] * theory[i] * measured[i];
    }
    if (stt == 0.0) {
        throw DegenerateTheory("calibrate_scale_factor: theory curve is identically zero");
    }
    ScaleFit out;
    out.scale = stm / stt;
    double rss = 0.0, sw = 0.0;
    for (size_t i = 0; i < measured.size(); ++i) {
        double r = measured[i] - out.scale * theory[i];
        rss += w[i] * r * r;
        sw += w[i];
    }
    out.residual_rms = std::sqrt(rss / sw);
    return out;
}

// --------------------------- detuning sweep ----------------------------------

struct MuCurve {
    struct Point {
        double delta_mhz{0.0};
        double mu_measured{0.0};  // signed linear-regime slope, MHz per MHz
        double ci95{0.0};
        double mu_theory{0.0};    // closed-form coefficient, pure function of device
    };
    std::vector<Point> points;
    double scale_factor{0.0};
    double scale_residual_rms{0.0};
    bool has_scale{false};
};

struct SaturationCurve {
    struct Point {
        double delta_mhz{0.0};
        double level{0.0};  // MHz, magnitude
        double ci95{0.0};
        int sign{+1};
    };
    std::vector<Point> points;
    // Reference lines: the two divergences of the closed-form coefficient
    // (detuning 0 and -anh2) and the bare coupling.
    double reference_delta_low{0.0};
    double reference_delta_high{0.0};
    double reference_j{0.0};
};

struct DetuningSweepResult {
    std::vector<JeffCurve> curves;  // one per surviving detuning, ascending
    MuCurve mu;
    SaturationCurve saturation;
    std::vector<std::string> diagnostics;
};

namespace detail {

inline std::string format_g(double v, const char* spec = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

// Reason a detuning must be skipped, or empty when it is usable.
inline std::string pole_exclusion_reason(const model::DeviceParams& device_at_delta,
                                         double window_mhz) {
    auto report = perturbation::validity_check(device_at_delta);
    for (const auto& pole : report.poles) {
        if (pole.distance < window_mhz) {
            return "within " + format_g(window_mhz) + " MHz of pole " + pole.name +
                   " at detuning " + format_g(pole.location) + " (distance " +
                   format_g(pole.distance) + ")";
        }
    }
    return {};
}

inline std::vector<double> sorted_unique(std::vector<double> grid) {
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

// Fold one finished curve into the sweep result: mu point, saturation point,
// and any per-point diagnostics.
inline void assemble_curve(DetuningSweepResult& result,
                           const model::DeviceParams& device_base, JeffCurve curve) {
    const double delta = curve.delta_mhz;
    model::DeviceParams device = device_at_detuning(device_base, delta);
    for (const auto& failure : curve.failures) {
        result.diagnostics.push_back("detuning " + format_g(delta) + ", amplitude " +
                                     format_g(failure.amplitude) + ": " + failure.reason);
    }
    if (curve.has_linear) {
        MuCurve::Point point;
        point.delta_mhz = delta;
        point.mu_measured = curve.linear.slope;
        point.ci95 = curve.linear.ci95;
        try {
            point.mu_theory = perturbation::mu_closed_form(device);
        } catch (const perturbation::ResonancePole&) {
            point.mu_theory = std::numeric_limits<double>::quiet_NaN();
        }
        result.mu.points.push_back(point);
    } else {
        result.diagnostics.push_back("detuning " + format_g(delta) +
                                     ": no linear regime (" + curve.linear_note + ")");
    }
    if (curve.has_saturation) {
        result.saturation.points.push_back(
            {delta, curve.saturation.level, curve.saturation.ci95, curve.saturation.sign});
    } else {
        result.diagnostics.push_back("detuning " + format_g(delta) + ": no saturation (" +
                                     curve.saturation_note + ")");
    }
    try {
        auto terms =
            perturbation::cr_coefficients(device, perturbation::CRMethod::MatrixElement);
        if (terms.method_mismatch) {
            result.diagnostics.push_back(
                "detuning " + format_g(delta) +
                ": closed-form and matrix-element mu conventions disagree beyond 2x");
        }
    } catch (const perturbation::ResonancePole&) {
        // Pole windows should prevent this; nothing further to report.
    }
    result.curves.push_back(std::move(curve));
}

// Scale calibration over the assembled mu points, tolerant of failure.
inline void finish_sweep(DetuningSweepResult& result,
                         const model::DeviceParams& device_base) {
    result.saturation.reference_delta_low = 0.0;
    result.saturation.reference_delta_high = -device_base.anh2;
    result.saturation.reference_j = device_base.coupling_j;
    std::vector<double> measured, theory, ci;
    for (const auto& p : result.mu.points) {
        if (std::isfinite(p.mu_theory)) {
            measured.push_back(p.mu_measured);
            theory.push_back(p.mu_theory);
            ci.push_back(p.ci95);
        }
    }
    if (measured.size() >= 2) {
        try {
            auto fit = calibrate_scale_factor(measured, theory, ci);
            result.mu.scale_factor = fit.scale;
            result.mu.scale_residual_rms = fit.residual_rms;
            result.mu.has_scale = true;
        } catch (const DegenerateTheory& e) {
            result.diagnostics.push_back(std::string("scale calibration failed: ") +
                                         e.what());
        }
    } else {
        result.diagnostics.push_back("scale calibration skipped: fewer than 2 mu points");
    }
}

}  // namespace detail

// Sweep the detuning grid: one amplitude sweep per detuning (omega1 moves,
// everything else fixed), assembling the mu(detuning) and saturation(detuning)
// curves. Detunings inside a pole window are excluded up front; per-detuning
// failures are recorded and the sweep continues.
inline DetuningSweepResult detuning_sweep(const model::DeviceParams& device_base,
                                          const std::vector<double>& delta_grid,
                                          const SweepSettings& settings) {
    if (delta_grid.empty()) {
        throw std::invalid_argument("detuning_sweep: empty detuning grid");
    }
    DetuningSweepResult result;
    for (double delta : detail::sorted_unique(delta_grid)) {
        model::DeviceParams device = detail::device_at_detuning(device_base, delta);
        std::string reason = detail::pole_exclusion_reason(device, settings.pole_window_mhz);
        if (!reason.empty()) {
            result.diagnostics.push_back("detuning " + detail::format_g(delta) +
                                         " excluded: " + reason);
            continue;
        }
        try {
            result.curves.reserve(result.curves.size() + 1);
            detail::assemble_curve(result, device_base,
                                   amplitude_sweep(device_base, delta, settings.amplitudes,
                                                   settings.durations_ns, settings.trace));
        } catch (const std::exception& e) {
            result.diagnostics.push_back("detuning " + detail::format_g(delta) +
                                         " failed: " + e.what());
        }
    }
    detail::finish_sweep(result, device_base);
    return result;
}

// --------------------------- CSV artifacts -----------------------------------

namespace csv {

inline constexpr const char* traces_header =
    "delta_mhz,amplitude,control_state,duration_ns,p_excited,p_leakage";
inline constexpr const char* jeff_header =
    "row_type,delta_mhz,amplitude,jeff_mhz,uncertainty,slope,slope_ci95,prefix_len,"
    "saturation,saturation_ci95,saturation_sign,plateau_len";
inline constexpr const char* mu_header = "delta_mhz,mu_measured,mu_ci95,mu_theory";
inline constexpr const char* saturation_header = "delta_mhz,level_mhz,ci95,sign";

inline std::string comment_line(std::uint64_t seed) {
    return "# crosskit " + std::string(version) + " seed=" + std::to_string(seed);
}

inline void append_trace_rows(std::string& out, double delta_mhz,
                              const dynamics::RabiTrace& trace) {
    for (size_t i = 0; i < trace.durations_ns.size(); ++i) {
        out += detail::format_g(delta_mhz);
        out += ',';
        out += detail::format_g(trace.amplitude);
        out += ',';
        out += std::to_string(trace.control_state);
        out += ',';
        out += detail::format_g(trace.durations_ns[i]);
        out += ',';
        out += detail::format_g(trace.p_excited[i]);
        out += ',';
        out += detail::format_g(trace.p_leakage[i]);
        out += '\n';
    }
}

inline std::string jeff_rows(const JeffCurve& curve) {
    std::string out;
    for (const auto& p : curve.points) {
        out += "point," + detail::format_g(curve.delta_mhz) + ',' +
               detail::format_g(p.amplitude) + ',' + detail::format_g(p.jeff) + ',' +
               detail::format_g(p.uncertainty) + ",,,,,,,\n";
    }
    std::string slope = curve.has_linear ? detail::format_g(curve.linear.slope) : "";
    std::string slope_ci = curve.has_linear ? detail::format_g(curve.linear.ci95) : "";
    std::string prefix =
        curve.has_linear ? std::to_string(curve.linear.prefix_len) : "";
    std::string level = curve.has_saturation ? detail::format_g(curve.saturation.level) : "";
    std::string level_ci =
        curve.has_saturation ? detail::format_g(curve.saturation.ci95) : "";
    std::string sign =
        curve.has_saturation ? std::to_string(curve.saturation.sign) : "";
    std::string plateau =
        curve.has_saturation ? std::to_string(curve.saturation.count) : "";
    out += "summary," + detail::format_g(curve.delta_mhz) + ",,,," + slope + ',' +
           slope_ci + ',' + prefix + ',' + level + ',' + level_ci + ',' + sign + ',' +
           plateau + '\n';
    return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open for writing: " + path.string());
    }
    out << content;
    if (!out) {
        throw std::runtime_error("write failed: " + path.string());
    }
}

struct TraceRecord {
    double delta_mhz{0.0};
    double amplitude{0.0};
    int control_state{0};
    double duration_ns{0.0};
    double p_excited{0.0};
    double p_leakage{0.0};
};

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

// Strict traces reader: header must name every required column (any order);
// used both for our own artifacts and for external data in the same schema.
inline std::vector<TraceRecord> read_traces(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open: " + path.string());
    }
    std::string line;
    std::vector<std::string> header;
    size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        header = split_line(line);
        break;
    }
    const char* required[] = {"delta_mhz", "amplitude",  "control_state",
                              "duration_ns", "p_excited", "p_leakage"};
    int index[6];
    for (int k = 0; k < 6; ++k) {
        auto it = std::find(header.begin(), header.end(), required[k]);
        if (it == header.end()) {
            throw std::runtime_error(std::string("missing column: ") + required[k]);
        }
        index[k] = static_cast<int>(it - header.begin());
    }
    std::vector<TraceRecord> records;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        auto fields = split_line(line);
        if (fields.size() < header.size()) {
            throw std::runtime_error("short row at line " + std::to_string(line_number) +
                                     " in " + path.string());
        }
        TraceRecord r;
        try {
            r.delta_mhz = std::stod(fields[index[0]]);
            r.amplitude = std::stod(fields[index[1]]);
            r.control_state = std::stoi(fields[index[2]]);
            r.duration_ns = std::stod(fields[index[3]]);
            r.p_excited = std::stod(fields[index[4]]);
            r.p_leakage = std::stod(fields[index[5]]);
        } catch (const std::exception&) {
            throw std::runtime_error("unparsable row at line " + std::to_string(line_number) +
                                     " in " + path.string());
        }
        records.push_back(r);
    }
    return records;
}

}  // namespace csv

// --------------------------- sweep to directory ------------------------------

// Runs a detuning sweep with per-detuning checkpoints and writes the artifact
// set: traces.csv, jeff.csv, mu.csv, saturation.csv, diagnostics.txt. A
// completed detuning leaves lossless (%.17g) chunk files under checkpoint/;
// rerunning with the same directory skips finished detunings and reproduces
// byte-identical final files. Results merge in detuning order, never in
// completion order.
inline DetuningSweepResult run_sweep_to_directory(const model::DeviceParams& device_base,
                                                  const std::vector<double>& delta_grid,
                                                  const SweepSettings& settings,
                                                  const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    if (delta_grid.empty()) {
        throw std::invalid_argument("run_sweep_to_directory: empty detuning grid");
    }
    fs::create_directories(out_dir / "checkpoint");
    const auto grid = detail::sorted_unique(delta_grid);
    const std::uint64_t seed = settings.trace.root_seed;

    DetuningSweepResult result;
    std::string traces_body;
    for (size_t idx = 0; idx < grid.size(); ++idx) {
        const double delta = grid[idx];
        model::DeviceParams device = detail::device_at_detuning(device_base, delta);
        std::string reason = detail::pole_exclusion_reason(device, settings.pole_window_mhz);
        if (!reason.empty()) {
            result.diagnostics.push_back("detuning " + detail::format_g(delta) +
                                         " excluded: " + reason);
            continue;
        }
        char stem[32];
        std::snprintf(stem, sizeof(stem), "%04zu", idx);
        const fs::path points_path = out_dir / "checkpoint" / ("points_" + std::string(stem) + ".csv");
        const fs::path traces_path = out_dir / "checkpoint" / ("traces_" + std::string(stem) + ".csv");

        auto chunk_complete = [](const fs::path& p) {
            std::ifstream in(p);
            if (!in) {
                return false;
            }
            std::string line, last;
            while (std::getline(in, line)) {
                if (!line.empty()) {
                    last = line;
                }
            }
            return last == "# complete";
        };

        if (chunk_complete(points_path) && chunk_complete(traces_path)) {
            // Resume: rebuild the curve from the lossless point chunk and
            // reuse the trace rows verbatim.
            std::ifstream in(points_path);
            std::string line;
            JeffCurve curve;
            curve.delta_mhz = delta;
            bool rejected = false;
            std::string rejection;
            while (std::getline(in, line)) {
                if (line.rfind("# rejected: ", 0) == 0) {
                    rejected = true;
                    rejection = line.substr(12);
                    continue;
                }
                if (line.empty() || line[0] == '#') {
                    continue;
                }
                auto fields = csv::split_line(line);
                if (fields[0] == "point" && fields.size() >= 4) {
                    curve.points.push_back(
                        {std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3])});
                } else if (fields[0] == "failure" && fields.size() >= 3) {
                    curve.failures.push_back({std::stod(fields[1]), fields[2]});
                }
            }
            std::ifstream tin(traces_path);
            while (std::getline(tin, line)) {
                if (!line.empty() && line[0] != '#') {
                    traces_body += line;
                    traces_body += '\n';
                }
            }
            if (rejected) {
                result.diagnostics.push_back("detuning " + detail::format_g(delta) +
                                             " failed: " + rejection);
            } else {
                detail::fit_curve_summaries(curve);
                detail::assemble_curve(result, device_base, std::move(curve));
            }
            continue;
        }

        std::vector<dynamics::RabiTrace> sink;
        std::string points_chunk;
        std::string traces_chunk;
        try {
            JeffCurve curve = amplitude_sweep(device_base, delta, settings.amplitudes,
                                              settings.durations_ns, settings.trace, &sink);
            for (const auto& p : curve.points) {
                points_chunk += "point," + detail::format_g(p.amplitude, "%.17g") + ',' +
                                detail::format_g(p.jeff, "%.17g") + ',' +
                                detail::format_g(p.uncertainty, "%.17g") + '\n';
            }
            for (const auto& f : curve.failures) {
                std::string safe = f.reason;
                std::replace(safe.begin(), safe.end(), ',', ';');
                points_chunk +=
                    "failure," + detail::format_g(f.amplitude, "%.17g") + ',' + safe + '\n';
            }
            for (const auto& trace : sink) {
                csv::append_trace_rows(traces_chunk, delta, trace);
            }
            detail::assemble_curve(result, device_base, std::move(curve));
        } catch (const std::exception& e) {
            std::string safe = e.what();
            std::replace(safe.begin(), safe.end(), ',', ';');
            points_chunk = "# rejected: " + safe + '\n';
            for (const auto& trace : sink) {
                csv::append_trace_rows(traces_chunk, delta, trace);
            }
            result.diagnostics.push_back("detuning " + detail::format_g(delta) +
                                         " failed: " + safe);
        }
        csv::write_file(traces_path, traces_chunk + "# complete\n");
        csv::write_file(points_path, points_chunk + "# complete\n");
        std::ifstream tin(traces_path);
        std::string line;
        while (std::getline(tin, line)) {
            if (!line.empty() && line[0] != '#') {
                traces_body += line;
                traces_body += '\n';
            }
        }
    }
    detail::finish_sweep(result, device_base);

    // Final artifacts, merged in detuning order.
    std::string traces_csv = csv::comment_line(seed) + '\n' + csv::traces_header + '\n' +
                             traces_body;
    std::string jeff_csv = csv::comment_line(seed) + '\n' + csv::jeff_header + '\n';
    for (const auto& curve : result.curves) {
        jeff_csv += csv::jeff_rows(curve);
    }
    std::string mu_csv = csv::comment_line(seed) + '\n';
    if (result.mu.has_scale) {
        mu_csv += "# scale_factor=" + detail::format_g(result.mu.scale_factor) +
                  " residual_rms=" + detail::format_g(result.mu.scale_residual_rms) + '\n';
    }
    mu_csv += std::string(csv::mu_header) + '\n';
    for (const auto& p : result.mu.points) {
        mu_csv += detail::format_g(p.delta_mhz) + ',' + detail::format_g(p.mu_measured) +
                  ',' + detail::format_g(p.ci95) + ',' + detail::format_g(p.mu_theory) +
                  '\n';
    }
    std::string sat_csv = csv::comment_line(seed) + '\n';
    sat_csv += "# reference_j=" + detail::format_g(result.saturation.reference_j) +
               " reference_deltas=" + detail::format_g(result.saturation.reference_delta_low) +
               ',' + detail::format_g(result.saturation.reference_delta_high) + '\n';
    sat_csv += std::string(csv::saturation_header) + '\n';
    for (const auto& p : result.saturation.points) {
        sat_csv += detail::format_g(p.delta_mhz) + ',' + detail::format_g(p.level) + ',' +
                   detail::format_g(p.ci95) + ',' + std::to_string(p.sign) + '\n';
    }
    std::string diag_text;
    for (const auto& d : result.diagnostics) {
        diag_text += d;
        diag_text += '\n';
    }
    csv::write_file(out_dir / "traces.csv", traces_csv);
    csv::write_file(out_dir / "jeff.csv", jeff_csv);
    csv::write_file(out_dir / "mu.csv", mu_csv);
    csv::write_file(out_dir / "saturation.csv", sat_csv);
    csv::write_file(out_dir / "diagnostics.txt", diag_text);
    return result;
}

}  // namespace crosskit::pipeline
