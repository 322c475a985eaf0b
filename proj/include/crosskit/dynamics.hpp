// dynamics.hpp — time-domain simulation of the CR Rabi protocol: pulse
// schedules, unitary propagation (rotating-frame exponentials, lab-frame RK4
// for cross-checks), and target-qubit readout.
//
// Conventions: mode 1 is the target (read out), mode 2 is the control (driven).
// Durations at the interface are in ns; internally time is in microseconds and
// the propagator applies the single global 2*pi: U(t) = exp(-i 2*pi H t) with H
// in MHz.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "crosskit/hilbert.hpp"
#include "crosskit/model.hpp"
#include "crosskit/perturbation.hpp"

namespace crosskit::dynamics {

using hilbert::Operator;
using hilbert::SpaceDescriptor;
using model::DeviceParams;
using model::DrivePulse;

// --------------------------- error types -------------------------------------

// The requested sampling step cannot resolve the fastest relevant oscillation
// of the chosen frame.
struct StepTooLarge : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// --------------------------- schedules ---------------------------------------

struct PulseSchedule {
    struct Segment {
        DrivePulse pulse;
        double duration_ns{0.0};
    };
    std::vector<Segment> segments;
    double total_duration_ns{0.0};
    bool control_prepared_excited{false};

    void validate() const {
        if (segments.empty()) {
            throw std::invalid_argument("PulseSchedule: no segments");
        }
        double sum = 0.0;
        for (const auto& s : segments) {
            if (s.duration_ns <= 0.0) {
                throw std::invalid_argument("PulseSchedule: segment durations must be > 0");
            }
            s.pulse.validate();
            sum += s.duration_ns;
        }
        if (std::abs(sum - total_duration_ns) > 1e-9 * std::max(1.0, sum)) {
            throw std::invalid_argument("PulseSchedule: segments do not add up to total_duration");
        }
    }
};

// Single CR segment on the control line at the dressed target 0-1 frequency.
// The state-preparation pi pulses of the protocol are idealized as the choice
// of initial state, recorded in control_prepared_excited. A nonzero
// carrier_override replaces the dressed carrier (detuned-drive studies).
inline PulseSchedule build_cr_schedule(const DeviceParams& device, double amplitude_mhz,
                                       double duration_ns, bool control_excited,
                                       double carrier_override_mhz = 0.0) {
    if (duration_ns <= 0.0) {
        throw std::invalid_argument("build_cr_schedule: duration must be > 0");
    }
    double carrier = carrier_override_mhz;
    if (carrier == 0.0) {
        auto space = model::make_device_space(device);
        auto spectrum = perturbation::exact_dressed(device, space).spectrum;
        carrier = spectrum.energy(1, 0) - spectrum.energy(0, 0);
    }
    DrivePulse pulse;
    pulse.target_mode = 2;
    pulse.amplitude = amplitude_mhz;
    pulse.carrier = carrier;
    pulse.phase = 0.0;
    pulse.envelope = model::Envelope::Square;

    PulseSchedule schedule;
    schedule.segments.push_back({pulse, duration_ns});
    schedule.total_duration_ns = duration_ns;
    schedule.control_prepared_excited = control_excited;
    return schedule;
}

// --------------------------- initial states ----------------------------------

// Idealized preparation: the dressed state adiabatically connected to |00> or
// |01> (target 0, control 0/1). Truncations too small for dressed labeling
// fall back to the bare basis state (used by reduced-size validation runs).
inline Eigen::VectorXcd initial_state(const DeviceParams& device, const SpaceDescriptor& space,
                                      bool control_excited) {
    int n2 = control_excited ? 1 : 0;
    if (space.levels_per_mode[0] >= 4 && space.levels_per_mode[1] >= 4 &&
        device.coupling_j > 0.0) {
        auto dressed = perturbation::exact_dressed(device, space);
        int column = dressed.label_columns[perturbation::low_state_index(0, n2)];
        return dressed.all_states.col(column);
    }
    Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(space.dimension);
    psi(space.index_of(0, n2)) = 1.0;
    return psi;
}

// --------------------------- propagation -------------------------------------

struct Trajectory {
    SpaceDescriptor space;
    std::vector<double> times_ns;
    std::vector<Eigen::VectorXcd> states;
};

namespace detail {

// psi(t) = V exp(-i 2 pi E t) V^dag psi0 from a cached eigendecomposition.
struct ConstantEvolver {
    Eigen::VectorXd energies;  // MHz
    Eigen::MatrixXcd vectors;
    Eigen::VectorXcd coeffs;   // V^dag psi0

    ConstantEvolver(const Eigen::MatrixXcd& h_mhz, const Eigen::VectorXcd& psi0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h_mhz);
        if (solver.info() != Eigen::Success) {
            throw std::runtime_error("propagate: eigendecomposition failed");
        }
        energies = solver.eigenvalues();
        vectors = solver.eigenvectors();
        coeffs = vectors.adjoint() * psi0;
    }

    Eigen::VectorXcd at(double t_us) const {
        Eigen::VectorXcd phased(coeffs.size());
        for (int k = 0; k < coeffs.size(); ++k) {
            phased(k) = coeffs(k) * std::polar(1.0, -2.0 * M_PI * energies(k) * t_us);
        }
        return vectors * phased;
    }
};

// Fastest oscillation the CR readout should resolve in the rotating frame: the
// conditional Rabi rate of the target, bounded by the dressed drive elements.
// Near a pole the perturbative elements are unavailable and hybridization can
// push the rate to the direct-drive scale, so the bound falls back to O(1).
// (A drive resonant with its own line's transition is outside this guard; pick
// dt against the direct Rabi rate for such studies.)
inline double rotating_frame_probe_frequency(const DeviceParams& device, int which_drive,
                                             double amplitude) {
    double element_bound = 1.0;
    try {
        auto m = perturbation::dressed_drive_matrix_pt(device, which_drive);
        double m0, m1;
        if (which_drive == 2) {
            m0 = m.entry(0, 0, 1, 0);
            m1 = m.entry(0, 1, 1, 1);
        } else {
            m0 = m.entry(0, 0, 0, 1);
            m1 = m.entry(1, 0, 1, 1);
        }
        element_bound = std::abs(m0) + std::abs(m1);
    } catch (const perturbation::ResonancePole&) {
        // keep the conservative bound
    }
    return amplitude * element_bound;
}

}  // namespace detail

// Rotating-frame propagation. Each square segment evolves by its exact matrix
// exponential, so dt controls only the sampling grid; ramped envelopes are
// stepped through dt-sized constant slices. Samples include t=0, every multiple
// of dt, every segment boundary, and the final time.
inline Trajectory propagate(const DeviceParams& device, const PulseSchedule& schedule,
                            double dt_ns) {
    schedule.validate();
    if (dt_ns <= 0.0) {
        throw std::invalid_argument("propagate: dt must be > 0");
    }
    double max_amplitude = 0.0;
    for (const auto& seg : schedule.segments) {
        max_amplitude = std::max(max_amplitude, seg.pulse.amplitude);
    }
    double probe = detail::rotating_frame_probe_frequency(
        device, schedule.segments.front().pulse.target_mode, max_amplitude);
    if (probe > 0.0 && dt_ns * 1e-3 > 1.0 / (20.0 * probe)) {
        throw StepTooLarge("propagate: dt = " + std::to_string(dt_ns) +
                           " ns undersamples the fastest relevant oscillation (" +
                           std::to_string(probe) + " MHz); need dt <= " +
                           std::to_string(1e3 / (20.0 * probe)) + " ns");
    }

    auto space = model::make_device_space(device);
    Trajectory out{.space = space, .times_ns = {}, .states = {}};
    Eigen::VectorXcd psi = initial_state(device, space, schedule.control_prepared_excited);
    out.times_ns.push_back(0.0);
    out.states.push_back(psi);

    double segment_start_ns = 0.0;
    for (const auto& seg : schedule.segments) {
        const double dur_us = seg.duration_ns * 1e-3;
        if (seg.pulse.envelope == model::Envelope::Square) {
            Eigen::MatrixXcd h =
                model::rotating_frame_hamiltonian(device, seg.pulse, space, 0.0, dur_us).matrix;
            detail::ConstantEvolver evolver(h, psi);
            for (double t_ns = dt_ns; t_ns < seg.duration_ns - 1e-12; t_ns += dt_ns) {
                out.times_ns.push_back(segment_start_ns + t_ns);
                out.states.push_back(evolver.at(t_ns * 1e-3));
            }
            psi = evolver.at(dur_us);
        } else {
            // Stepped constant slices with midpoint amplitude.
            int steps = std::max(1, static_cast<int>(std::ceil(seg.duration_ns / dt_ns)));
            double slice_ns = seg.duration_ns / steps;
            for (int k = 0; k < steps; ++k) {
                double mid_us = (k + 0.5) * slice_ns * 1e-3;
                Eigen::MatrixXcd h =
                    model::rotating_frame_hamiltonian(device, seg.pulse, space, mid_us, dur_us)
                        .matrix;
                detail::ConstantEvolver evolver(h, psi);
                psi = evolver.at(slice_ns * 1e-3);
                if (k + 1 < steps) {
                    out.times_ns.push_back(segment_start_ns + (k + 1) * slice_ns);
                    out.states.push_back(psi);
                }
            }
        }
        segment_start_ns += seg.duration_ns;
        out.times_ns.push_back(segment_start_ns);
        out.states.push_back(psi);
    }
    return out;
}

// Lab-frame RK4 cross-check: integrates the full time-dependent Hamiltonian
// with the physical cos(2 pi f t + phi) drive (no rotating-wave step). Bare
// populations are frame-invariant, so its readout compares directly with the
// rotating-frame path. The step must resolve the carrier itself.
inline Trajectory propagate_lab_rk4(const DeviceParams& device, const PulseSchedule& schedule,
                                    double dt_ns) {
    schedule.validate();
    if (dt_ns <= 0.0) {
        throw std::invalid_argument("propagate_lab_rk4: dt must be > 0");
    }
    auto space = model::make_device_space(device);
    Operator h_sys = model::build_system_hamiltonian(device, space);

    // Fastest lab-frame scale: carrier plus the largest diagonal transition.
    double fastest = 0.0;
    for (const auto& seg : schedule.segments) {
        fastest = std::max(fastest, seg.pulse.carrier);
    }
    for (int i = 0; i < space.dimension; ++i) {
        fastest = std::max(fastest, std::abs(h_sys.matrix(i, i).real()));
    }
    if (dt_ns * 1e-3 > 1.0 / (20.0 * fastest)) {
        throw StepTooLarge("propagate_lab_rk4: dt = " + std::to_string(dt_ns) +
                           " ns undersamples the lab frame (" + std::to_string(fastest) +
                           " MHz); need dt <= " + std::to_string(1e3 / (20.0 * fastest)) + " ns");
    }

    Trajectory out{.space = space, .times_ns = {}, .states = {}};
    Eigen::VectorXcd psi = initial_state(device, space, schedule.control_prepared_excited);
    out.times_ns.push_back(0.0);
    out.states.push_back(psi);

    const std::complex<double> minus_i2pi(0.0, -2.0 * M_PI);
    double segment_start_us = 0.0;
    for (const auto& seg : schedule.segments) {
        const double dur_us = seg.duration_ns * 1e-3;
        Operator quad = model::build_drive_operator(space, seg.pulse.target_mode);
        auto h_at = [&](double t_in_seg_us) -> Eigen::MatrixXcd {
            double eps = model::envelope_amplitude(seg.pulse, t_in_seg_us, dur_us);
            double t_abs = segment_start_us + t_in_seg_us;
            double field =
                eps * std::cos(2.0 * M_PI * seg.pulse.carrier * t_abs + seg.pulse.phase);
            return h_sys.matrix + field * quad.matrix;
        };
        int steps = static_cast<int>(std::ceil(seg.duration_ns / dt_ns));
        double h_us = dur_us / steps;
        double t = 0.0;
        for (int k = 0; k < steps; ++k) {
            Eigen::VectorXcd k1 = minus_i2pi * (h_at(t) * psi);
            Eigen::VectorXcd k2 = minus_i2pi * (h_at(t + 0.5 * h_us) * (psi + 0.5 * h_us * k1));
            Eigen::VectorXcd k3 = minus_i2pi * (h_at(t + 0.5 * h_us) * (psi + 0.5 * h_us * k2));
            Eigen::VectorXcd k4 = minus_i2pi * (h_at(t + h_us) * (psi + h_us * k3));
            psi += (h_us / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += h_us;
        }
        psi.normalize();  // remove accumulated O(dt^4) norm drift
        segment_start_us += dur_us;
        out.times_ns.push_back(segment_start_us * 1e3);
        out.states.push_back(psi);
    }
    return out;
}

// --------------------------- readout -----------------------------------------

struct RabiTrace {
    double amplitude{0.0};             // drive amplitude (MHz)
    int control_state{0};              // 0 or 1
    std::vector<double> durations_ns;
    std::vector<double> p_excited;     // P(target occupation = 1), any control level
    std::vector<double> p_leakage;     // population outside the 2x2 manifold
    // Imaginary part of the dressed target coherence, 2 Im<0c|psi><psi|1c>:
    // an oscillation whose phase velocity sign is the target's rotation sense,
    // which the populations alone cannot distinguish.
    std::vector<double> target_coherence;
};

inline double population_target_excited(const SpaceDescriptor& space,
                                        const Eigen::VectorXcd& psi) {
    double p = 0.0;
    for (int n2 = 0; n2 < space.levels_per_mode[1]; ++n2) {
        p += std::norm(psi(space.index_of(1, n2)));
    }
    return p;
}

inline double population_leakage(const SpaceDescriptor& space, const Eigen::VectorXcd& psi) {
    double inside = 0.0;
    for (int n1 = 0; n1 <= 1; ++n1) {
        for (int n2 = 0; n2 <= 1; ++n2) {
            inside += std::norm(psi(space.index_of(n1, n2)));
        }
    }
    return std::max(0.0, 1.0 - inside);
}

// Full CR Rabi protocol at one amplitude: prepare, drive the control at the
// dressed target frequency, read out the target at each requested duration.
// The square CR segment has a time-independent rotating-frame Hamiltonian, so
// every duration is evaluated from one eigendecomposition with no time grid.
inline RabiTrace simulate_cr_rabi(const DeviceParams& device, double amplitude_mhz,
                                  const std::vector<double>& durations_ns, bool control_excited,
                                  double carrier_override_mhz = 0.0) {
    if (durations_ns.empty()) {
        throw std::invalid_argument("simulate_cr_rabi: no durations");
    }
    for (size_t k = 1; k < durations_ns.size(); ++k) {
        if (durations_ns[k] <= durations_ns[k - 1]) {
            throw std::invalid_argument("simulate_cr_rabi: durations must be ascending");
        }
    }
    if (durations_ns.front() < 0.0) {
        throw std::invalid_argument("simulate_cr_rabi: durations must be >= 0");
    }

    auto space = model::make_device_space(device);
    double horizon = std::max(durations_ns.back(), 1.0);
    PulseSchedule schedule =
        build_cr_schedule(device, amplitude_mhz, horizon, control_excited, carrier_override_mhz);
    Eigen::MatrixXcd h = model::rotating_frame_hamiltonian(device, schedule.segments[0].pulse,
                                                           space, 0.0, horizon * 1e-3)
                             .matrix;
    Eigen::VectorXcd psi0 = initial_state(device, space, control_excited);
    detail::ConstantEvolver evolver(h, psi0);

    // Dressed projectors for the conditional coherence (bare fallback mirrors
    // initial_state).
    int n2 = control_excited ? 1 : 0;
    Eigen::VectorXcd low, high;
    if (space.levels_per_mode[0] >= 4 && space.levels_per_mode[1] >= 4 &&
        device.coupling_j > 0.0) {
        auto dressed = perturbation::exact_dressed(device, space);
        low = dressed.all_states.col(dressed.label_columns[perturbation::low_state_index(0, n2)]);
        high = dressed.all_states.col(dressed.label_columns[perturbation::low_state_index(1, n2)]);
    } else {
        low = Eigen::VectorXcd::Zero(space.dimension);
        high = Eigen::VectorXcd::Zero(space.dimension);
        low(space.index_of(0, n2)) = 1.0;
        high(space.index_of(1, n2)) = 1.0;
    }

    RabiTrace trace;
    trace.amplitude = amplitude_mhz;
    trace.control_state = control_excited ? 1 : 0;
    trace.durations_ns = durations_ns;
    trace.p_excited.reserve(durations_ns.size());
    trace.p_leakage.reserve(durations_ns.size());
    trace.target_coherence.reserve(durations_ns.size());
    for (double d_ns : durations_ns) {
        Eigen::VectorXcd psi = evolver.at(d_ns * 1e-3);
        trace.p_excited.push_back(population_target_excited(space, psi));
        trace.p_leakage.push_back(population_leakage(space, psi));
        std::complex<double> a0 = low.dot(psi);
        std::complex<double> a1 = high.dot(psi);
        trace.target_coherence.push_back(2.0 * std::imag(std::conj(a0) * a1));
    }
    return trace;
}

// --------------------------- decoherence envelope -----------------------------

// Phenomenological readout-level damping: the oscillating part of p_excited
// decays with t2 while its mean relaxes toward the ground state with t1.
// Post-processing on probabilities (clamped to [0,1]), not Lindblad evolution;
// leakage is left untouched. The coherence record is damped with t2.
inline RabiTrace decoherence_envelope(const RabiTrace& trace, double t1_us, double t2_us) {
    if (!(t1_us > 0.0) || !(t2_us > 0.0)) {
        throw std::invalid_argument("decoherence_envelope: t1 and t2 must be > 0");
    }
    RabiTrace out = trace;
    if (trace.p_excited.empty()) {
        return out;
    }
    double mean = 0.0;
    for (double p : trace.p_excited) {
        mean += p;
    }
    mean /= static_cast<double>(trace.p_excited.size());
    for (size_t k = 0; k < trace.p_excited.size(); ++k) {
        double t_us = trace.durations_ns[k] * 1e-3;
        double damped = mean * std::exp(-t_us / t1_us) +
                        (trace.p_excited[k] - mean) * std::exp(-t_us / t2_us);
        out.p_excited[k] = std::clamp(damped, 0.0, 1.0);
        if (k < trace.target_coherence.size()) {
            out.target_coherence[k] = trace.target_coherence[k] * std::exp(-t_us / t2_us);
        }
    }
    return out;
}

}  // namespace crosskit::dynamics
