// test_dynamics.cpp — CR schedules, propagation, readout, decoherence envelope
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "crosskit/dynamics.hpp"

using namespace crosskit;
using dynamics::PulseSchedule;
using dynamics::RabiTrace;
using model::DeviceParams;

namespace {

DeviceParams sample_device(double detuning_mhz, double j = 1.08, int levels = 4) {
    DeviceParams device;
    device.omega2 = 4349.0;
    device.omega1 = device.omega2 + detuning_mhz;
    device.anh1 = -347.0;
    device.anh2 = -360.0;
    device.coupling_j = j;
    device.levels = levels;
    return device;
}

std::vector<double> linspace_ns(double stop_ns, double step_ns) {
    std::vector<double> out;
    for (double t = 0.0; t <= stop_ns + 1e-9; t += step_ns) {
        out.push_back(t);
    }
    return out;
}

// Rotation sense of a coherence record against a known oscillation frequency:
// the sign of the conditional drive element it oscillates under.
int rotation_sense(const std::vector<double>& t_ns, const std::vector<double>& y, double f_mhz) {
    double acc = 0.0;
    for (size_t k = 0; k < y.size(); ++k) {
        acc += y[k] * std::sin(2.0 * M_PI * f_mhz * t_ns[k] * 1e-3);
    }
    return acc < 0.0 ? 1 : -1;
}

}  // namespace

TEST_CASE("build_cr_schedule drives the control line at the dressed target frequency",
          "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    PulseSchedule schedule = dynamics::build_cr_schedule(device, 2.0, 4000.0, false);
    REQUIRE(schedule.segments.size() == 1);
    REQUIRE_FALSE(schedule.control_prepared_excited);
    REQUIRE(schedule.segments[0].pulse.target_mode == 2);
    REQUIRE(schedule.segments[0].pulse.amplitude == 2.0);
    // Dressed target 0-1 frequency: repelled below the bare 4271 by J^2/|Delta|.
    REQUIRE(schedule.segments[0].pulse.carrier == Catch::Approx(4270.985).margin(5e-3));
    REQUIRE(schedule.total_duration_ns == 4000.0);

    PulseSchedule flipped = dynamics::build_cr_schedule(device, 2.0, 4000.0, true, 4300.0);
    REQUIRE(flipped.control_prepared_excited);
    REQUIRE(flipped.segments[0].pulse.carrier == 4300.0);

    REQUIRE_THROWS_AS(dynamics::build_cr_schedule(device, 2.0, 0.0, false),
                      std::invalid_argument);
}

TEST_CASE("schedule validation", "[dynamics]") {
    PulseSchedule empty;
    REQUIRE_THROWS_AS(empty.validate(), std::invalid_argument);

    model::DrivePulse pulse;
    pulse.amplitude = 1.0;
    pulse.carrier = 4300.0;
    PulseSchedule bad;
    bad.segments.push_back({pulse, -5.0});
    bad.total_duration_ns = -5.0;
    REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);

    PulseSchedule mismatched;
    mismatched.segments.push_back({pulse, 100.0});
    mismatched.total_duration_ns = 250.0;
    REQUIRE_THROWS_AS(mismatched.validate(), std::invalid_argument);
}

TEST_CASE("zero drive leaves populations frozen", "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    PulseSchedule schedule = dynamics::build_cr_schedule(device, 0.0, 10000.0, true);
    auto traj = dynamics::propagate(device, schedule, 100.0);
    auto space = traj.space;
    double p_first = dynamics::population_target_excited(space, traj.states.front());
    for (const auto& psi : traj.states) {
        REQUIRE(std::abs(psi.norm() - 1.0) < 1e-9);
        REQUIRE(std::abs(dynamics::population_target_excited(space, psi) - p_first) < 1e-10);
    }
}

TEST_CASE("resonant drive on an isolated pair follows the Rabi closed form", "[dynamics]") {
    // Two levels per mode, no exchange: the driven line is an exact two-level
    // system and P1(t) = sin^2(pi * eps * t).
    DeviceParams device = sample_device(100.0, 0.0, 2);
    model::DrivePulse pulse;
    pulse.target_mode = 2;
    pulse.amplitude = 1.0;
    pulse.carrier = device.omega2;
    PulseSchedule schedule;
    schedule.segments.push_back({pulse, 2000.0});
    schedule.total_duration_ns = 2000.0;

    auto traj = dynamics::propagate(device, schedule, 10.0);
    auto space = traj.space;
    for (size_t k = 0; k < traj.states.size(); ++k) {
        double t_us = traj.times_ns[k] * 1e-3;
        double p01 = std::norm(traj.states[k](space.index_of(0, 1)));
        double expected = std::sin(M_PI * pulse.amplitude * t_us) *
                          std::sin(M_PI * pulse.amplitude * t_us);
        REQUIRE(std::abs(p01 - expected) < 1e-10);
    }
}

TEST_CASE("propagate rejects undersampling", "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    PulseSchedule schedule = dynamics::build_cr_schedule(device, 40.0, 8000.0, false);
    // Conditional Rabi rate at eps=40 is ~1.4 MHz -> dt must stay below ~35 ns.
    REQUIRE_NOTHROW(dynamics::propagate(device, schedule, 10.0));
    REQUIRE_THROWS_AS(dynamics::propagate(device, schedule, 50.0), dynamics::StepTooLarge);
    REQUIRE_THROWS_AS(dynamics::propagate(device, schedule, 0.0), std::invalid_argument);
}

TEST_CASE("rotating-frame and lab-frame propagation agree", "[dynamics]") {
    // Reduced truncation keeps the lab-frame integration affordable; both paths
    // share the bare initial state and the same perturbative carrier.
    DeviceParams device = sample_device(-78.0, 1.08, 3);
    auto spectrum = perturbation::dressed_energies_pt2(device);
    double carrier = spectrum.energy(1, 0) - spectrum.energy(0, 0);

    double sq_sum = 0.0;
    int count = 0;
    for (double duration_ns : {50.0, 100.0, 150.0, 200.0, 250.0, 300.0}) {
        PulseSchedule schedule =
            dynamics::build_cr_schedule(device, 4.0, duration_ns, true, carrier);
        auto lab = dynamics::propagate_lab_rk4(device, schedule, 0.002);
        auto rot = dynamics::propagate(device, schedule, duration_ns);
        double p_lab = dynamics::population_target_excited(lab.space, lab.states.back());
        double p_rot = dynamics::population_target_excited(rot.space, rot.states.back());
        sq_sum += (p_lab - p_rot) * (p_lab - p_rot);
        ++count;
    }
    REQUIRE(std::sqrt(sq_sum / count) < 0.01);

    DeviceParams full = sample_device(-78.0);
    PulseSchedule schedule = dynamics::build_cr_schedule(full, 2.0, 1000.0, false);
    REQUIRE_THROWS_AS(dynamics::propagate_lab_rk4(full, schedule, 1.0),
                      dynamics::StepTooLarge);
}

TEST_CASE("simulate_cr_rabi: zero amplitude and input validation", "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    auto durations = linspace_ns(4000.0, 200.0);

    RabiTrace ground = dynamics::simulate_cr_rabi(device, 0.0, durations, false);
    REQUIRE(ground.control_state == 0);
    REQUIRE(ground.p_excited.size() == durations.size());
    for (double p : ground.p_excited) {
        REQUIRE(std::abs(p) < 1e-12);
    }

    // With the control excited the dressed initial state has a small bare
    // target-excited admixture, constant in time without a drive.
    RabiTrace excited = dynamics::simulate_cr_rabi(device, 0.0, durations, true);
    for (double p : excited.p_excited) {
        REQUIRE(p == Catch::Approx(excited.p_excited.front()).margin(1e-12));
        REQUIRE(p < 5e-4);
    }

    REQUIRE_THROWS_AS(dynamics::simulate_cr_rabi(device, 1.0, {}, false),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(dynamics::simulate_cr_rabi(device, 1.0, {0.0, 100.0, 100.0}, false),
                      std::invalid_argument);
}

TEST_CASE("conditional Rabi rates follow the dressed drive elements", "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    auto m = perturbation::dressed_drive_matrix_pt(device, 2);
    double m0 = m.entry(0, 0, 1, 0);
    double m1 = m.entry(0, 1, 1, 1);

    // Early in the evolution p ~ (pi f t)^2, so the population ratio between
    // control states approaches (m1/m0)^2.
    std::vector<double> early{0.0, 100.0, 200.0};
    double eps = 3.0;
    RabiTrace g = dynamics::simulate_cr_rabi(device, eps, early, false);
    RabiTrace e = dynamics::simulate_cr_rabi(device, eps, early, true);
    double p_g = g.p_excited.back() - g.p_excited.front();
    double p_e = e.p_excited.back() - e.p_excited.front();
    REQUIRE(p_e / p_g == Catch::Approx((m1 / m0) * (m1 / m0)).epsilon(0.05));

    // Populations are blind to the rotation sense, but the dressed coherence
    // is not: opposite-sign conditional elements rotate opposite ways.
    auto durations = linspace_ns(8000.0, 10.0);
    RabiTrace yg = dynamics::simulate_cr_rabi(device, eps, durations, false);
    RabiTrace ye = dynamics::simulate_cr_rabi(device, eps, durations, true);
    int sense_g = rotation_sense(yg.durations_ns, yg.target_coherence, eps * std::abs(m0));
    int sense_e = rotation_sense(ye.durations_ns, ye.target_coherence, eps * std::abs(m1));
    REQUIRE(sense_g == -1);
    REQUIRE(sense_e == +1);

    // Beyond the anharmonicity pole (|Delta| > |anh2|) both conditional
    // elements share a sign and the two control states rotate the same way.
    DeviceParams same_sign = sample_device(-520.0);
    auto ms = perturbation::dressed_drive_matrix_pt(same_sign, 2);
    REQUIRE(ms.entry(0, 0, 1, 0) * ms.entry(0, 1, 1, 1) > 0.0);
    double eps_far = 10.0;
    RabiTrace sg = dynamics::simulate_cr_rabi(same_sign, eps_far, durations, false);
    RabiTrace se = dynamics::simulate_cr_rabi(same_sign, eps_far, durations, true);
    int s_g = rotation_sense(sg.durations_ns, sg.target_coherence,
                             eps_far * std::abs(ms.entry(0, 0, 1, 0)));
    int s_e = rotation_sense(se.durations_ns, se.target_coherence,
                             eps_far * std::abs(ms.entry(0, 1, 1, 1)));
    REQUIRE(s_g == s_e);
}

TEST_CASE("leakage stays bounded and truncation is converged", "[dynamics]") {
    auto durations = linspace_ns(8000.0, 250.0);
    DeviceParams four = sample_device(-78.0, 1.08, 4);
    DeviceParams five = sample_device(-78.0, 1.08, 5);
    for (bool excited : {false, true}) {
        RabiTrace t4 = dynamics::simulate_cr_rabi(four, 5.0, durations, excited);
        RabiTrace t5 = dynamics::simulate_cr_rabi(five, 5.0, durations, excited);
        for (size_t k = 0; k < durations.size(); ++k) {
            REQUIRE(t4.p_excited[k] >= 0.0);
            REQUIRE(t4.p_excited[k] <= 1.0);
            REQUIRE(t4.p_leakage[k] >= 0.0);
            REQUIRE(std::abs(t4.p_excited[k] - t5.p_excited[k]) < 1e-3);
        }
    }
}

TEST_CASE("decoherence envelope damps toward the ground state", "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    auto durations = linspace_ns(8000.0, 100.0);
    RabiTrace trace = dynamics::simulate_cr_rabi(device, 8.0, durations, true);

    // Near-infinite times: identity to high accuracy.
    RabiTrace same = dynamics::decoherence_envelope(trace, 1e12, 1e12);
    for (size_t k = 0; k < trace.p_excited.size(); ++k) {
        REQUIRE(same.p_excited[k] == Catch::Approx(trace.p_excited[k]).margin(1e-9));
    }

    // t2 = infinity leaves the oscillating part untouched; only the mean sags.
    double inf = std::numeric_limits<double>::infinity();
    RabiTrace t1_only = dynamics::decoherence_envelope(trace, 50.0, inf);
    double mean = 0.0;
    for (double p : trace.p_excited) {
        mean += p;
    }
    mean /= static_cast<double>(trace.p_excited.size());
    for (size_t k = 0; k < trace.p_excited.size(); ++k) {
        double t_us = trace.durations_ns[k] * 1e-3;
        double expected = mean * std::exp(-t_us / 50.0) + (trace.p_excited[k] - mean);
        REQUIRE(t1_only.p_excited[k] ==
                Catch::Approx(std::clamp(expected, 0.0, 1.0)).margin(1e-12));
    }

    // Long-time limit: everything relaxes to the ground state.
    RabiTrace late;
    late.durations_ns = {0.0, 1e6};
    late.p_excited = {0.8, 0.6};
    late.p_leakage = {0.0, 0.0};
    late.target_coherence = {0.0, 0.1};
    RabiTrace relaxed = dynamics::decoherence_envelope(late, 50.0, 2.8);
    REQUIRE(relaxed.p_excited[1] < 1e-8);
    REQUIRE(std::abs(relaxed.target_coherence[1]) < 1e-8);

    // Probabilities stay clamped to [0,1] even for unphysical t2 >> t1.
    RabiTrace skew;
    skew.durations_ns = {0.0, 100000.0};
    skew.p_excited = {1.0, 0.0};
    skew.p_leakage = {0.0, 0.0};
    skew.target_coherence = {0.0, 0.0};
    RabiTrace clamped = dynamics::decoherence_envelope(skew, 1.0, 1e9);
    for (double p : clamped.p_excited) {
        REQUIRE(p >= 0.0);
        REQUIRE(p <= 1.0);
    }

    REQUIRE_THROWS_AS(dynamics::decoherence_envelope(trace, 0.0, 2.8), std::invalid_argument);
    REQUIRE_THROWS_AS(dynamics::decoherence_envelope(trace, 50.0, -1.0), std::invalid_argument);
}

TEST_CASE("multi-segment schedules evolve contiguously", "[dynamics]") {
    DeviceParams device = sample_device(-78.0);
    model::DrivePulse first;
    first.target_mode = 2;
    first.amplitude = 3.0;
    first.carrier = 4270.985;
    model::DrivePulse second = first;
    second.amplitude = 0.0;

    PulseSchedule two;
    two.segments.push_back({first, 1000.0});
    two.segments.push_back({second, 1000.0});
    two.total_duration_ns = 2000.0;

    PulseSchedule one;
    one.segments.push_back({first, 1000.0});
    one.total_duration_ns = 1000.0;

    auto traj_two = dynamics::propagate(device, two, 50.0);
    auto traj_one = dynamics::propagate(device, one, 50.0);
    REQUIRE(traj_two.times_ns.back() == Catch::Approx(2000.0));
    for (size_t k = 1; k < traj_two.times_ns.size(); ++k) {
        REQUIRE(traj_two.times_ns[k] > traj_two.times_ns[k - 1]);
        REQUIRE(std::abs(traj_two.states[k].norm() - 1.0) < 1e-9);
    }
    // State at the first segment boundary matches the single-segment run.
    size_t boundary = 0;
    for (size_t k = 0; k < traj_two.times_ns.size(); ++k) {
        if (traj_two.times_ns[k] == 1000.0) {
            boundary = k;
        }
    }
    REQUIRE((traj_two.states[boundary] - traj_one.states.back()).norm() < 1e-10);

    // After the drive switches off, populations freeze (psi stays an
    // eigenstate mixture with fixed bare weights only if undriven Hamiltonian
    // is diagonal in the dressed basis; bare populations may still beat, so
    // check the norm and the final leakage bound instead).
    REQUIRE(dynamics::population_leakage(traj_two.space, traj_two.states.back()) < 0.05);
}
