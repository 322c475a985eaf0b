// model.hpp — device Hamiltonians for a pair of coupled, driven transmons
//
// Units: every frequency-like quantity (transition frequencies, anharmonicities,
// coupling, drive amplitudes, carriers) is an ordinary frequency in MHz; time is
// in microseconds. Matrices therefore hold MHz values and the single 2*pi lives
// in the propagator, U(t) = exp(-i 2*pi H t) — no angular/ordinary mixing
// anywhere else.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

#include "crosskit/hilbert.hpp"

namespace crosskit::model {

using hilbert::Operator;
using hilbert::SpaceDescriptor;

// --------------------------- device parameters -------------------------------

struct DeviceParams {
    double omega1{0.0};     // 0-1 transition frequency of transmon 1 (MHz)
    double omega2{0.0};     // 0-1 transition frequency of transmon 2 (MHz)
    double anh1{0.0};       // anharmonicity of transmon 1 (MHz, negative)
    double anh2{0.0};       // anharmonicity of transmon 2 (MHz, negative)
    double coupling_j{0.0}; // exchange coupling J (MHz)
    int levels{4};          // per-mode truncation

    double detuning() const { return omega1 - omega2; }

    void validate() const {
        if (anh1 == 0.0 || anh2 == 0.0) {
            throw std::invalid_argument("DeviceParams: anharmonicities must be nonzero");
        }
        if (coupling_j < 0.0) {
            throw std::invalid_argument("DeviceParams: coupling_j must be >= 0");
        }
        if (levels < 2) {
            throw std::invalid_argument("DeviceParams: levels must be >= 2");
        }
    }
};

inline SpaceDescriptor make_device_space(const DeviceParams& device) {
    return hilbert::make_space({device.levels, device.levels});
}

// --------------------------- drive pulses ------------------------------------

enum class Envelope {
    Square,          // flat top for the whole segment
    SquareWithRamps, // linear rise/fall of rise_time at the segment edges
};

struct DrivePulse {
    int target_mode{2};        // which drive line (1 or 2)
    double amplitude{0.0};     // peak amplitude (MHz)
    double carrier{0.0};       // drive frequency (MHz)
    double phase{0.0};         // radians
    Envelope envelope{Envelope::Square};
    double rise_time_us{0.0};  // used by SquareWithRamps

    void validate() const {
        if (target_mode != 1 && target_mode != 2) {
            throw std::invalid_argument("DrivePulse: target_mode must be 1 or 2");
        }
        if (amplitude < 0.0) {
            throw std::invalid_argument("DrivePulse: amplitude must be >= 0");
        }
        if (rise_time_us < 0.0) {
            throw std::invalid_argument("DrivePulse: rise_time must be >= 0");
        }
    }
};

// Instantaneous envelope value at time t within a segment of the given duration.
inline double envelope_amplitude(const DrivePulse& pulse, double t_us, double duration_us) {
    if (t_us < 0.0 || t_us > duration_us) {
        return 0.0;
    }
    if (pulse.envelope == Envelope::Square || pulse.rise_time_us == 0.0) {
        return pulse.amplitude;
    }
    if (pulse.rise_time_us > 0.5 * duration_us) {
        throw std::invalid_argument("envelope_amplitude: rise_time must be <= half the duration");
    }
    if (t_us < pulse.rise_time_us) {
        return pulse.amplitude * (t_us / pulse.rise_time_us);
    }
    if (t_us > duration_us - pulse.rise_time_us) {
        return pulse.amplitude * ((duration_us - t_us) / pulse.rise_time_us);
    }
    return pulse.amplitude;
}

// --------------------------- Hamiltonians ------------------------------------

// Duffing pair with exchange coupling:
//   H = w1 n1 + (d1/2) n1(n1-1) + w2 n2 + (d2/2) n2(n2-1) + J (b c† + b† c)
inline Operator build_system_hamiltonian(const DeviceParams& device, const SpaceDescriptor& space) {
    device.validate();
    if (space.levels_per_mode[0] != device.levels || space.levels_per_mode[1] != device.levels) {
        throw std::invalid_argument("build_system_hamiltonian: space does not match device.levels");
    }
    Operator b = hilbert::annihilation(space, 1);
    Operator c = hilbert::annihilation(space, 2);
    Eigen::MatrixXcd n1 = b.matrix.adjoint() * b.matrix;
    Eigen::MatrixXcd n2 = c.matrix.adjoint() * c.matrix;
    Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(space.dimension, space.dimension);
    Eigen::MatrixXcd h =
        device.omega1 * n1 + 0.5 * device.anh1 * n1 * (n1 - eye) +
        device.omega2 * n2 + 0.5 * device.anh2 * n2 * (n2 - eye) +
        device.coupling_j * (b.matrix * c.matrix.adjoint() + b.matrix.adjoint() * c.matrix);
    return {space, std::move(h)};
}

// Bare drive operator on the selected line: (b + b†) or (c + c†).
inline Operator build_drive_operator(const SpaceDescriptor& space, int mode) {
    Operator a = hilbert::annihilation(space, mode);
    return {space, a.matrix + a.matrix.adjoint()};
}

// Frame rotating at the drive carrier for both modes, counter-rotating drive
// terms dropped:
//   H_rwa = H_sys - f_d (n1 + n2) + (eps(t)/2) (a e^{i phi} + a† e^{-i phi})
// The factor 1/2 is what a lab drive eps(t) cos(2 pi f_d t + phi) (a + a†)
// leaves behind after the rotating-wave approximation; with it, a resonant
// transition Rabi-oscillates at eps * |matrix element| in ordinary frequency.
inline Operator rotating_frame_hamiltonian(const DeviceParams& device, const DrivePulse& pulse,
                                           const SpaceDescriptor& space, double t_us,
                                           double segment_duration_us =
                                               std::numeric_limits<double>::infinity()) {
    pulse.validate();
    if (pulse.carrier <= 0.0) {
        throw std::invalid_argument("rotating_frame_hamiltonian: pulse carrier must be > 0");
    }
    Operator h = build_system_hamiltonian(device, space);
    Eigen::MatrixXcd ntot = hilbert::number_operator(space, 1).matrix +
                            hilbert::number_operator(space, 2).matrix;
    double eps = envelope_amplitude(pulse, t_us, segment_duration_us);
    Operator a = hilbert::annihilation(space, pulse.target_mode);
    std::complex<double> ph = std::polar(1.0, pulse.phase);
    Eigen::MatrixXcd drive = 0.5 * eps * (ph * a.matrix + std::conj(ph) * a.matrix.adjoint());
    return {space, h.matrix - pulse.carrier * ntot + drive};
}

// --------------------------- two-level validation path -----------------------

// Parameters of the two-qubit lab-frame model used only to validate the
// dressed-frequency statements against the full Duffing treatment.
struct TwoLevelParams {
    double omega1{0.0};   // MHz
    double omega2{0.0};   // MHz
    double coupling_j{0.0};
    double rabi1{0.0};    // drive amplitude on qubit 1 (MHz)
    double rabi2{0.0};    // drive amplitude on qubit 2 (MHz)
    double carrier1{0.0}; // drive frequency on qubit 1 (MHz)
    double carrier2{0.0}; // drive frequency on qubit 2 (MHz)
    double phase1{0.0};
    double phase2{0.0};
};

// 4x4 lab-frame Hamiltonian
//   H = w1/2 ZI + W1 cos(2 pi f1 t + p1) XI + w2/2 IZ + W2 cos(2 pi f2 t + p2) IX
//       + (J/2) XX
// with Z|0> = +|0>.
inline Operator two_level_lab_hamiltonian(const TwoLevelParams& p, double t_us) {
    SpaceDescriptor space = hilbert::make_space({2, 2});
    Eigen::Matrix2cd z, x, eye2;
    z << 1, 0, 0, -1;
    x << 0, 1, 1, 0;
    eye2.setIdentity();
    auto kron = [](const Eigen::Matrix2cd& a, const Eigen::Matrix2cd& b) {
        Eigen::MatrixXcd out(4, 4);
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                out.block(2 * i, 2 * j, 2, 2) = a(i, j) * b;
            }
        }
        return out;
    };
    const double two_pi = 2.0 * M_PI;
    Eigen::MatrixXcd h =
        0.5 * p.omega1 * kron(z, eye2) +
        p.rabi1 * std::cos(two_pi * p.carrier1 * t_us + p.phase1) * kron(x, eye2) +
        0.5 * p.omega2 * kron(eye2, z) +
        p.rabi2 * std::cos(two_pi * p.carrier2 * t_us + p.phase2) * kron(eye2, x) +
        0.5 * p.coupling_j * kron(x, x);
    return {space, std::move(h)};
}

}  // namespace crosskit::model
