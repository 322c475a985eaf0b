// perturbation.hpp — second-order dressing of the coupled transmon pair:
// dressed energies, dressed-basis drive matrices, effective CR coefficients
// (mu, nu, stark), an exact-diagonalization oracle, and anticrossing spectra.
//
// Everything here treats the exchange coupling J as a perturbation on the bare
// Duffing pair, truncated at three total excitations. The ten states of that
// manifold are kept in the fixed order {00,01,10,11,02,20,03,12,21,30}; all
// matrices and energy tables below use it.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "crosskit/hilbert.hpp"
#include "crosskit/model.hpp"

namespace crosskit::perturbation {

using hilbert::Operator;
using hilbert::SpaceDescriptor;
using model::DeviceParams;

// --------------------------- low-excitation basis ----------------------------

inline constexpr int low_state_count = 10;

inline constexpr std::array<std::pair<int, int>, low_state_count> low_states{{
    {0, 0}, {0, 1}, {1, 0}, {1, 1}, {0, 2}, {2, 0}, {0, 3}, {1, 2}, {2, 1}, {3, 0},
}};

inline int low_state_index(int n1, int n2) {
    for (int k = 0; k < low_state_count; ++k) {
        if (low_states[k].first == n1 && low_states[k].second == n2) {
            return k;
        }
    }
    throw std::invalid_argument("low_state_index: |" + std::to_string(n1) +
                                std::to_string(n2) + "> is outside the 3-excitation manifold");
}

// --------------------------- error types -------------------------------------

// A perturbative denominator fell inside the guard band: the expansion is
// meaningless there.
struct ResonancePole : std::domain_error {
    using std::domain_error::domain_error;
};

// An exact eigenvector had no bare state owning at least the threshold share of
// its weight, so a bare label would be arbitrary.
struct LabelAmbiguity : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------- dressed spectrum --------------------------------

enum class SpectrumSource { Pt2, Exact };

struct DressedSpectrum {
    std::array<double, low_state_count> energies{};  // MHz, low_states order
    double zeta{0.0};                                // E(11)-E(10)-E(01)+E(00), MHz
    SpectrumSource source{SpectrumSource::Pt2};

    double energy(int n1, int n2) const { return energies[low_state_index(n1, n2)]; }
};

inline double bare_energy(const DeviceParams& device, int n1, int n2) {
    return device.omega1 * n1 + 0.5 * device.anh1 * n1 * (n1 - 1) +
           device.omega2 * n2 + 0.5 * device.anh2 * n2 * (n2 - 1);
}

namespace detail {

struct NamedDenominator {
    const char* name;
    double value;
};

// Every denominator of the second-order energies and of the dressed drive
// matrices, as functions of the detuning D = omega1 - omega2.
inline std::vector<NamedDenominator> pt_denominators(const DeviceParams& device) {
    const double d1 = device.anh1, d2 = device.anh2, delta = device.detuning();
    return {
        {"Delta", delta},
        {"anh2-Delta", d2 - delta},
        {"anh1+Delta", d1 + delta},
        {"2*anh2-Delta", 2.0 * d2 - delta},
        {"2*anh1+Delta", 2.0 * d1 + delta},
        {"Delta+anh1-anh2", delta + d1 - d2},
    };
}

inline void guard_pt_denominators(const DeviceParams& device, double pole_guard) {
    for (const auto& d : pt_denominators(device)) {
        if (std::abs(d.value) < pole_guard) {
            throw ResonancePole("perturbation: denominator " + std::string(d.name) + " = " +
                                std::to_string(d.value) + " MHz is inside the pole guard of " +
                                std::to_string(pole_guard) + " MHz");
        }
    }
}

}  // namespace detail

// Second-order energies of the ten low-lying states. The exchange term couples
// |n1,n2> only to |n1-1,n2+1> and |n1+1,n2-1| (total excitation conserved), so
// each energy picks up at most two correction terms:
//   E = E_bare + J^2 n1 (n2+1) / (E_bare - E_bare(n1-1,n2+1))
//            + J^2 (n1+1) n2 / (E_bare - E_bare(n1+1,n2-1))
inline DressedSpectrum dressed_energies_pt2(const DeviceParams& device, double pole_guard = 1.0) {
    device.validate();
    detail::guard_pt_denominators(device, pole_guard);
    const double j2 = device.coupling_j * device.coupling_j;
    DressedSpectrum out;
    out.source = SpectrumSource::Pt2;
    for (int k = 0; k < low_state_count; ++k) {
        auto [n1, n2] = low_states[k];
        double e = bare_energy(device, n1, n2);
        if (n1 >= 1) {
            double gap = bare_energy(device, n1, n2) - bare_energy(device, n1 - 1, n2 + 1);
            e += j2 * n1 * (n2 + 1) / gap;
        }
        if (n2 >= 1) {
            double gap = bare_energy(device, n1, n2) - bare_energy(device, n1 + 1, n2 - 1);
            e += j2 * (n1 + 1) * n2 / gap;
        }
        out.energies[k] = e;
    }
    out.zeta = out.energy(1, 1) - out.energy(1, 0) - out.energy(0, 1) + out.energy(0, 0);
    return out;
}

// Closed form for the same combination: zeta = 2 J^2 (d1+d2) / ((D+d1)(D-d2)).
inline double zz_shift_closed_form(const DeviceParams& device, double pole_guard = 1.0) {
    const double d1 = device.anh1, d2 = device.anh2, delta = device.detuning();
    if (std::abs(delta + d1) < pole_guard || std::abs(delta - d2) < pole_guard) {
        throw ResonancePole("zz_shift_closed_form: detuning too close to a pole");
    }
    return 2.0 * device.coupling_j * device.coupling_j * (d1 + d2) /
           ((delta + d1) * (delta - d2));
}

// --------------------------- dressed drive matrices --------------------------

struct DressedDriveMatrix {
    int which_drive{1};  // 1: (b+b†) line, 2: (c+c†) line
    Eigen::Matrix<double, low_state_count, low_state_count> matrix =
        Eigen::Matrix<double, low_state_count, low_state_count>::Zero();

    double entry(int bra1, int bra2, int ket1, int ket2) const {
        return matrix(low_state_index(bra1, bra2), low_state_index(ket1, ket2));
    }
};

// First-order dressed drive matrices on the 3-excitation manifold. Entries are
// dimensionless matrix elements of the bare quadrature (b+b†) or (c+c†) between
// the dressed states; a drive of amplitude eps produces a Rabi frequency of
// eps * |entry| on the corresponding transition.
inline DressedDriveMatrix dressed_drive_matrix_pt(const DeviceParams& device, int which,
                                                  double pole_guard = 1.0) {
    if (which != 1 && which != 2) {
        throw std::invalid_argument("dressed_drive_matrix_pt: which must be 1 or 2");
    }
    device.validate();
    detail::guard_pt_denominators(device, pole_guard);

    const double j = device.coupling_j;
    const double d1 = device.anh1, d2 = device.anh2, dd = device.detuning();
    const double r2 = std::sqrt(2.0), r3 = std::sqrt(3.0), r6 = std::sqrt(6.0);

    DressedDriveMatrix out;
    out.which_drive = which;
    auto set = [&out](int b1, int b2, int k1, int k2, double value) {
        int r = low_state_index(b1, b2), c = low_state_index(k1, k2);
        out.matrix(r, c) = value;
        out.matrix(c, r) = value;
    };

    if (which == 1) {
        // Drive on the first transmon; conditional elements depend on anh1.
        set(0, 0, 0, 1, -j / dd);
        set(0, 0, 1, 0, 1.0);
        set(0, 1, 1, 1, 1.0);
        set(0, 1, 0, 2, r2 * j / (d2 - dd));
        set(0, 1, 2, 0, -r2 * j * d1 / (dd * (d1 + dd)));
        set(1, 0, 1, 1, j * (d1 - dd) / (dd * (d1 + dd)));
        set(1, 0, 2, 0, r2);
        set(1, 1, 1, 2, -r2 * j * (d2 + d1 - dd) / ((d2 - dd) * (-d2 + d1 + dd)));
        set(1, 1, 2, 1, r2);
        set(1, 1, 3, 0, -r6 * j * d1 / ((d1 + dd) * (2.0 * d1 + dd)));
        set(0, 2, 0, 3, r3 * j / (2.0 * d2 - dd));
        set(0, 2, 1, 2, 1.0);
        set(0, 2, 2, 1, 2.0 * j * d1 / ((d2 - dd) * (-d2 + d1 + dd)));
        set(2, 0, 2, 1, j * (d1 - dd) / ((d1 + dd) * (2.0 * d1 + dd)));
        set(2, 0, 3, 0, r3);
    } else {
        // Drive on the second transmon; conditional elements depend on anh2.
        set(0, 0, 0, 1, 1.0);
        set(0, 0, 1, 0, j / dd);
        set(0, 1, 1, 1, j * (d2 + dd) / (dd * (dd - d2)));
        set(0, 1, 0, 2, r2);
        set(1, 0, 1, 1, 1.0);
        set(1, 0, 0, 2, r2 * j * d2 / ((d2 - dd) * dd));
        set(1, 0, 2, 0, r2 * j / (d1 + dd));
        set(1, 1, 0, 3, -r6 * j * d2 / (2.0 * d2 * d2 - 3.0 * dd * d2 + dd * dd));
        set(1, 1, 1, 2, r2);
        set(1, 1, 2, 1, r2 * j * (d2 + d1 + dd) / ((d1 + dd) * (-d2 + d1 + dd)));
        set(0, 2, 0, 3, r3);
        set(0, 2, 1, 2, j * (d2 + dd) / (2.0 * d2 * d2 - 3.0 * dd * d2 + dd * dd));
        set(2, 0, 1, 2, -2.0 * j * d2 / ((d1 + dd) * (-d2 + d1 + dd)));
        set(2, 0, 2, 1, 1.0);
        set(2, 0, 3, 0, r3 * j / (2.0 * d1 + dd));
    }
    return out;
}

// --------------------------- exact diagonalization ---------------------------

struct ExactDressed {
    DressedSpectrum spectrum;                          // source = Exact
    SpaceDescriptor space;
    Eigen::VectorXd all_energies;                      // ascending
    Eigen::MatrixXcd all_states;                       // columns match all_energies
    std::array<int, low_state_count> label_columns{};  // eigencolumn per low state
    double min_label_overlap{1.0};                     // worst |<bare|dressed>|^2
};

// Diagonalizes the full coupled Hamiltonian and labels each low-lying
// eigenvector by the bare Fock state holding most of its weight. Labeled
// eigenvectors are re-phased so the owning bare amplitude is real positive,
// which makes dressed matrix elements real and their signs deterministic.
inline ExactDressed exact_dressed(const DeviceParams& device, const SpaceDescriptor& space,
                                  double overlap_threshold = 0.7) {
    if (space.levels_per_mode[0] < 4 || space.levels_per_mode[1] < 4) {
        throw std::invalid_argument("exact_dressed: need at least 4 levels per mode");
    }
    if (space.levels_per_mode[0] != space.levels_per_mode[1]) {
        throw std::invalid_argument("exact_dressed: truncation must be square");
    }
    // The caller may ask for a finer truncation than the device's nominal one
    // (e.g. to check truncation convergence); the Hamiltonian follows the space.
    DeviceParams resized = device;
    resized.levels = space.levels_per_mode[0];
    Operator h = model::build_system_hamiltonian(resized, space);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(h.matrix);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("exact_dressed: eigendecomposition failed");
    }

    ExactDressed out{.spectrum = {}, .space = space, .all_energies = solver.eigenvalues(),
                     .all_states = solver.eigenvectors()};
    out.spectrum.source = SpectrumSource::Exact;

    for (int k = 0; k < low_state_count; ++k) {
        auto [n1, n2] = low_states[k];
        int bare_row = space.index_of(n1, n2);
        int best_col = 0;
        double best_overlap = -1.0;
        for (int col = 0; col < space.dimension; ++col) {
            double overlap = std::norm(out.all_states(bare_row, col));
            if (overlap > best_overlap) {
                best_overlap = overlap;
                best_col = col;
            }
        }
        if (best_overlap < overlap_threshold) {
            throw LabelAmbiguity("exact_dressed: |" + std::to_string(n1) + std::to_string(n2) +
                                 "> owns only " + std::to_string(best_overlap) +
                                 " of its best eigenvector (threshold " +
                                 std::to_string(overlap_threshold) + ")");
        }
        // Re-phase so the owning bare component is real positive.
        std::complex<double> amp = out.all_states(bare_row, best_col);
        out.all_states.col(best_col) *= std::conj(amp) / std::abs(amp);
        out.label_columns[k] = best_col;
        out.spectrum.energies[k] = out.all_energies(best_col);
        out.min_label_overlap = std::min(out.min_label_overlap, best_overlap);
    }
    out.spectrum.zeta = out.spectrum.energy(1, 1) - out.spectrum.energy(1, 0) -
                        out.spectrum.energy(0, 1) + out.spectrum.energy(0, 0);
    return out;
}

// Numeric counterpart of dressed_drive_matrix_pt: the bare quadrature operator
// sandwiched between labeled exact eigenvectors.
inline DressedDriveMatrix dressed_drive_matrix_numeric(const DeviceParams& device,
                                                       const SpaceDescriptor& space, int which,
                                                       double overlap_threshold = 0.7) {
    ExactDressed dressed = exact_dressed(device, space, overlap_threshold);
    Operator drive = model::build_drive_operator(space, which);
    DressedDriveMatrix out;
    out.which_drive = which;
    for (int r = 0; r < low_state_count; ++r) {
        for (int c = 0; c < low_state_count; ++c) {
            std::complex<double> value = dressed.all_states.col(dressed.label_columns[r]).dot(
                drive.matrix * dressed.all_states.col(dressed.label_columns[c]));
            out.matrix(r, c) = value.real();
        }
    }
    return out;
}

// --------------------------- CR coefficients ---------------------------------

enum class CRMethod { ClosedForm, MatrixElement, Numeric };

inline const char* to_string(CRMethod method) {
    switch (method) {
        case CRMethod::ClosedForm: return "closed-form";
        case CRMethod::MatrixElement: return "matrix-element";
        case CRMethod::Numeric: return "numeric";
    }
    return "unknown";
}

struct EffectiveCRTerms {
    double mu{0.0};    // dimensionless conditional (ZX-type) drive participation
    double nu{0.0};    // dimensionless unconditional (IX-type) crosstalk
    double stark{0.0}; // MHz: dressed 0-1 frequency of the driven transmon minus
                       // the partner's, i.e. the frame detuning when the carrier
                       // sits on the partner's dressed transition
    CRMethod method{CRMethod::ClosedForm};
    int which_drive{2};
    bool method_mismatch{false};  // matrix/numeric result differs >2x from closed form
};

// Closed-form participation ratio mu(D) = (J/D) * (d2 / (d2 + D)). Poles at
// D = 0 and D = -d2 only. Note its detuning-sign convention is opposite to the
// matrix-element forms below; both are reported so the disagreement is visible
// rather than silently reconciled.
inline double mu_closed_form(const DeviceParams& device, double pole_guard = 1.0) {
    const double delta = device.detuning(), d2 = device.anh2;
    if (std::abs(delta) < pole_guard || std::abs(d2 + delta) < pole_guard) {
        throw ResonancePole("mu_closed_form: detuning within the pole guard of 0 or -anh2");
    }
    return (device.coupling_j / delta) * (d2 / (d2 + delta));
}

inline EffectiveCRTerms cr_coefficients(const DeviceParams& device, CRMethod method,
                                        int which_drive = 2, double pole_guard = 1.0) {
    if (which_drive != 1 && which_drive != 2) {
        throw std::invalid_argument("cr_coefficients: which_drive must be 1 or 2");
    }
    EffectiveCRTerms out;
    out.method = method;
    out.which_drive = which_drive;

    if (method == CRMethod::ClosedForm) {
        // The closed form covers only mu; no companion crosstalk expression is
        // evaluated here, so nu is reported as zero.
        out.mu = mu_closed_form(device, pole_guard);
        out.nu = 0.0;
        DressedSpectrum spec = dressed_energies_pt2(device, pole_guard);
        out.stark = (which_drive == 2) ? spec.energy(0, 1) - spec.energy(1, 0)
                                       : spec.energy(1, 0) - spec.energy(0, 1);
        return out;
    }

    DressedDriveMatrix m;
    DressedSpectrum spec;
    if (method == CRMethod::MatrixElement) {
        m = dressed_drive_matrix_pt(device, which_drive, pole_guard);
        spec = dressed_energies_pt2(device, pole_guard);
    } else {
        SpaceDescriptor space = model::make_device_space(device);
        m = dressed_drive_matrix_numeric(device, space, which_drive);
        spec = exact_dressed(device, space).spectrum;
    }

    // Conditional elements of the undriven (target) transmon's 0-1 transition,
    // split by the driven transmon's state:
    //   drive 2: m0 = <00|M|10>, m1 = <01|M|11>  (target = mode 1)
    //   drive 1: m0 = <00|M|01>, m1 = <10|M|11>  (target = mode 2)
    double m0, m1;
    if (which_drive == 2) {
        m0 = m.entry(0, 0, 1, 0);
        m1 = m.entry(0, 1, 1, 1);
        out.stark = spec.energy(0, 1) - spec.energy(1, 0);
    } else {
        m0 = m.entry(0, 0, 0, 1);
        m1 = m.entry(1, 0, 1, 1);
        out.stark = spec.energy(1, 0) - spec.energy(0, 1);
    }
    out.mu = 0.5 * (m1 - m0);
    out.nu = 0.5 * (m1 + m0);

    // Cross-check against the closed form; a >2x or opposite-sign disagreement
    // is flagged rather than hidden (the two conventions genuinely diverge in
    // some detuning regions).
    try {
        double closed = mu_closed_form(device, pole_guard);
        if (closed == 0.0) {
            out.method_mismatch = (out.mu != 0.0);
        } else {
            double ratio = out.mu / closed;
            out.method_mismatch = (ratio < 0.5 || ratio > 2.0);
        }
    } catch (const ResonancePole&) {
        out.method_mismatch = false;  // closed form has no value to compare against
    }
    return out;
}

// --------------------------- validity diagnostics ----------------------------

struct PoleDiagnostic {
    std::string name;      // which pole, in terms of the anharmonicities
    double location;       // pole position in detuning (MHz)
    double distance;       // |detuning - location| (MHz)
    bool flagged;          // inside the pole guard
};

struct ValidityReport {
    std::vector<PoleDiagnostic> poles;
    double j_over_delta{0.0};
    bool strong_coupling{false};  // |J/Delta| > 0.1

    bool near_pole() const {
        for (const auto& p : poles) {
            if (p.flagged) {
                return true;
            }
        }
        return false;
    }
};

inline ValidityReport validity_check(const DeviceParams& device, double pole_guard = 1.0) {
    const double d1 = device.anh1, d2 = device.anh2, delta = device.detuning();
    const std::array<std::pair<const char*, double>, 7> poles{{
        {"0", 0.0},
        {"-anh2", -d2},
        {"anh2", d2},
        {"-anh1", -d1},
        {"-2*anh1", -2.0 * d1},
        {"2*anh2", 2.0 * d2},
        {"anh2-anh1", d2 - d1},
    }};
    ValidityReport report;
    for (const auto& [name, location] : poles) {
        double distance = std::abs(delta - location);
        report.poles.push_back({name, location, distance, distance < pole_guard});
    }
    report.j_over_delta = (delta == 0.0) ? std::numeric_limits<double>::infinity()
                                         : std::abs(device.coupling_j / delta);
    report.strong_coupling = report.j_over_delta > 0.1;
    return report;
}

// --------------------------- anticrossing ------------------------------------

struct AnticrossingPoint {
    double delta;      // detuning (MHz)
    double lower;      // lower single-excitation eigenvalue (MHz)
    double upper;      // upper single-excitation eigenvalue (MHz)
    double splitting;  // upper - lower = sqrt(delta^2 + 4 J^2)
};

// Eigenvalues of the single-excitation block {|01>,|10>} as the first transmon
// is tuned across the second: omega1 = omega2 + delta for each grid value.
inline std::vector<AnticrossingPoint> anticrossing_spectrum(const DeviceParams& device,
                                                            const std::vector<double>& delta_grid) {
    if (delta_grid.empty()) {
        throw std::invalid_argument("anticrossing_spectrum: detuning grid is empty");
    }
    std::vector<AnticrossingPoint> out;
    out.reserve(delta_grid.size());
    for (double delta : delta_grid) {
        double omega1 = device.omega2 + delta;
        double mean = 0.5 * (omega1 + device.omega2);
        double half_split =
            0.5 * std::sqrt(delta * delta + 4.0 * device.coupling_j * device.coupling_j);
        out.push_back({delta, mean - half_split, mean + half_split, 2.0 * half_split});
    }
    return out;
}

}  // namespace crosskit::perturbation
