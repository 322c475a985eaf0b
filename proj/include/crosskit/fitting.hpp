// fitting.hpp — the analysis chain for CR Rabi data: damped-sinusoid fits,
// effective-coupling extraction from conditional frequency differences, the
// low-power linear-regime slope, and the high-power saturation level.
//
// Frequencies are MHz, decay times microseconds, durations at the interface in
// ns (matching the trace records).
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <vector>

namespace crosskit::fitting {

// --------------------------- error types -------------------------------------

struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RegimeNotFound : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NoPlateau : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --------------------------- damped sinusoid ---------------------------------

enum class FitStatus {
    Converged,
    NoOscillation,  // no credible spectral peak; frequency pinned to 0
};

// Least-squares fit of  A e^{-t/tau} cos(2 pi f t + phi) + C.
// Parameter order everywhere: (A, tau, f, phi, C).
struct SinusoidFit {
    double frequency{0.0};      // MHz, >= 0 (sign folded into phase)
    double decay_time_us{0.0};  // tau
    double amplitude{0.0};
    double phase{0.0};          // radians in (-pi, pi]
    double offset{0.0};
    Eigen::Matrix<double, 5, 5> covariance = Eigen::Matrix<double, 5, 5>::Zero();
    std::array<double, 5> ci95{};  // 1.96 * sqrt(diag covariance)
    double residual_rms{0.0};
    FitStatus status{FitStatus::Converged};

    double frequency_ci95() const { return ci95[2]; }
};

namespace detail {

struct Params5 {
    double a, tau, f, phi, c;
};

inline double model_value(const Params5& p, double t_us) {
    return p.a * std::exp(-t_us / p.tau) * std::cos(2.0 * M_PI * p.f * t_us + p.phi) + p.c;
}

inline double cost_of(const Params5& p, const std::vector<double>& t,
                      const std::vector<double>& y) {
    double cost = 0.0;
    for (size_t i = 0; i < t.size(); ++i) {
        double r = model_value(p, t[i]) - y[i];
        cost += r * r;
    }
    return cost;
}

inline void fill_jacobian_residual(const Params5& p, const std::vector<double>& t,
                                   const std::vector<double>& y, Eigen::MatrixXd& jac,
                                   Eigen::VectorXd& res) {
    for (size_t i = 0; i < t.size(); ++i) {
        double ti = t[i];
        double env = std::exp(-ti / p.tau);
        double arg = 2.0 * M_PI * p.f * ti + p.phi;
        double cosv = std::cos(arg), sinv = std::sin(arg);
        res(static_cast<int>(i)) = p.a * env * cosv + p.c - y[i];
        jac(static_cast<int>(i), 0) = env * cosv;
        jac(static_cast<int>(i), 1) = p.a * env * cosv * ti / (p.tau * p.tau);
        jac(static_cast<int>(i), 2) = -p.a * env * sinv * 2.0 * M_PI * ti;
        jac(static_cast<int>(i), 3) = -p.a * env * sinv;
        jac(static_cast<int>(i), 4) = 1.0;
    }
}

// Levenberg-Marquardt descent from one start. Returns true when converged;
// `p` then holds the refined parameters and `cost` the final sum of squares.
// `f_bound` rejects frequency excursions beyond the sampling band: on a
// uniform grid every f + k/dt is an exact alias of f, so an unbounded step
// can hop to an equally good but spurious high-frequency minimum. `tau_floor`
// rejects collapse onto the first few samples (a decay spike masquerading as
// a fit).
inline bool lm_descend(Params5& p, double& cost, const std::vector<double>& t,
                       const std::vector<double>& y, double f_bound, double tau_floor) {
    const int n = static_cast<int>(t.size());
    Eigen::MatrixXd jac(n, 5);
    Eigen::VectorXd res(n);
    double lambda = 1e-3;
    cost = cost_of(p, t, y);
    int quiet_steps = 0;  // consecutive accepted steps with negligible gain
    for (int iter = 0; iter < 600; ++iter) {
        fill_jacobian_residual(p, t, y, jac, res);
        Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
        Eigen::Matrix<double, 5, 1> jtr = jac.transpose() * res;
        bool accepted = false;
        while (lambda < 1e12) {
            Eigen::Matrix<double, 5, 5> lhs = jtj;
            for (int k = 0; k < 5; ++k) {
                lhs(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            }
            Eigen::Matrix<double, 5, 1> step = lhs.ldlt().solve(-jtr);
            Params5 trial{p.a + step(0), p.tau + step(1), p.f + step(2), p.phi + step(3),
                          p.c + step(4)};
            if (trial.tau < tau_floor || !std::isfinite(trial.tau) ||
                std::abs(trial.f) > f_bound) {
                lambda *= 4.0;
                continue;
            }
            double trial_cost = cost_of(trial, t, y);
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                double improvement = cost - trial_cost;
                p = trial;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                quiet_steps = improvement <= 1e-13 * (1.0 + cost) ? quiet_steps + 1 : 0;
                if (quiet_steps >= 3) {
                    return true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!accepted) {
            // The quadratic model cannot improve the fit any further; treat the
            // current point as the (possibly local) optimum.
            return true;
        }
    }
    return false;
}

}  // namespace detail

// Damped-sinusoid least squares. Durations in ns, values are probabilities.
// The initial guess comes from the discrete spectrum (frequency and phase),
// the signal mean (offset), and half the peak-to-peak range (amplitude);
// Levenberg-Marquardt descent runs from a small family of starts and keeps the
// best. A trace with no credible spectral peak (SNR < 3 against the median
// spectral power) reports NoOscillation: frequency 0 with infinite CI.
inline SinusoidFit fit_damped_sinusoid(const std::vector<double>& durations_ns,
                                       const std::vector<double>& values) {
    const size_t n = durations_ns.size();
    if (n != values.size()) {
        throw std::invalid_argument("fit_damped_sinusoid: durations/values length mismatch");
    }
    if (n < 8) {
        throw std::invalid_argument("fit_damped_sinusoid: need at least 8 samples");
    }
    for (size_t i = 0; i < n; ++i) {
        if (values[i] < -1e-9 || values[i] > 1.0 + 1e-9) {
            throw std::invalid_argument("fit_damped_sinusoid: values must lie in [0,1]");
        }
        if (i > 0 && durations_ns[i] <= durations_ns[i - 1]) {
            throw std::invalid_argument("fit_damped_sinusoid: durations must be ascending");
        }
    }

    std::vector<double> t_us(n);
    for (size_t i = 0; i < n; ++i) {
        t_us[i] = durations_ns[i] * 1e-3;
    }
    const double span = t_us.back() - t_us.front();

    double mean = 0.0, lo = values[0], hi = values[0];
    for (double v : values) {
        mean += v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    mean /= static_cast<double>(n);

    // Discrete spectrum on a 2x-oversampled grid up to the mean Nyquist rate.
    const int bins = static_cast<int>(n);
    std::vector<double> power(bins + 1, 0.0);
    for (int k = 1; k <= bins; ++k) {
        double f = 0.5 * k / span;
        std::complex<double> acc = 0.0;
        for (size_t i = 0; i < n; ++i) {
            acc += (values[i] - mean) *
                   std::polar(1.0, -2.0 * M_PI * f * (t_us[i] - t_us.front()));
        }
        power[k] = std::norm(acc);
    }
    int peak_bin = 1;
    for (int k = 2; k <= bins; ++k) {
        if (power[k] > power[peak_bin]) {
            peak_bin = k;
        }
    }
    std::vector<double> sorted_power(power.begin() + 1, power.end());
    std::nth_element(sorted_power.begin(), sorted_power.begin() + sorted_power.size() / 2,
                     sorted_power.end());
    double median_power = sorted_power[sorted_power.size() / 2];
    double peak_power = power[peak_bin];

    SinusoidFit out;
    if (peak_power < 1e-20 || (median_power > 0.0 && peak_power / median_power < 3.0)) {
        out.status = FitStatus::NoOscillation;
        out.frequency = 0.0;
        out.offset = mean;
        out.amplitude = 0.0;
        out.decay_time_us = std::numeric_limits<double>::infinity();
        out.ci95.fill(std::numeric_limits<double>::infinity());
        double ss = 0.0;
        for (double v : values) {
            ss += (v - mean) * (v - mean);
        }
        out.residual_rms = std::sqrt(ss / static_cast<double>(n));
        return out;
    }

    // Refine the peak off the bin grid with a log-power parabola through the
    // three bins around the maximum; a tone midway between bins starts the
    // descent several percent off otherwise, deep inside the frequency-phase
    // valley.
    double peak_offset = 0.0;
    if (peak_bin > 1 && peak_bin < bins && power[peak_bin - 1] > 0.0 &&
        power[peak_bin + 1] > 0.0) {
        double lo_p = std::log(power[peak_bin - 1]);
        double mid_p = std::log(power[peak_bin]);
        double hi_p = std::log(power[peak_bin + 1]);
        double denom = lo_p - 2.0 * mid_p + hi_p;
        if (denom < 0.0) {
            peak_offset = std::clamp(0.5 * (lo_p - hi_p) / denom, -0.5, 0.5);
        }
    }
    const double f_peak = 0.5 * (peak_bin + peak_offset) / span;
    std::complex<double> refined = 0.0;
    for (size_t i = 0; i < n; ++i) {
        refined += (values[i] - mean) *
                   std::polar(1.0, -2.0 * M_PI * f_peak * (t_us[i] - t_us.front()));
    }
    const double phi_peak = std::atan2(refined.imag(), refined.real());
    const double amp_range = 0.5 * (hi - lo);
    const double amp_dft = 2.0 * std::abs(refined) / static_cast<double>(n);

    std::vector<detail::Params5> starts;
    for (double f0 : {f_peak, 0.5 * f_peak}) {
        for (auto [a0, tau0] : {std::pair{amp_dft, 3.0 * span}, std::pair{amp_range, span}}) {
            for (double dphi : {0.0, 0.5 * M_PI, M_PI, -0.5 * M_PI}) {
                starts.push_back({a0, tau0, f0, phi_peak + dphi, mean});
            }
        }
    }

    // Frequencies beyond the mean Nyquist rate are aliases of in-band tones
    // on a uniform grid; decays faster than 2% of the window are spikes, not
    // envelopes.
    const double f_bound = 1.05 * 0.5 * static_cast<double>(n) / span;
    const double tau_floor = span / 50.0;
    // An essentially exact fit ends the search early: remaining starts could
    // only tie.
    double signal_ss = 0.0;
    for (double v : values) {
        signal_ss += (v - mean) * (v - mean);
    }
    bool any_converged = false;
    detail::Params5 best{};
    double best_cost = std::numeric_limits<double>::infinity();
    for (auto start : starts) {
        detail::Params5 p = start;
        double cost;
        if (detail::lm_descend(p, cost, t_us, values, f_bound, tau_floor) &&
            cost < best_cost) {
            best = p;
            best_cost = cost;
            any_converged = true;
            if (best_cost <= 1e-3 * signal_ss) {
                break;
            }
        }
    }
    if (!any_converged) {
        throw NonConvergence("fit_damped_sinusoid: no start converged within max iterations");
    }

    // Canonical form: amplitude >= 0, frequency >= 0, phase in (-pi, pi].
    if (best.a < 0.0) {
        best.a = -best.a;
        best.phi += M_PI;
    }
    if (best.f < 0.0) {
        best.f = -best.f;
        best.phi = -best.phi;
    }
    best.phi = std::remainder(best.phi, 2.0 * M_PI);
    if (best.phi <= -M_PI) {
        best.phi += 2.0 * M_PI;
    }

    Eigen::MatrixXd jac(static_cast<int>(n), 5);
    Eigen::VectorXd res(static_cast<int>(n));
    detail::fill_jacobian_residual(best, t_us, values, jac, res);
    double s2 = res.squaredNorm() / static_cast<double>(n - 5);
    Eigen::Matrix<double, 5, 5> jtj = jac.transpose() * jac;
    Eigen::Matrix<double, 5, 5> cov = s2 * jtj.inverse();

    out.frequency = best.f;
    out.decay_time_us = best.tau;
    out.amplitude = best.a;
    out.phase = best.phi;
    out.offset = best.c;
    out.covariance = cov;
    for (int k = 0; k < 5; ++k) {
        double var = cov(k, k);
        out.ci95[k] = std::isfinite(var) && var >= 0.0
                          ? 1.96 * std::sqrt(var)
                          : std::numeric_limits<double>::infinity();
    }
    out.residual_rms = std::sqrt(res.squaredNorm() / static_cast<double>(n));
    out.status = FitStatus::Converged;
    return out;
}

// --------------------------- effective coupling ------------------------------

struct JeffPoint {
    double amplitude{0.0};    // drive amplitude (MHz)
    double jeff{0.0};         // effective coupling (MHz), signed
    double uncertainty{0.0};  // same convention as the inputs (we pass ci95)
};

// Half the conditional frequency difference; the only place a sign enters the
// population-only analysis path.
inline JeffPoint compute_jeff(const SinusoidFit& fit_pi, const SinusoidFit& fit_0,
                              double amplitude = 0.0) {
    JeffPoint out;
    out.amplitude = amplitude;
    out.jeff = 0.5 * (fit_pi.frequency - fit_0.frequency);
    out.uncertainty = 0.5 * std::hypot(fit_pi.frequency_ci95(), fit_0.frequency_ci95());
    return out;
}

namespace detail {

// 1/sigma^2 weights when every uncertainty is usable, uniform otherwise.
inline std::vector<double> point_weights(const std::vector<JeffPoint>& points) {
    std::vector<double> w(points.size(), 1.0);
    bool usable = true;
    for (const auto& p : points) {
        if (!(p.uncertainty > 0.0) || !std::isfinite(p.uncertainty)) {
            usable = false;
            break;
        }
    }
    if (usable) {
        for (size_t i = 0; i < points.size(); ++i) {
            w[i] = 1.0 / (points[i].uncertainty * points[i].uncertainty);
        }
    }
    return w;
}

}  // namespace detail

struct LinearRegime {
    double slope{0.0};      // MHz per amplitude unit
    double ci95{0.0};
    int prefix_len{0};      // points participating in the accepted fit
    double r_squared{0.0};
};

// Through-origin weighted fit over the largest low-amplitude prefix (at least
// 4 points) that keeps the coefficient of determination at or above 0.995.
// The zero intercept encodes that the effective coupling vanishes with the
// drive. R^2 is the uncentered variant appropriate to through-origin fits.
inline LinearRegime fit_linear_regime(const std::vector<JeffPoint>& points) {
    const size_t n = points.size();
    if (n < 4) {
        throw RegimeNotFound("fit_linear_regime: need at least 4 points");
    }
    for (size_t i = 1; i < n; ++i) {
        if (points[i].amplitude <= points[i - 1].amplitude) {
            throw std::invalid_argument("fit_linear_regime: points must be sorted by amplitude");
        }
    }
    std::vector<double> w = detail::point_weights(points);

    LinearRegime best;
    bool found = false;
    for (size_t k = 4; k <= n; ++k) {
        double swaa = 0.0, sway = 0.0;
        for (size_t i = 0; i < k; ++i) {
            swaa += w[i] * points[i].amplitude * points[i].amplitude;
            sway += w[i] * points[i].amplitude * points[i].jeff;
        }
        if (swaa == 0.0) {
            continue;
        }
        double slope = sway / swaa;
        double rss = 0.0, tss = 0.0;
        for (size_t i = 0; i < k; ++i) {
            double r = points[i].jeff - slope * points[i].amplitude;
            rss += w[i] * r * r;
            tss += w[i] * points[i].jeff * points[i].jeff;
        }
        double r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
        if (r2 >= 0.995) {
            best.slope = slope;
            best.r_squared = r2;
            best.prefix_len = static_cast<int>(k);
            best.ci95 = 1.96 * std::sqrt((rss / static_cast<double>(k - 1)) / swaa);
            found = true;
        }
    }
    if (!found) {
        throw RegimeNotFound("fit_linear_regime: no prefix of >= 4 points reaches R^2 >= 0.995");
    }
    return best;
}

struct SaturationFit {
    double level{0.0};   // weighted mean |jeff| over the plateau (MHz)
    double ci95{0.0};    // from plateau scatter
    int sign{+1};        // sign of the plateau's signed jeff, reported separately
    int count{0};        // plateau size
};

// Zero-slope fit to the asymptotic level: the plateau is the trailing
// contiguous run of points whose |jeff| stays within 10% of the curve maximum.
// Two checks reject runs that are still rising rather than saturated:
//   - proportional growth: a through-origin line explains the run (centered
//     R^2 >= 0.995), which strictly linear data satisfies exactly on any
//     amplitude grid, and
//   - drift: the weighted linear slope times the amplitude span exceeds 10%
//     of the level.
inline SaturationFit fit_saturation(const std::vector<JeffPoint>& points) {
    const size_t n = points.size();
    if (n < 3) {
        throw NoPlateau("fit_saturation: need at least 3 points");
    }
    for (size_t i = 1; i < n; ++i) {
        if (points[i].amplitude <= points[i - 1].amplitude) {
            throw std::invalid_argument("fit_saturation: points must be sorted by amplitude");
        }
    }
    double peak = 0.0;
    for (const auto& p : points) {
        peak = std::max(peak, std::abs(p.jeff));
    }
    size_t start = n;
    while (start > 0 && std::abs(points[start - 1].jeff) >= 0.9 * peak) {
        --start;
    }
    const size_t count = n - start;
    if (count < 3) {
        throw NoPlateau("fit_saturation: fewer than 3 trailing points near the maximum");
    }

    std::vector<JeffPoint> run(points.begin() + static_cast<long>(start), points.end());
    std::vector<double> w = detail::point_weights(run);
    double sw = 0.0, mean_abs = 0.0, mean_signed = 0.0, mean_a = 0.0;
    for (size_t i = 0; i < run.size(); ++i) {
        sw += w[i];
        mean_abs += w[i] * std::abs(run[i].jeff);
        mean_signed += w[i] * run[i].jeff;
        mean_a += w[i] * run[i].amplitude;
    }
    mean_abs /= sw;
    mean_signed /= sw;
    mean_a /= sw;

    // Proportional-growth check: does a through-origin line still explain the
    // run? Judged against the centered sum of squares so that near-constant
    // data (tiny variation, large offset) is not mistaken for a line.
    double swaa = 0.0, sway = 0.0, centered = 0.0;
    for (size_t i = 0; i < run.size(); ++i) {
        swaa += w[i] * run[i].amplitude * run[i].amplitude;
        sway += w[i] * run[i].amplitude * std::abs(run[i].jeff);
        double d = std::abs(run[i].jeff) - mean_abs;
        centered += w[i] * d * d;
    }
    double line_rss = 0.0;
    if (swaa > 0.0) {
        double m = sway / swaa;
        for (size_t i = 0; i < run.size(); ++i) {
            double r = std::abs(run[i].jeff) - m * run[i].amplitude;
            line_rss += w[i] * r * r;
        }
    }
    bool proportional = centered > 0.0 ? (1.0 - line_rss / centered) >= 0.995
                                       : line_rss == 0.0 && mean_abs == 0.0;
    if (proportional) {
        throw NoPlateau("fit_saturation: trailing points still grow with amplitude");
    }

    // Drift check: weighted least-squares line through the run.
    double saa = 0.0, say = 0.0;
    for (size_t i = 0; i < run.size(); ++i) {
        double da = run[i].amplitude - mean_a;
        saa += w[i] * da * da;
        say += w[i] * da * (std::abs(run[i].jeff) - mean_abs);
    }
    double drift_slope = saa > 0.0 ? say / saa : 0.0;
    double span = run.back().amplitude - run.front().amplitude;
    if (std::abs(drift_slope * span) > 0.10 * std::abs(mean_abs)) {
        throw NoPlateau("fit_saturation: trailing points are still rising");
    }

    double scatter = 0.0;
    for (size_t i = 0; i < run.size(); ++i) {
        double d = std::abs(run[i].jeff) - mean_abs;
        scatter += w[i] * d * d;
    }
    SaturationFit out;
    out.level = mean_abs;
    out.ci95 = 1.96 * std::sqrt(scatter / (static_cast<double>(count - 1) * sw));
    out.sign = mean_signed >= 0.0 ? +1 : -1;
    out.count = static_cast<int>(count);
    return out;
}

}  // namespace crosskit::fitting
