#pragma once

// Analytic linear-loss channel: predicts every observable from the protocol
// parameters and the device model. Charlie sits at the midpoint of a
// symmetric link and interferes the two arriving pulses on a balanced beam
// splitter followed by two threshold detectors.

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>

#include "snstf/protocol.hpp"

namespace snstf {

class QuadratureError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct ArmModel
{
    double eta = 0.0;  ///< single-arm transmittance, detector efficiency included
    bool symmetric = true;
};

/// eta = eta_d * 10^(-(loss * L / 2) / 10).
inline ArmModel arm_transmittance(const DeviceModel& device)
{
    const double arm_loss_db = device.loss_db_per_km * device.distance_km / 2.0;
    return {device.eta_d * std::pow(10.0, -arm_loss_db / 10.0), true};
}

struct ClickProbs
{
    double only_d0 = 0.0;
    double only_d1 = 0.0;

    double total() const { return only_d0 + only_d1; }
};

/// Exactly-one-click probabilities for arrived intensities x (Alice) and
/// y (Bob) with phase difference `phase_diff`. Detector 0 is the
/// constructive port.
inline ClickProbs pair_click_probs(double x, double y, double phase_diff, const DeviceModel& device)
{
    if (!(x >= 0.0) || !(y >= 0.0)) throw std::domain_error("pair_click_probs: negative intensity");
    const double no_dark = 1.0 - device.p_d;
    const double mean = 0.5 * (x + y);
    const double cross = std::sqrt(x * y) * std::cos(phase_diff);

    if (device.misalignment == MisalignmentModel::Visibility) {
        const double v = (1.0 - 2.0 * device.e_a) * cross;
        // 1 - (1-p_d) e^{-I}, kept accurate for tiny I.
        const double c0 = device.p_d - no_dark * std::expm1(-(mean + v));
        const double c1 = device.p_d - no_dark * std::expm1(-std::max(0.0, mean - v));
        return {c0 * (1.0 - c1), c1 * (1.0 - c0)};
    }

    const double a0 = -std::expm1(-(mean + cross));
    const double a1 = -std::expm1(-std::max(0.0, mean - cross));
    const double r = device.e_a;
    // Photon-caused firing patterns after per-detector rerouting.
    const double none = (1.0 - a0) * (1.0 - a1);
    const double only0 = a0 * (1.0 - r) * ((1.0 - a1) + a1 * r) + (1.0 - a0) * a1 * r;
    const double only1 = a1 * (1.0 - r) * ((1.0 - a0) + a0 * r) + (1.0 - a1) * a0 * r;
    return {no_dark * (only0 + device.p_d * none), no_dark * (only1 + device.p_d * none)};
}

namespace detail {

inline constexpr double kQuadratureAbsTol = 1e-14;

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1]; non-negative half.
inline constexpr std::array<double, 8> kKronrodNodes{
    0.000000000000000000000000000000000, 0.207784955007898467600689403773245,
    0.405845151377397166906606412076961, 0.586087235467691130294144845693013,
    0.741531185599394439863864773280788, 0.864864423359769072789712788640926,
    0.949107912342758524526189684047851, 0.991455371120812639206854697526329};
inline constexpr std::array<double, 8> kKronrodWeights{
    0.209482141084727828012999174891714, 0.204432940075298892414161999234649,
    0.190350578064785409913256402421014, 0.169004726639267902826583426598550,
    0.140653259715525918745189590510238, 0.104790010322250183839876322541518,
    0.063092092629978553290700663189204, 0.022935322010529224963732008058970};
// Gauss-7 weights at Kronrod nodes 0, 2, 4, 6.
inline constexpr std::array<double, 4> kGaussWeights{
    0.417959183673469387755102040816327, 0.381830050505118944950369775488975,
    0.279705391489276667901467771423780, 0.129484966168869693270611432679082};

struct Panel
{
    double integral;
    double error;
    double l1;
};

template <class F>
Panel kronrod_panel(F& f, double a, double b)
{
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double f0 = f(c);
    double kronrod = kKronrodWeights[0] * f0;
    double gauss = kGaussWeights[0] * f0;
    double l1 = kKronrodWeights[0] * std::abs(f0);
    for (std::size_t i = 1; i < kKronrodNodes.size(); ++i) {
        const double lo = f(c - h * kKronrodNodes[i]);
        const double hi = f(c + h * kKronrodNodes[i]);
        kronrod += kKronrodWeights[i] * (lo + hi);
        l1 += kKronrodWeights[i] * (std::abs(lo) + std::abs(hi));
        if (i % 2 == 0) gauss += kGaussWeights[i / 2] * (lo + hi);
    }
    return {kronrod * h, std::abs(kronrod - gauss) * h, l1 * h};
}

template <class F>
Panel adaptive_kronrod(F& f, double a, double b, double abs_tol_per_width, int depth)
{
    const Panel p = kronrod_panel(f, a, b);
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * p.l1;
    if (p.error <= abs_tol_per_width * (b - a) || p.error <= roundoff) return p;
    if (depth == 0) return p;
    const double m = 0.5 * (a + b);
    const Panel left = adaptive_kronrod(f, a, m, abs_tol_per_width, depth - 1);
    const Panel right = adaptive_kronrod(f, m, b, abs_tol_per_width, depth - 1);
    return {left.integral + right.integral, left.error + right.error, left.l1 + right.l1};
}

/// Mean of `f` over [a, b] by adaptive Gauss-Kronrod bisection. The
/// absolute error of the mean must reach 1e-14 (or the round-off floor of
/// the integrand); otherwise QuadratureError is thrown.
template <class F>
double phase_average(F&& f, double a, double b)
{
    const double width = b - a;
    if (width <= 0.0) throw std::domain_error("phase_average: empty interval");
    if (width < 1e-9) return f(0.5 * (a + b));

    const Panel p = adaptive_kronrod(f, a, b, kQuadratureAbsTol, 24);
    const double roundoff = 64.0 * std::numeric_limits<double>::epsilon() * p.l1;
    if (p.error > kQuadratureAbsTol * width && p.error > roundoff)
        throw QuadratureError("phase average did not converge: error estimate " + std::to_string(p.error / width));
    return p.integral / width;
}

}  // namespace detail

/// Phase-averaged effective-event probability when Alice sends intensity
/// mu_a and Bob sends mu_b.
inline double expected_pair_yield(double mu_a, double mu_b, const ArmModel& arm, const DeviceModel& device)
{
    if (!(mu_a >= 0.0) || !(mu_b >= 0.0)) throw std::domain_error("expected_pair_yield: negative intensity");
    const double x = arm.eta * mu_a;
    const double y = arm.eta * mu_b;
    // The integrand is even in the phase difference.
    return detail::phase_average([&](double d) { return pair_click_probs(x, y, d, device).total(); }, 0.0, kPi);
}

struct SliceRates
{
    double t_plus_wrong = 0.0;   ///< detector-1-only rate in C_{Delta+}
    double t_minus_wrong = 0.0;  ///< detector-0-only rate in C_{Delta-}
    double s_plus_total = 0.0;
    double s_minus_total = 0.0;
};

/// Effective-event rates of mu1-mu1 pairs whose phase difference lies within
/// Delta/2 of 0 (plus slice) or of pi (minus slice).
inline SliceRates expected_slice_rates(const ProtocolParams& params, const ArmModel& arm, const DeviceModel& device)
{
    if (!(params.delta_slice > 0.0 && params.delta_slice <= kTwoPi))
        throw std::domain_error("expected_slice_rates: delta outside (0, 2pi]");
    const double x = arm.eta * params.mu1;
    const double half = 0.5 * params.delta_slice;
    auto at = [&](double d) { return pair_click_probs(x, x, d, device); };

    SliceRates r;
    // Both slices are symmetric about their centre.
    r.t_plus_wrong = detail::phase_average([&](double d) { return at(d).only_d1; }, 0.0, half);
    r.s_plus_total = detail::phase_average([&](double d) { return at(d).total(); }, 0.0, half);
    r.t_minus_wrong = detail::phase_average([&](double d) { return at(d).only_d0; }, kPi - half, kPi);
    r.s_minus_total = detail::phase_average([&](double d) { return at(d).total(); }, kPi - half, kPi);
    return r;
}

struct ZWindowRates
{
    double s_z = 0.0;
    double e_z = 0.0;
};

/// Yield and bit error of pairs where both parties chose the Z-window. An
/// effective event is an error when both sent or neither sent.
inline ZWindowRates expected_z_window(const ProtocolParams& params, const ArmModel& arm, const DeviceModel& device)
{
    const double pz = params.p_z;
    const double both = expected_pair_yield(params.mu_z, params.mu_z, arm, device);
    const double alice_only = expected_pair_yield(params.mu_z, 0.0, arm, device);
    const double bob_only = expected_pair_yield(0.0, params.mu_z, arm, device);
    const double neither = expected_pair_yield(0.0, 0.0, arm, device);

    const double wrong = pz * pz * both + (1.0 - pz) * (1.0 - pz) * neither;
    const double right = pz * (1.0 - pz) * (alice_only + bob_only);
    const double s_z = wrong + right;
    return {s_z, s_z > 0.0 ? wrong / s_z : 0.0};
}

/// Intensity of each source label, with the Z-window signal under `z`.
inline std::array<double, kSources> source_intensities(const ProtocolParams& p)
{
    return {0.0, p.mu1, p.mu2, p.mu_z};
}

/// Expected counts over N pulse pairs. Counts are real-valued.
inline Observables expected_observables(const ProtocolParams& params, const DeviceModel& device)
{
    const ArmModel arm = arm_transmittance(device);
    const double n_total = params.n_pairs;
    const double n_x = params.p_x * params.p_x * n_total;
    const double n_xz = params.p_x * (1.0 - params.p_x) * n_total;
    const double n_zz = (1.0 - params.p_x) * (1.0 - params.p_x) * n_total;
    const std::array<double, 3> p_src{params.p_0(), params.p_1, params.p_2};
    const auto mu = source_intensities(params);

    Observables obs;
    obs.mode = CountMode::ExpectedValue;
    obs.n_pairs = n_total;
    for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t k = 0; k < 3; ++k) {
            double c = p_src[j] * p_src[k] * n_x;
            if (j == vac) c += (1.0 - params.p_z) * p_src[k] * n_xz;
            if (k == vac) c += (1.0 - params.p_z) * p_src[j] * n_xz;
            obs.cap_n[j][k] = c;
        }
        obs.cap_n[j][z] = p_src[j] * params.p_z * n_xz;
        obs.cap_n[z][j] = p_src[j] * params.p_z * n_xz;
    }
    obs.cap_n[z][z] = params.p_z * params.p_z * n_zz;

    // Yields are symmetric in the two arms, so each unordered pair is
    // integrated once.
    for (std::size_t j = 0; j < kSources; ++j) {
        for (std::size_t k = j; k < kSources; ++k) {
            const bool needed = obs.cap_n[j][k] > 0.0 || obs.cap_n[k][j] > 0.0;
            const double s = needed ? expected_pair_yield(mu[j], mu[k], arm, device) : 0.0;
            obs.n[j][k] = obs.cap_n[j][k] * s;
            obs.n[k][j] = obs.cap_n[k][j] * s;
        }
    }

    const double slice_share = params.delta_slice / kTwoPi;
    obs.cap_n_slice_plus = slice_share * obs.cap_n[one][one];
    obs.cap_n_slice_minus = obs.cap_n_slice_plus;
    if (obs.cap_n_slice_plus > 0.0) {
        const SliceRates sr = expected_slice_rates(params, arm, device);
        obs.n_slice_wrong_plus = obs.cap_n_slice_plus * sr.t_plus_wrong;
        obs.n_slice_right_plus = obs.cap_n_slice_plus * (sr.s_plus_total - sr.t_plus_wrong);
        obs.n_slice_wrong_minus = obs.cap_n_slice_minus * sr.t_minus_wrong;
        obs.n_slice_right_minus = obs.cap_n_slice_minus * (sr.s_minus_total - sr.t_minus_wrong);
    }

    const ZWindowRates zw = expected_z_window(params, arm, device);
    obs.cap_n_zz = n_zz;
    obs.n_t = n_zz * zw.s_z;
    obs.err_z = obs.n_t * zw.e_z;
    return obs;
}

struct PoissonYield
{
    double value = 0.0;
    double tail_bound = 0.0;  ///< upper bound on the dropped photon-number terms
};

/// Yield of a phase-randomized coherent source of intensity mu given the
/// per-photon-number yields y_0..y_K (K <= 40):
///   S = e^{-mu} sum_n mu^n / n! y_n.
inline PoissonYield poisson_yield_oracle(std::span<const double> per_photon_yields, double mu)
{
    if (per_photon_yields.empty() || per_photon_yields.size() > 41)
        throw std::invalid_argument("poisson_yield_oracle: need 1..41 per-photon yields");
    if (!(mu >= 0.0)) throw std::invalid_argument("poisson_yield_oracle: negative intensity");

    double term = std::exp(-mu);
    double sum = 0.0;
    std::size_t n = 0;
    for (; n < per_photon_yields.size(); ++n) {
        const double y = per_photon_yields[n];
        if (!(y >= 0.0 && y <= 1.0)) throw std::invalid_argument("poisson_yield_oracle: yield outside [0,1]");
        sum += term * y;
        term *= mu / static_cast<double>(n + 1);
    }
    // `term` is now the first dropped Poisson weight; the rest form a
    // geometric tail with ratio at most mu / (n + 1).
    const double ratio = mu / static_cast<double>(n + 1);
    const double tail = ratio < 1.0 ? term / (1.0 - ratio) : std::numeric_limits<double>::infinity();
    if (tail > 1e-15)
        throw std::domain_error("poisson_yield_oracle: truncation tail " + std::to_string(tail) + " exceeds 1e-15");
    return {sum, tail};
}

}  // namespace snstf
