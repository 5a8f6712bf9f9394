#pragma once

// Finite-size analysis: Chernoff confidence intervals for counted events,
// mean-value decoy bounds and the conversion back to the observed
// single-photon population.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "snstf/channel.hpp"
#include "snstf/decoy.hpp"
#include "snstf/protocol.hpp"

namespace snstf {

/// Interval [mean_lower, mean_upper] that contains the expectation of a
/// count observed as `observed`, each side failing with probability at most
/// epsilon under the multiplicative Chernoff bound.
struct ChernoffInterval
{
    double observed = 0.0;
    double mean_lower = 0.0;
    double mean_upper = 0.0;
    double epsilon = 0.0;
    double delta_lower = 0.0;  ///< mean_lower = k / (1 + delta_lower)
    double delta_upper = 0.0;  ///< mean_upper = k / (1 - delta_upper)
};

/// Closed-form inversion of the two Chernoff tails with beta = ln(1/eps):
///   upper: e^{-d^2 mu / 2} = eps      ->  mu = k + beta + sqrt(2 k beta + beta^2)
///   lower: e^{-d^2 mu / (2+d)} = eps  ->  mu = k + beta/2 - sqrt(8 k beta + beta^2) / 2
inline ChernoffInterval chernoff_interval(double k, double epsilon)
{
    if (!(k >= 0.0) || !std::isfinite(k)) throw std::domain_error("chernoff_interval: count must be finite and >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::domain_error("chernoff_interval: epsilon outside (0,1)");
    const double beta = std::log(1.0 / epsilon);

    ChernoffInterval c;
    c.observed = k;
    c.epsilon = epsilon;
    c.mean_upper = k + beta + std::sqrt(2.0 * k * beta + beta * beta);
    c.mean_lower = std::max(0.0, k + 0.5 * beta - 0.5 * std::sqrt(8.0 * k * beta + beta * beta));
    if (k > 0.0) {
        c.delta_upper = 1.0 - k / c.mean_upper;
        c.delta_lower = c.mean_lower > 0.0 ? k / c.mean_lower - 1.0 : std::numeric_limits<double>::infinity();
    }
    return c;
}

/// A yield together with the Chernoff interval of its mean.
struct YieldInterval
{
    double value = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double pairs = 0.0;
    ChernoffInterval chernoff;
};

inline YieldInterval yield_interval(double count, double pairs, double epsilon)
{
    if (!(pairs > 0.0)) throw std::domain_error("yield_interval: no pulse pairs in class");
    YieldInterval y;
    y.chernoff = chernoff_interval(count, epsilon);
    y.pairs = pairs;
    y.value = count / pairs;
    y.lower = y.chernoff.mean_lower / pairs;
    y.upper = y.chernoff.mean_upper / pairs;
    return y;
}

/// S1 = (S01 + S10)/2 and S2 = (S02 + S20)/2, each bounded through one
/// interval on the pooled count (N01 = N10, N02 = N20). `s_z` is the same
/// construction with the signal source in place of mu2.
struct PooledYields
{
    YieldInterval s1;
    std::optional<YieldInterval> s2;
    std::optional<YieldInterval> s_z;
    YieldInterval s00;
};

inline PooledYields pooled_yields(const Observables& obs, double epsilon)
{
    auto pooled = [&](std::size_t src) {
        return yield_interval(obs.n[vac][src] + obs.n[src][vac], obs.cap_n[vac][src] + obs.cap_n[src][vac], epsilon);
    };
    PooledYields p;
    p.s1 = pooled(one);
    if (obs.cap_n[vac][two] + obs.cap_n[two][vac] > 0.0) p.s2 = pooled(two);
    if (obs.cap_n[vac][z] + obs.cap_n[z][vac] > 0.0) p.s_z = pooled(z);
    p.s00 = yield_interval(obs.n[vac][vac], obs.cap_n[vac][vac], epsilon);
    return p;
}

/// Mean-value yield bound with the pessimistic interval ends:
/// lower S1, upper S2 and upper S00.
inline Clamped mean_s1z_lower(double s1_lower, double s2_upper, double s00_upper, double mu1, double mu2)
{
    return Clamped::at_least_zero(detail::two_decoy_bound(s1_lower, s2_upper, s00_upper, mu1, mu2));
}

/// Mean-value phase-flip bound from the upper end of T_Delta and the lower
/// end of S00; nullopt when the yield bound is not positive.
inline std::optional<Clamped> mean_e1ph_upper(double t_delta_upper, double s00_lower, double mu1, double mean_s1)
{
    return e1ph_upper(t_delta_upper, s00_lower, mu1, mean_s1);
}

enum class SlicePooling {
    /// One interval on the summed wrong-detector counts of both slices.
    Pooled,
    /// Separate upper ends per slice sign, then averaged.
    PerSign,
};

/// Upper end of T_Delta.
inline double slice_error_upper(const Observables& obs, double epsilon, SlicePooling pooling)
{
    if (!(obs.cap_n_slice_plus > 0.0) || !(obs.cap_n_slice_minus > 0.0))
        throw std::domain_error("slice_error_upper: empty phase slice");
    if (pooling == SlicePooling::Pooled) {
        const auto c = chernoff_interval(obs.n_slice_wrong_plus + obs.n_slice_wrong_minus, epsilon);
        return c.mean_upper / (obs.cap_n_slice_plus + obs.cap_n_slice_minus);
    }
    const auto plus = chernoff_interval(obs.n_slice_wrong_plus, epsilon);
    const auto minus = chernoff_interval(obs.n_slice_wrong_minus, epsilon);
    return 0.5 * (plus.mean_upper / obs.cap_n_slice_plus + minus.mean_upper / obs.cap_n_slice_minus);
}

struct ObservedBounds
{
    double s1_used = 0.0;
    double e1ph_used = 0.0;
    double delta_1c = 0.0;
    double delta_1c_prime = 0.0;
};

/// Mean-to-observed conversion for the single-photon population. With
/// m = mean_s1 * n_single_expected single-photon events and m e1 of them in
/// error:
///   s1  = mean_s1 (1 - delta_1c),  delta_1c  = 1 - lower(m)/m
///   e1  = mean_e1 (1 + delta_1c'), delta_1c' = upper(m e1)/(m e1) - 1
/// The error side is evaluated as upper(m e1)/m, which stays finite at e1 = 0.
inline ObservedBounds observed_from_mean(double mean_s1_lower, double mean_e1ph_upper, double n_single_expected,
                                         double epsilon)
{
    ObservedBounds b;
    const double m = mean_s1_lower * n_single_expected;
    if (!(m > 0.0)) {
        b.e1ph_used = std::clamp(mean_e1ph_upper, 0.0, 1.0);
        return b;
    }
    const auto events = chernoff_interval(m, epsilon);
    b.delta_1c = 1.0 - events.mean_lower / m;
    b.s1_used = mean_s1_lower * (1.0 - b.delta_1c);

    const double m_err = mean_e1ph_upper * m;
    const auto errors = chernoff_interval(m_err, epsilon);
    b.e1ph_used = std::min(1.0, errors.mean_upper / m);
    b.delta_1c_prime = m_err > 0.0 ? errors.mean_upper / m_err - 1.0 : std::numeric_limits<double>::infinity();
    return b;
}

struct FiniteKeyOptions
{
    SlicePooling slice_pooling = SlicePooling::Pooled;
    /// When set, this single S00 value replaces both S00 interval ends
    /// (used by the worst-case scan over the S00 interval).
    std::optional<double> common_s00;
};

/// Finite-key rate from a set of observables.
inline KeyRateReport finite_key_from_observables(const Observables& obs, const ProtocolParams& params,
                                                 const DeviceModel& device, Variant variant,
                                                 const FiniteKeyOptions& options = {})
{
    const DecoyPairs pairs = decoy_pairs(params, variant);
    const double eps = device.epsilon;
    const PooledYields py = pooled_yields(obs, eps);

    KeyRateReport r;
    r.regime = Regime::FiniteKey;
    r.variant = variant;
    r.s00 = py.s00.value;
    r.s00_lower = py.s00.lower;
    r.s00_upper = py.s00.upper;
    const double s00_hi = options.common_s00.value_or(py.s00.upper);
    const double s00_lo = options.common_s00.value_or(py.s00.lower);
    if (options.common_s00) r.s00 = *options.common_s00;

    r.delta_s1 = py.s1.chernoff.delta_lower;
    r.delta_s1_prime = py.s1.chernoff.delta_upper;
    r.delta_s00 = py.s00.chernoff.delta_lower;
    r.delta_s00_prime = py.s00.chernoff.delta_upper;

    Clamped mean_s1{-1.0, -1.0};
    if (pairs.use_mu2) {
        if (!py.s2) throw std::domain_error("pooled_yields: no mu2 pulse pairs");
        mean_s1 = mean_s1z_lower(py.s1.lower, py.s2->upper, s00_hi, params.mu1, params.mu2);
        r.delta_s2 = py.s2->chernoff.delta_lower;
        r.delta_s2_prime = py.s2->chernoff.delta_upper;
        r.bound_source = "mu2";
    }
    if (pairs.use_mu_z) {
        if (!py.s_z) throw std::domain_error("pooled_yields: no mu_z decoy pulse pairs");
        const Clamped alt = mean_s1z_lower(py.s1.lower, py.s_z->upper, s00_hi, params.mu1, params.mu_z);
        if (!pairs.use_mu2 || alt.raw > mean_s1.raw) {
            mean_s1 = alt;
            r.delta_s2 = py.s_z->chernoff.delta_lower;
            r.delta_s2_prime = py.s_z->chernoff.delta_upper;
            r.bound_source = "mu_z";
        }
    }
    r.s1z_lower = mean_s1.value;
    r.s1z_lower_raw = mean_s1.raw;
    r.s1_clamped = mean_s1.clamped();

    r.t_delta = slice_error_upper(obs, eps, options.slice_pooling);
    const auto mean_e1 = mean_e1ph_upper(r.t_delta, s00_lo, params.mu1, mean_s1.value);
    r.e1ph_undefined = !mean_e1.has_value();
    const Clamped e1 = mean_e1.value_or(Clamped{0.5, 0.5});
    r.e1ph_upper = e1.value;
    r.e1ph_upper_raw = e1.raw;
    r.e1ph_clamped = e1.clamped();

    r.a1 = params.mu_z * std::exp(-params.mu_z);
    r.q1 = 2.0 * params.mu1 * std::exp(-2.0 * params.mu1);
    const double single_pairs = obs.cap_n_zz * 2.0 * params.p_z * (1.0 - params.p_z) * r.a1;
    const ObservedBounds ob = observed_from_mean(mean_s1.value, e1.value, single_pairs, eps);
    r.s1_used = ob.s1_used;
    r.e1ph_used = ob.e1ph_used;
    r.delta_1c = ob.delta_1c;
    r.delta_1c_prime = ob.delta_1c_prime;

    r.n1 = single_pairs * r.s1_used;
    r.n_t = obs.n_t;
    r.s_z = obs.s_z();
    r.e_z = obs.e_z();
    const Clamped nf = key_length_finite(r.n1, r.e1ph_used, r.n_t, r.e_z, device.f_ec);
    r.key_length = nf.value;
    r.raw_key_length = nf.raw;
    r.rate_per_pulse = nf.value / obs.n_pairs;
    r.raw_rate = nf.raw / obs.n_pairs;
    r.rate_clamped = nf.clamped();
    return r;
}

/// Finite-key pipeline on expected observables for N = params.n_pairs.
inline KeyRateReport finite_key_pipeline(const ProtocolParams& params, const DeviceModel& device, Variant variant,
                                         const FiniteKeyOptions& options = {})
{
    validate(params);
    validate(device);
    if (!std::isfinite(params.n_pairs)) throw std::invalid_argument("n_pairs: finite-key analysis needs finite N");
    decoy_pairs(params, variant);
    return finite_key_from_observables(expected_observables(params, device), params, device, variant, options);
}

/// Finite-key rate with one common S00 value in both bounds, minimized over
/// the S00 confidence interval. Endpoints are always evaluated; a 9-point
/// grid detects non-monotone behaviour, in which case the interior minimum
/// is refined by Brent's method. `report.s00` holds the minimizing value.
inline KeyRateReport worst_case_s00(const Observables& obs, const ProtocolParams& params, const DeviceModel& device,
                                    Variant variant, SlicePooling pooling = SlicePooling::Pooled)
{
    const YieldInterval s00 = yield_interval(obs.n[vac][vac], obs.cap_n[vac][vac], device.epsilon);
    auto eval = [&](double s) {
        FiniteKeyOptions o;
        o.slice_pooling = pooling;
        o.common_s00 = s;
        return finite_key_from_observables(obs, params, device, variant, o);
    };
    if (!(s00.upper > s00.lower)) return eval(s00.lower);

    constexpr int kGrid = 9;
    std::array<double, kGrid> xs{};
    std::array<double, kGrid> rates{};
    for (int i = 0; i < kGrid; ++i) {
        xs[i] = s00.lower + (s00.upper - s00.lower) * i / (kGrid - 1);
        rates[i] = eval(xs[i]).raw_rate;
    }
    bool increasing = true;
    bool decreasing = true;
    for (int i = 1; i < kGrid; ++i) {
        increasing = increasing && rates[i] >= rates[i - 1];
        decreasing = decreasing && rates[i] <= rates[i - 1];
    }
    if (increasing || decreasing) return eval(rates[0] <= rates[kGrid - 1] ? xs[0] : xs[kGrid - 1]);

    const int imin = static_cast<int>(std::min_element(rates.begin(), rates.end()) - rates.begin());
    const double lo = xs[std::max(imin - 1, 0)];
    const double hi = xs[std::min(imin + 1, kGrid - 1)];
    const auto refined = boost::math::tools::brent_find_minima([&](double s) { return eval(s).raw_rate; }, lo, hi, 40);
    double best_x = refined.first;
    double best_rate = refined.second;
    for (int i = 0; i < kGrid; ++i) {
        if (rates[i] < best_rate) {
            best_rate = rates[i];
            best_x = xs[i];
        }
    }
    return eval(best_x);
}

}  // namespace snstf
