#pragma once

// Asymptotic decoy-state estimators: lower bounds on the single-photon yield
// of the Z-window, the slice error rate T_Delta and the upper bound on the
// single-photon phase-flip error.

#include <cmath>
#include <optional>
#include <stdexcept>

#include "snstf/channel.hpp"
#include "snstf/protocol.hpp"

namespace snstf {

namespace detail {

inline void check_decoy_intensities(double mu_low, double mu_high)
{
    if (!(mu_low > 0.0)) throw std::invalid_argument("mu1: decoy intensity must be > 0");
    if (!(mu_high - mu_low >= 1e-12)) throw std::invalid_argument("mu1/mu2: degenerate or misordered decoy intensities");
}

/// [mu_h^2 e^{mu_l} S_l - mu_l^2 e^{mu_h} S_h - (mu_h^2 - mu_l^2) S_0] / [mu_l mu_h (mu_h - mu_l)]
inline double two_decoy_bound(double s_low, double s_high, double s00, double mu_low, double mu_high)
{
    check_decoy_intensities(mu_low, mu_high);
    const double num = mu_high * mu_high * std::exp(mu_low) * s_low - mu_low * mu_low * std::exp(mu_high) * s_high -
                       (mu_high * mu_high - mu_low * mu_low) * s00;
    return num / (mu_low * mu_high * (mu_high - mu_low));
}

}  // namespace detail

/// Lower bound on the yield of |01> (Alice vacuum, Bob one photon).
inline Clamped s_z0_lower(double s01, double s02, double s00, double mu1, double mu2)
{
    return Clamped::at_least_zero(detail::two_decoy_bound(s01, s02, s00, mu1, mu2));
}

/// Lower bound on the yield of |10>; the mirror image of s_z0_lower.
inline Clamped s_z1_lower(double s10, double s20, double s00, double mu1, double mu2)
{
    return Clamped::at_least_zero(detail::two_decoy_bound(s10, s20, s00, mu1, mu2));
}

/// Z-window single-photon yield bound: mean of the two one-sided bounds.
inline Clamped s1z_lower(const Clamped& z0, const Clamped& z1)
{
    return {0.5 * (z0.value + z1.value), 0.5 * (z0.raw + z1.raw)};
}

/// Same bound with the signal source (mu_z) standing in for the second decoy.
inline Clamped s1z_lower_three_intensity(double s01, double s0z, double s00, double s10, double sz0, double mu1,
                                         double mu_z)
{
    return s1z_lower(s_z0_lower(s01, s0z, s00, mu1, mu_z), s_z1_lower(s10, sz0, s00, mu1, mu_z));
}

/// T_Delta = (n^{Delta1+}/N^{Delta+} + n^{Delta0-}/N^{Delta-}) / 2.
inline double t_delta(const Observables& obs)
{
    if (!(obs.cap_n_slice_plus > 0.0) || !(obs.cap_n_slice_minus > 0.0))
        throw std::domain_error("t_delta: empty phase slice");
    return 0.5 * (obs.n_slice_wrong_plus / obs.cap_n_slice_plus + obs.n_slice_wrong_minus / obs.cap_n_slice_minus);
}

/// Upper bound on the single-photon phase-flip error, attributing every
/// slice error to the vacuum or single-photon component:
///   [T_Delta - e^{-2 mu1} S00 / 2] / [2 mu1 e^{-2 mu1} s1].
/// Returns nullopt when s1 is not positive; the key rate is then zero.
inline std::optional<Clamped> e1ph_upper(double t_delta_value, double s00, double mu1, double s1z_lower_value)
{
    if (!(s1z_lower_value > 0.0)) return std::nullopt;
    const double vacuum_weight = std::exp(-2.0 * mu1);
    const double raw = (t_delta_value - 0.5 * vacuum_weight * s00) / (2.0 * mu1 * vacuum_weight * s1z_lower_value);
    return Clamped::unit_interval(raw);
}

/// Which intensity pair may serve as the (low, high) decoy pair for the
/// yield bound, given the variant and the parameters.
struct DecoyPairs
{
    bool use_mu2 = false;
    bool use_mu_z = false;
};

/// The three-intensity variant always uses (mu1, mu_z) and needs p_2 = 0.
/// The four-intensity variant uses (mu1, mu2) and also takes the
/// (mu1, mu_z) bound when it is tighter; with p_2 = 0 it coincides with the
/// three-intensity variant.
inline DecoyPairs decoy_pairs(const ProtocolParams& p, Variant variant)
{
    DecoyPairs d;
    if (variant == Variant::ThreeIntensity) {
        if (p.p_2 != 0.0) throw std::invalid_argument("p_2: three-intensity variant requires p_2 = 0");
        detail::check_decoy_intensities(p.mu1, p.mu_z);
        d.use_mu_z = true;
        return d;
    }
    if (p.p_2 > 0.0) {
        detail::check_decoy_intensities(p.mu1, p.mu2);
        d.use_mu2 = true;
    }
    d.use_mu_z = p.mu_z - p.mu1 >= 1e-12;
    if (!d.use_mu2 && !d.use_mu_z) throw std::invalid_argument("mu1/mu_z: no usable decoy pair");
    return d;
}

namespace detail {

/// Fills the privacy-amplification inputs and the Eq.-15-style rate of an
/// asymptotic report from already-estimated bounds.
inline void finish_asymptotic(KeyRateReport& r, const ProtocolParams& params, const Clamped& s1, double t_d,
                              double s00, double s_z, double e_z, double f_ec)
{
    r.s1z_lower = s1.value;
    r.s1z_lower_raw = s1.raw;
    r.s1_clamped = s1.clamped();
    r.t_delta = t_d;
    r.s00 = r.s00_lower = r.s00_upper = s00;
    r.s_z = s_z;
    r.e_z = e_z;
    r.a1 = params.mu_z * std::exp(-params.mu_z);
    r.q1 = 2.0 * params.mu1 * std::exp(-2.0 * params.mu1);

    const auto e1 = e1ph_upper(t_d, s00, params.mu1, s1.value);
    r.e1ph_undefined = !e1.has_value();
    const Clamped e1v = e1.value_or(Clamped{0.5, 0.5});
    r.e1ph_upper = e1v.value;
    r.e1ph_upper_raw = e1v.raw;
    r.e1ph_clamped = e1v.clamped();
    r.s1_used = s1.value;
    r.e1ph_used = e1v.value;

    const Clamped rate = key_rate_per_pulse(params, r.s1_used, r.e1ph_used, s_z, e_z, f_ec);
    r.rate_per_pulse = rate.value;
    r.raw_rate = rate.raw;
    r.rate_clamped = rate.clamped();
}

}  // namespace detail

/// Asymptotic key rate from a set of (expected-value) observables.
inline KeyRateReport asymptotic_from_observables(const Observables& obs, const ProtocolParams& params,
                                                 const DeviceModel& device, Variant variant)
{
    const DecoyPairs pairs = decoy_pairs(params, variant);
    const double s00 = obs.yield(vac, vac);

    KeyRateReport r;
    r.regime = Regime::Asymptotic;
    r.variant = variant;

    Clamped best{-1.0, -1.0};
    if (pairs.use_mu2) {
        best = s1z_lower(s_z0_lower(obs.yield(vac, one), obs.yield(vac, two), s00, params.mu1, params.mu2),
                         s_z1_lower(obs.yield(one, vac), obs.yield(two, vac), s00, params.mu1, params.mu2));
        r.bound_source = "mu2";
    }
    if (pairs.use_mu_z) {
        const Clamped alt = s1z_lower_three_intensity(obs.yield(vac, one), obs.yield(vac, z), s00,
                                                      obs.yield(one, vac), obs.yield(z, vac), params.mu1, params.mu_z);
        if (!pairs.use_mu2 || alt.raw > best.raw) {
            best = alt;
            r.bound_source = "mu_z";
        }
    }

    detail::finish_asymptotic(r, params, best, t_delta(obs), s00, obs.s_z(), obs.e_z(), device.f_ec);
    return r;
}

/// Full asymptotic pipeline: expected observables, decoy bounds, slice
/// error, phase-flip bound and per-pulse rate.
inline KeyRateReport asymptotic_pipeline(const ProtocolParams& params, const DeviceModel& device, Variant variant)
{
    validate(params);
    validate(device);
    decoy_pairs(params, variant);
    ProtocolParams unit = params;
    // Only ratios matter asymptotically; real-valued counts at N = 1 keep
    // infinite N usable as input.
    unit.n_pairs = 1.0;
    return asymptotic_from_observables(expected_observables(unit, device), params, device, variant);
}

}  // namespace snstf
