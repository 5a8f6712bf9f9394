#pragma once

// Domain types for the sending-or-not-sending twin-field protocol, the binary
// entropy and the two key-rate formulas (per-pulse asymptotic rate and
// finite-size key length).

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace snstf {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// A value that was clamped into its admissible range. `raw` keeps the
/// pre-clamp number for audits and for the optimizer.
struct Clamped
{
    double value = 0.0;
    double raw = 0.0;

    bool clamped() const { return value != raw; }

    static Clamped at_least_zero(double x) { return {x < 0.0 ? 0.0 : x, x}; }
    static Clamped unit_interval(double x)
    {
        return {x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x), x};
    }
};

enum class Variant { ThreeIntensity, FourIntensity };
enum class Regime { Asymptotic, FiniteKey };

/// How misalignment acts on Charlie's interference outcome.
enum class MisalignmentModel {
    /// Each photon-caused click moves to the opposite detector with
    /// probability e_a; dark counts stay put.
    ClickReroute,
    /// Interference visibility is reduced: cos(delta) -> (1 - 2 e_a) cos(delta).
    Visibility,
};

inline const char* to_string(Variant v)
{
    return v == Variant::ThreeIntensity ? "3int" : "4int";
}
inline const char* to_string(Regime r)
{
    return r == Regime::Asymptotic ? "asymptotic" : "finite-key";
}
inline const char* to_string(MisalignmentModel m)
{
    return m == MisalignmentModel::ClickReroute ? "click-reroute" : "visibility";
}

/// The eight tunable protocol parameters plus the number of pulse pairs.
struct ProtocolParams
{
    double p_x = 0.04;         ///< probability of choosing the X-window
    double p_1 = 0.95;         ///< X-window probability of source mu1
    double p_2 = 0.02;         ///< X-window probability of source mu2 (0 = three-intensity)
    double p_z = 0.02;         ///< Z-window sending probability
    double mu1 = 0.01;
    double mu2 = 0.12;
    double mu_z = 0.5;
    double delta_slice = 0.3;  ///< full phase-slice width, radians
    double n_pairs = 1e12;     ///< total pulse pairs N (real: 1e20 exceeds 64-bit counts)

    double p_0() const { return 1.0 - p_1 - p_2; }
    bool three_intensity() const { return p_2 == 0.0; }
};

/// Throws std::invalid_argument naming the offending field.
inline void validate(const ProtocolParams& p)
{
    auto fail = [](const std::string& field, const std::string& what) {
        throw std::invalid_argument(field + ": " + what);
    };
    if (!(p.p_x > 0.0 && p.p_x < 1.0)) fail("p_x", "must lie in (0,1)");
    if (!(p.p_1 >= 0.0 && p.p_1 < 1.0)) fail("p_1", "must lie in [0,1)");
    if (!(p.p_2 >= 0.0 && p.p_2 < 1.0)) fail("p_2", "must lie in [0,1)");
    if (!(p.p_1 + p.p_2 < 1.0)) fail("p_1/p_2", "p_1 + p_2 must be < 1");
    if (!(p.p_z > 0.0 && p.p_z < 1.0)) fail("p_z", "must lie in (0,1)");
    if (!(p.mu1 > 0.0)) fail("mu1", "must be > 0");
    if (!(p.mu_z > 0.0)) fail("mu_z", "must be > 0");
    if (p.p_2 > 0.0 && !(p.mu1 < p.mu2)) fail("mu1/mu2", "need 0 < mu1 < mu2 when p_2 > 0");
    if (!(p.delta_slice > 0.0 && p.delta_slice <= kTwoPi)) fail("delta", "must lie in (0, 2pi]");
    if (!(p.n_pairs > 0.0)) fail("n_pairs", "must be > 0");
}

/// Channel and detector description, plus the post-processing constants.
struct DeviceModel
{
    double p_d = 1e-10;            ///< dark count probability per detector per pulse
    double eta_d = 0.5;            ///< detector efficiency
    double e_a = 0.15;             ///< misalignment error probability
    double loss_db_per_km = 0.2;
    double distance_km = 0.0;      ///< Alice-Bob fiber length, Charlie at the midpoint
    double f_ec = 1.1;             ///< error-correction inefficiency
    double epsilon = 1e-10;        ///< failure probability per Chernoff estimate
    MisalignmentModel misalignment = MisalignmentModel::ClickReroute;
};

inline void validate(const DeviceModel& d)
{
    auto fail = [](const std::string& field, const std::string& what) {
        throw std::invalid_argument(field + ": " + what);
    };
    if (!(d.p_d >= 0.0 && d.p_d < 1.0)) fail("p_d", "must lie in [0,1)");
    if (!(d.eta_d >= 0.0 && d.eta_d <= 1.0)) fail("eta_d", "must lie in [0,1]");
    if (!(d.e_a >= 0.0 && d.e_a <= 0.5)) fail("e_a", "must lie in [0,0.5]");
    if (!(d.loss_db_per_km >= 0.0)) fail("loss_db_per_km", "must be >= 0");
    if (!(d.distance_km >= 0.0)) fail("distance_km", "must be >= 0");
    if (!(d.f_ec >= 1.0)) fail("f_ec", "must be >= 1");
    if (!(d.epsilon > 0.0 && d.epsilon < 1.0)) fail("epsilon", "must lie in (0,1)");
}

/// Device parameters used for the distance scans (0.2 dB/km standard fiber).
inline DeviceModel table1_device(double distance_km = 0.0)
{
    DeviceModel d;
    d.p_d = 1e-10;
    d.eta_d = 0.5;
    d.f_ec = 1.1;
    d.epsilon = 1e-10;
    d.e_a = 0.15;
    d.loss_db_per_km = 0.2;
    d.distance_km = distance_km;
    return d;
}

/// Device parameters of the 404 km ultralow-loss fiber comparison.
inline DeviceModel device_404km()
{
    DeviceModel d;
    d.p_d = 7.2e-8;
    d.eta_d = 0.5525;
    d.f_ec = 1.16;
    d.epsilon = 1e-10;
    d.e_a = 0.02;
    d.loss_db_per_km = 0.16;
    d.distance_km = 404.0;
    return d;
}

/// Source labels. In a Z-window the not-sending choice is labelled `vac`.
enum Source : std::size_t { vac = 0, one = 1, two = 2, z = 3 };
inline constexpr std::size_t kSources = 4;

enum class CountMode { ExpectedValue, Sampled };

/// Counts observed (or expected) over a run of N pulse pairs.
///
/// `cap_n[j][k]` counts pairs in which Alice used source j and Bob source k,
/// excluding pairs where both chose the Z-window; those enter `cap_n_zz`,
/// `n_t` and `err_z`, and the both-sending subset is also kept in the
/// `[z][z]` cell.
struct Observables
{
    using Matrix = std::array<std::array<double, kSources>, kSources>;

    Matrix cap_n{};
    Matrix n{};
    double cap_n_slice_plus = 0.0;
    double cap_n_slice_minus = 0.0;
    double n_slice_wrong_plus = 0.0;   ///< detector 1 only, in C_{Delta+}
    double n_slice_wrong_minus = 0.0;  ///< detector 0 only, in C_{Delta-}
    double n_slice_right_plus = 0.0;
    double n_slice_right_minus = 0.0;
    double cap_n_zz = 0.0;             ///< pairs with both parties in the Z-window
    double n_t = 0.0;
    double err_z = 0.0;
    double n_pairs = 0.0;
    CountMode mode = CountMode::ExpectedValue;

    double yield(std::size_t j, std::size_t k) const
    {
        if (!(cap_n[j][k] > 0.0)) throw std::domain_error("yield of an empty pair class");
        return n[j][k] / cap_n[j][k];
    }
    double s_z() const
    {
        if (!(cap_n_zz > 0.0)) throw std::domain_error("no Z-window pairs");
        return n_t / cap_n_zz;
    }
    double e_z() const { return n_t > 0.0 ? err_z / n_t : 0.0; }
};

/// Everything that went into a single key-rate evaluation.
struct KeyRateReport
{
    Regime regime = Regime::Asymptotic;
    Variant variant = Variant::FourIntensity;

    double rate_per_pulse = 0.0;
    double raw_rate = 0.0;
    double key_length = 0.0;       ///< finite-key only (bits)
    double raw_key_length = 0.0;

    double a1 = 0.0;               ///< mu_z exp(-mu_z)
    double q1 = 0.0;               ///< 2 mu1 exp(-2 mu1)
    double s1_used = 0.0;
    double e1ph_used = 0.0;
    double s_z = 0.0;
    double e_z = 0.0;
    double n1 = 0.0;
    double n_t = 0.0;

    double s1z_lower = 0.0;        ///< asymptotic bound, or its mean-value form
    double s1z_lower_raw = 0.0;
    double e1ph_upper = 0.0;       ///< asymptotic bound, or its mean-value form
    double e1ph_upper_raw = 0.0;
    double t_delta = 0.0;          ///< T_Delta, or its Chernoff upper end
    double s00 = 0.0;
    double s00_lower = 0.0;
    double s00_upper = 0.0;
    const char* bound_source = "mu2";  ///< which intensity pair gave the yield bound

    // Chernoff deviations (finite-key only).
    double delta_s1 = 0.0, delta_s1_prime = 0.0;
    double delta_s2 = 0.0, delta_s2_prime = 0.0;
    double delta_s00 = 0.0, delta_s00_prime = 0.0;
    double delta_1c = 0.0, delta_1c_prime = 0.0;

    bool s1_clamped = false;
    bool e1ph_clamped = false;
    bool e1ph_undefined = false;
    bool rate_clamped = false;
};

/// Shannon binary entropy in bits.
inline double binary_entropy(double x)
{
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("binary_entropy: argument outside [0,1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

/// 1 - H(e) for a phase-flip error bound. Bounds at or above 1/2 leave no
/// secrecy, so the entropy argument is capped there.
inline double privacy_factor(double e1ph)
{
    return 1.0 - binary_entropy(e1ph < 0.5 ? e1ph : 0.5);
}

/// Per-pulse key rate
///   R = (1-p_X)^2 { 2 p_z (1-p_z) a1 s1 [1 - H(e1ph)] - f S_Z H(E_Z) },
/// with a1 = mu_z exp(-mu_z). Negative values clamp to zero.
inline Clamped key_rate_per_pulse(const ProtocolParams& params, double s1, double e1ph,
                                  double s_z, double e_z, double f_ec)
{
    if (!(s1 >= 0.0) || !(s_z >= 0.0)) throw std::domain_error("key_rate_per_pulse: negative yield");
    const double a1 = params.mu_z * std::exp(-params.mu_z);
    const double z_share = (1.0 - params.p_x) * (1.0 - params.p_x);
    const double privacy = 2.0 * params.p_z * (1.0 - params.p_z) * a1 * s1 * privacy_factor(e1ph);
    const double correction = f_ec * s_z * binary_entropy(e_z);
    return Clamped::at_least_zero(z_share * (privacy - correction));
}

/// Final key length N_f = n1 [1 - H(e1ph)] - f n_t H(E_Z), clamped at zero.
inline Clamped key_length_finite(double n1, double e1ph, double n_t, double e_z, double f_ec)
{
    if (!(n1 >= 0.0) || !(n_t >= 0.0)) throw std::domain_error("key_length_finite: negative count");
    return Clamped::at_least_zero(n1 * privacy_factor(e1ph) - f_ec * n_t * binary_entropy(e_z));
}

}  // namespace snstf
