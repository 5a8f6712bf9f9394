#pragma once

// Pulse-by-pulse Monte Carlo of the whole protocol, used to validate the
// analytic channel model. Work is split into fixed-size chunks, each with
// its own generator derived from (seed, chunk index), so the result does not
// depend on the thread count or on completion order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "snstf/channel.hpp"
#include "snstf/protocol.hpp"

namespace snstf {

/// SplitMix64 step; used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Uniform double in [0,1) with 53 random bits; identical on every platform.
class UniformSource
{
  public:
    explicit UniformSource(std::uint64_t seed) : engine_(seed) {}

    double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    bool bernoulli(double p) { return (*this)() < p; }
    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

namespace detail {

inline constexpr std::uint64_t kMonteCarloChunk = 1ULL << 20;

struct Side
{
    std::size_t label;
    bool z_window;
};

inline Side draw_side(UniformSource& u, const ProtocolParams& p)
{
    if (u() < p.p_x) {
        const double r = u();
        if (r < p.p_0()) return {vac, false};
        if (r < p.p_0() + p.p_1) return {one, false};
        return {two, false};
    }
    return {u() < p.p_z ? z : vac, true};
}

/// Which detectors fire for one pulse pair.
struct Clicks
{
    bool d0;
    bool d1;
};

inline Clicks sample_clicks(UniformSource& u, double x, double y, double phase_diff, const DeviceModel& dev)
{
    bool d0 = false;
    bool d1 = false;
    if (x > 0.0 || y > 0.0) {
        const double mean = 0.5 * (x + y);
        double cross = std::sqrt(x * y) * std::cos(phase_diff);
        if (dev.misalignment == MisalignmentModel::Visibility) {
            cross *= 1.0 - 2.0 * dev.e_a;
            d0 = u.bernoulli(-std::expm1(-(mean + cross)));
            d1 = u.bernoulli(-std::expm1(-std::max(0.0, mean - cross)));
        } else {
            const bool photon0 = u.bernoulli(-std::expm1(-(mean + cross)));
            const bool photon1 = u.bernoulli(-std::expm1(-std::max(0.0, mean - cross)));
            if (photon0) (u.bernoulli(dev.e_a) ? d1 : d0) = true;
            if (photon1) (u.bernoulli(dev.e_a) ? d0 : d1) = true;
        }
    }
    if (u.bernoulli(dev.p_d)) d0 = true;
    if (u.bernoulli(dev.p_d)) d1 = true;
    return {d0, d1};
}

/// Phase difference wrapped into (-pi, pi].
inline double wrap_phase(double d)
{
    d = std::remainder(d, kTwoPi);
    return d <= -kPi ? d + kTwoPi : d;
}

inline void accumulate(Observables& into, const Observables& from)
{
    for (std::size_t j = 0; j < kSources; ++j) {
        for (std::size_t k = 0; k < kSources; ++k) {
            into.cap_n[j][k] += from.cap_n[j][k];
            into.n[j][k] += from.n[j][k];
        }
    }
    into.cap_n_slice_plus += from.cap_n_slice_plus;
    into.cap_n_slice_minus += from.cap_n_slice_minus;
    into.n_slice_wrong_plus += from.n_slice_wrong_plus;
    into.n_slice_wrong_minus += from.n_slice_wrong_minus;
    into.n_slice_right_plus += from.n_slice_right_plus;
    into.n_slice_right_minus += from.n_slice_right_minus;
    into.cap_n_zz += from.cap_n_zz;
    into.n_t += from.n_t;
    into.err_z += from.err_z;
}

inline Observables simulate_chunk(const ProtocolParams& params, const DeviceModel& device, std::uint64_t seed,
                                  std::uint64_t chunk, std::uint64_t pulses)
{
    UniformSource u(splitmix64(seed ^ splitmix64(chunk + 1)));
    const double eta = arm_transmittance(device).eta;
    const auto mu = source_intensities(params);
    const double half_slice = 0.5 * params.delta_slice;

    Observables o;
    o.mode = CountMode::Sampled;
    for (std::uint64_t i = 0; i < pulses; ++i) {
        const Side a = draw_side(u, params);
        const Side b = draw_side(u, params);
        const double x = eta * mu[a.label];
        const double y = eta * mu[b.label];
        const bool both_ones = a.label == one && b.label == one;
        double delta = 0.0;
        if ((x > 0.0 && y > 0.0) || both_ones) {
            const double theta_a = kTwoPi * u();
            const double theta_b = kTwoPi * u();
            delta = wrap_phase(theta_a - theta_b);
        }
        const Clicks c = sample_clicks(u, x, y, delta, device);
        const bool effective = c.d0 != c.d1;

        if (a.z_window && b.z_window) {
            o.cap_n_zz += 1.0;
            if (a.label == z && b.label == z) {
                o.cap_n[z][z] += 1.0;
                if (effective) o.n[z][z] += 1.0;
            }
            if (effective) {
                o.n_t += 1.0;
                if (a.label == b.label) o.err_z += 1.0;
            }
            continue;
        }

        o.cap_n[a.label][b.label] += 1.0;
        if (effective) o.n[a.label][b.label] += 1.0;
        if (both_ones) {
            if (std::abs(delta) <= half_slice) {
                o.cap_n_slice_plus += 1.0;
                if (effective) (c.d1 ? o.n_slice_wrong_plus : o.n_slice_right_plus) += 1.0;
            }
            if (std::abs(wrap_phase(delta - kPi)) <= half_slice) {
                o.cap_n_slice_minus += 1.0;
                if (effective) (c.d0 ? o.n_slice_wrong_minus : o.n_slice_right_minus) += 1.0;
            }
        }
    }
    return o;
}

}  // namespace detail

/// Sampled observables for `params.n_pairs` pulse pairs (at most 1e9).
/// Deterministic in `seed`; `threads == 0` uses the hardware concurrency.
inline Observables monte_carlo_observables(const ProtocolParams& params, const DeviceModel& device,
                                           std::uint64_t seed, unsigned threads = 0)
{
    validate(params);
    validate(device);
    if (params.n_pairs > 1e9 || params.n_pairs != std::floor(params.n_pairs))
        throw std::invalid_argument("n_pairs: Monte Carlo needs an integer count <= 1e9");

    const auto total = static_cast<std::uint64_t>(params.n_pairs);
    const std::uint64_t chunks = (total + detail::kMonteCarloChunk - 1) / detail::kMonteCarloChunk;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, std::max<std::uint64_t>(chunks, 1)));

    std::vector<Observables> partial(chunks);
    auto worker = [&](unsigned t) {
        for (std::uint64_t c = t; c < chunks; c += threads) {
            const std::uint64_t begin = c * detail::kMonteCarloChunk;
            const std::uint64_t len = std::min(detail::kMonteCarloChunk, total - begin);
            partial[c] = detail::simulate_chunk(params, device, seed, c, len);
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker, t);
    }

    Observables obs;
    obs.mode = CountMode::Sampled;
    obs.n_pairs = params.n_pairs;
    // Summed in chunk order: integer-valued doubles, so the sum is exact anyway.
    for (const auto& p : partial) detail::accumulate(obs, p);
    return obs;
}

/// One sampled count against its expectation. Every count is a sum of N
/// independent indicators, hence binomial with sigma = sqrt(N q (1-q)).
struct CountDeviation
{
    std::string name;
    double sampled = 0.0;
    double expected = 0.0;
    double sigma = 0.0;
    double z = 0.0;  ///< (sampled - expected) / sigma; 0 when both are exactly equal
};

/// Compares every count of `sampled` with `expected`; both must describe
/// the same number of pulse pairs.
inline std::vector<CountDeviation> count_deviations(const Observables& expected, const Observables& sampled)
{
    if (expected.n_pairs != sampled.n_pairs) throw std::invalid_argument("n_pairs: observables describe different runs");
    const double n = expected.n_pairs;
    std::vector<CountDeviation> out;
    auto add = [&](std::string name, double e, double s) {
        const double q = std::clamp(e / n, 0.0, 1.0);
        const double sigma = std::sqrt(n * q * (1.0 - q));
        double z = 0.0;
        if (sigma > 0.0)
            z = (s - e) / sigma;
        else if (s != e)
            z = std::numeric_limits<double>::infinity();
        out.push_back({std::move(name), s, e, sigma, z});
    };
    static constexpr const char* kLabel[kSources] = {"0", "1", "2", "z"};
    for (std::size_t j = 0; j < kSources; ++j) {
        for (std::size_t k = 0; k < kSources; ++k) {
            const std::string jk = std::string(kLabel[j]) + kLabel[k];
            add("cap_n_" + jk, expected.cap_n[j][k], sampled.cap_n[j][k]);
            add("n_" + jk, expected.n[j][k], sampled.n[j][k]);
        }
    }
    add("cap_n_slice_plus", expected.cap_n_slice_plus, sampled.cap_n_slice_plus);
    add("cap_n_slice_minus", expected.cap_n_slice_minus, sampled.cap_n_slice_minus);
    add("n_slice_wrong_plus", expected.n_slice_wrong_plus, sampled.n_slice_wrong_plus);
    add("n_slice_wrong_minus", expected.n_slice_wrong_minus, sampled.n_slice_wrong_minus);
    add("n_slice_right_plus", expected.n_slice_right_plus, sampled.n_slice_right_plus);
    add("n_slice_right_minus", expected.n_slice_right_minus, sampled.n_slice_right_minus);
    add("cap_n_zz", expected.cap_n_zz, sampled.cap_n_zz);
    add("n_t", expected.n_t, sampled.n_t);
    add("err_z", expected.err_z, sampled.err_z);
    return out;
}

}  // namespace snstf
