#pragma once

// Full optimization of the protocol parameters for the maximum key rate at a
// given device and distance: multi-start Nelder-Mead over unconstrained
// coordinates. Each parameter lives in a box; a logistic map sends R onto
// the box (linear for probabilities and Delta, logarithmic for
// intensities). Ordering and normalization constraints are enforced by a
// penalty far below any attainable rate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "snstf/decoy.hpp"
#include "snstf/finite_key.hpp"
#include "snstf/monte_carlo.hpp"
#include "snstf/protocol.hpp"

namespace snstf {

enum class Pipeline { Asymptotic, FiniteKey };

inline const char* to_string(Pipeline p)
{
    return p == Pipeline::Asymptotic ? "asymptotic" : "finite";
}

struct Range
{
    double lo;
    double hi;
};

struct SearchBounds
{
    Range p_x{1e-3, 0.999};
    Range p_1{1e-4, 0.99};
    Range p_2{1e-4, 0.99};
    Range p_z{1e-4, 0.99};
    Range mu1{1e-4, 1.0};
    Range mu2{1e-4, 1.0};
    Range mu_z{1e-3, 1.0};
    Range delta{1e-3, kPi};
};

struct OptimizationProblem
{
    DeviceModel device;
    Pipeline pipeline = Pipeline::FiniteKey;
    Variant variant = Variant::FourIntensity;
    double n_pairs = 1e12;          ///< ignored by the asymptotic pipeline
    SearchBounds bounds;
    int budget = 3000;              ///< objective evaluations per start
    int restarts = 32;
    std::uint64_t seed = 1;
    /// Extra starting points, evaluated exactly and then refined.
    std::vector<ProtocolParams> candidates;
    unsigned threads = 0;           ///< 0: hardware concurrency
};

struct OptimizationResult
{
    ProtocolParams params;
    KeyRateReport report;
    long evaluations = 0;
    std::vector<double> trace;      ///< best objective after each start, in start order
    bool budget_exhausted = false;
    bool zero_rate = false;
};

/// Key-rate report of one parameter point under the problem's pipeline.
inline KeyRateReport evaluate(const OptimizationProblem& problem, const ProtocolParams& params)
{
    ProtocolParams p = params;
    p.n_pairs = problem.n_pairs;
    if (problem.pipeline == Pipeline::Asymptotic) return asymptotic_pipeline(p, problem.device, problem.variant);
    return finite_key_pipeline(p, problem.device, problem.variant);
}

namespace detail {

inline constexpr double kInfeasible = -10.0;

/// Search objective: the raw rate where positive; below zero the deficit per
/// Z-window effective event, so that shrinking the Z-window share is not
/// mistaken for progress.
inline double objective_value(const KeyRateReport& r, const ProtocolParams& p)
{
    if (r.raw_rate > 0.0) return r.raw_rate;
    const double z_events = (1.0 - p.p_x) * (1.0 - p.p_x) * r.s_z;
    return z_events > 0.0 ? r.raw_rate / z_events : 0.5 * kInfeasible;
}

inline double logistic(double u) { return 1.0 / (1.0 + std::exp(-u)); }
inline double logit(double s) { return std::log(s / (1.0 - s)); }

struct Coordinate
{
    double ProtocolParams::*field;
    Range range;
    bool log_scale;

    double to_value(double u) const
    {
        const double s = logistic(u);
        if (log_scale) return std::exp(std::log(range.lo) + (std::log(range.hi) - std::log(range.lo)) * s);
        return range.lo + (range.hi - range.lo) * s;
    }
    double to_u(double v) const
    {
        double s = log_scale ? (std::log(v) - std::log(range.lo)) / (std::log(range.hi) - std::log(range.lo))
                             : (v - range.lo) / (range.hi - range.lo);
        s = std::clamp(s, 1e-6, 1.0 - 1e-6);
        return logit(s);
    }
};

class ParameterMap
{
  public:
    ParameterMap(const SearchBounds& b, Variant variant) : variant_(variant)
    {
        coords_.push_back({&ProtocolParams::p_x, b.p_x, false});
        coords_.push_back({&ProtocolParams::p_1, b.p_1, false});
        if (variant == Variant::FourIntensity) coords_.push_back({&ProtocolParams::p_2, b.p_2, false});
        coords_.push_back({&ProtocolParams::p_z, b.p_z, false});
        coords_.push_back({&ProtocolParams::mu1, b.mu1, true});
        if (variant == Variant::FourIntensity) coords_.push_back({&ProtocolParams::mu2, b.mu2, true});
        coords_.push_back({&ProtocolParams::mu_z, b.mu_z, true});
        coords_.push_back({&ProtocolParams::delta_slice, b.delta, false});
    }

    std::size_t dims() const { return coords_.size(); }

    ProtocolParams to_params(std::span<const double> u, double n_pairs) const
    {
        ProtocolParams p;
        p.n_pairs = n_pairs;
        for (std::size_t i = 0; i < coords_.size(); ++i) p.*(coords_[i].field) = coords_[i].to_value(u[i]);
        if (variant_ == Variant::ThreeIntensity) {
            p.p_2 = 0.0;
            p.mu2 = p.mu_z;
        }
        return p;
    }

    std::vector<double> to_u(const ProtocolParams& p) const
    {
        std::vector<double> u(coords_.size());
        for (std::size_t i = 0; i < coords_.size(); ++i) u[i] = coords_[i].to_u(p.*(coords_[i].field));
        return u;
    }

    /// Amount by which the ordering/normalization constraints are violated.
    double violation(const ProtocolParams& p) const
    {
        double v = 0.0;
        if (variant_ == Variant::FourIntensity) {
            v += std::max(0.0, p.p_1 + p.p_2 - (1.0 - 1e-6));
            v += std::max(0.0, p.mu1 - p.mu2 + 1e-9);
        } else {
            v += std::max(0.0, p.mu1 - p.mu_z + 1e-9);
        }
        return v;
    }

  private:
    Variant variant_;
    std::vector<Coordinate> coords_;
};

/// Radical inverse of `index` in base `base`.
inline double radical_inverse(std::uint64_t index, std::uint64_t base)
{
    double inv = 1.0 / static_cast<double>(base);
    double f = inv;
    double r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % base);
        index /= base;
        f *= inv;
    }
    return r;
}

/// Randomly shifted Halton point `index` in the unit cube.
inline std::vector<double> halton_point(std::uint64_t index, std::size_t dims, std::uint64_t seed)
{
    static constexpr std::uint64_t kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    std::vector<double> x(dims);
    for (std::size_t d = 0; d < dims; ++d) {
        const double shift = static_cast<double>(splitmix64(seed * 0x100 + d) >> 11) * 0x1.0p-53;
        const double h = radical_inverse(index + 1, kPrimes[d]) + shift;
        x[d] = h - std::floor(h);
    }
    return x;
}

struct SimplexRun
{
    std::vector<double> best;
    double value = -std::numeric_limits<double>::infinity();
    long evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead maximization of `f` from `start` with initial edge `step`.
inline SimplexRun nelder_mead(const std::function<double(std::span<const double>)>& f, std::vector<double> start,
                              double step, long max_evals)
{
    const std::size_t n = start.size();
    std::vector<std::vector<double>> pts(n + 1, start);
    std::vector<double> vals(n + 1);
    SimplexRun run;
    auto eval = [&](const std::vector<double>& x) {
        ++run.evaluations;
        return f(x);
    };
    for (std::size_t i = 0; i < n; ++i) pts[i + 1][i] += step;
    for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

    std::vector<std::size_t> order(n + 1);
    std::vector<double> centroid(n), trial(n), trial2(n);
    auto along = [&](double t, std::vector<double>& out, std::size_t worst) {
        for (std::size_t d = 0; d < n; ++d) out[d] = centroid[d] + t * (pts[worst][d] - centroid[d]);
    };

    while (run.evaluations < max_evals) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return vals[a] > vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second_worst = order[n - 1];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= n; ++i)
            for (std::size_t d = 0; d < n; ++d) diameter = std::max(diameter, std::abs(pts[i][d] - pts[best][d]));
        const double spread = vals[best] - vals[worst];
        if (diameter < 1e-7 || spread <= 1e-12 * std::abs(vals[best]) + 1e-300) {
            run.converged = true;
            break;
        }

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t d = 0; d < n; ++d) centroid[d] += pts[i][d] / static_cast<double>(n);
        }

        along(-1.0, trial, worst);
        const double f_reflect = eval(trial);
        if (f_reflect > vals[best]) {
            along(-2.0, trial2, worst);
            const double f_expand = eval(trial2);
            if (f_expand > f_reflect) {
                pts[worst] = trial2;
                vals[worst] = f_expand;
            } else {
                pts[worst] = trial;
                vals[worst] = f_reflect;
            }
            continue;
        }
        if (f_reflect > vals[second_worst]) {
            pts[worst] = trial;
            vals[worst] = f_reflect;
            continue;
        }
        const bool outside = f_reflect > vals[worst];
        along(outside ? -0.5 : 0.5, trial2, worst);
        const double f_contract = eval(trial2);
        if (f_contract > std::max(f_reflect, vals[worst]) || (outside && f_contract >= f_reflect)) {
            pts[worst] = trial2;
            vals[worst] = f_contract;
            continue;
        }
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == best) continue;
            for (std::size_t d = 0; d < n; ++d) pts[i][d] = pts[best][d] + 0.5 * (pts[i][d] - pts[best][d]);
            vals[i] = eval(pts[i]);
        }
    }
    const std::size_t best = static_cast<std::size_t>(std::max_element(vals.begin(), vals.end()) - vals.begin());
    run.best = pts[best];
    run.value = vals[best];
    return run;
}

struct StartResult
{
    std::vector<double> u;
    ProtocolParams exact;  ///< used when the exact candidate beat the simplex
    bool use_exact = false;
    double value = -std::numeric_limits<double>::infinity();
    long evaluations = 0;
    bool exhausted = false;
};

/// One start: simplex runs from `u0`, re-seeded at the incumbent with
/// shrinking steps until an extra run no longer improves or the budget ends.
inline StartResult run_start(const std::function<double(std::span<const double>)>& f, std::vector<double> u0,
                             long budget)
{
    StartResult r;
    double step = 0.6;
    std::vector<double> x = std::move(u0);
    while (r.evaluations < budget) {
        SimplexRun s = nelder_mead(f, x, step, budget - r.evaluations);
        r.evaluations += s.evaluations;
        const double previous = r.value;
        if (s.value > r.value) {
            r.value = s.value;
            r.u = s.best;
        }
        if (!s.converged) {
            r.exhausted = true;
            break;
        }
        if (r.value - previous <= 1e-9 * std::abs(r.value) && step < 0.6) break;
        x = r.u;
        step = std::max(step * 0.5, 0.02);
    }
    return r;
}

}  // namespace detail

/// Multi-start search for the parameters maximizing the key rate.
/// Deterministic in (problem, seed) regardless of thread count.
inline OptimizationResult optimize(const OptimizationProblem& problem)
{
    if (problem.budget < 1) throw std::invalid_argument("budget: must be >= 1");
    if (problem.restarts < 0) throw std::invalid_argument("restarts: must be >= 0");
    validate(problem.device);
    const detail::ParameterMap map(problem.bounds, problem.variant);

    auto objective = [&](std::span<const double> u) {
        const ProtocolParams p = map.to_params(u, problem.n_pairs);
        const double v = map.violation(p);
        if (v > 0.0) return detail::kInfeasible - v;
        try {
            return detail::objective_value(evaluate(problem, p), p);
        } catch (const std::exception&) {
            return detail::kInfeasible;
        }
    };
    const std::function<double(std::span<const double>)> f = objective;

    // Candidates first (in given order), then low-discrepancy restarts.
    std::vector<ProtocolParams> exact;
    std::vector<std::vector<double>> starts;
    for (ProtocolParams c : problem.candidates) {
        if (problem.variant == Variant::ThreeIntensity) {
            c.p_2 = 0.0;
            c.mu2 = c.mu_z;
        }
        c.n_pairs = problem.n_pairs;
        exact.push_back(c);
        starts.push_back(map.to_u(c));
    }
    for (int r = 0; r < problem.restarts; ++r) {
        auto s = detail::halton_point(static_cast<std::uint64_t>(r), map.dims(), problem.seed);
        for (auto& v : s) v = detail::logit(0.02 + 0.96 * v);
        starts.push_back(std::move(s));
    }
    if (starts.empty()) throw std::invalid_argument("restarts: need at least one start or candidate");

    std::vector<detail::StartResult> results(starts.size());
    auto work = [&](std::size_t i) {
        detail::StartResult r = detail::run_start(f, starts[i], problem.budget);
        if (i < exact.size()) {
            ++r.evaluations;
            double v = detail::kInfeasible;
            try {
                v = detail::objective_value(evaluate(problem, exact[i]), exact[i]);
            } catch (const std::exception&) {
            }
            if (v > r.value) {
                r.value = v;
                r.exact = exact[i];
                r.use_exact = true;
            }
        }
        results[i] = std::move(r);
    };
    unsigned threads = problem.threads ? problem.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, starts.size()));
    if (threads <= 1) {
        for (std::size_t i = 0; i < starts.size(); ++i) work(i);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < starts.size(); i += threads) work(i);
            });
    }

    OptimizationResult out;
    std::size_t best = 0;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < results.size(); ++i) {
        out.evaluations += results[i].evaluations;
        out.budget_exhausted = out.budget_exhausted || results[i].exhausted;
        if (results[i].value > best_value) {
            best_value = results[i].value;
            best = i;
        }
        out.trace.push_back(best_value);
    }
    const auto& b = results[best];
    out.params = b.use_exact ? b.exact : map.to_params(b.u, problem.n_pairs);
    try {
        out.report = evaluate(problem, out.params);
    } catch (const std::exception&) {
        out.report = KeyRateReport{};
        out.report.regime = problem.pipeline == Pipeline::Asymptotic ? Regime::Asymptotic : Regime::FiniteKey;
        out.report.variant = problem.variant;
        out.report.raw_rate = best_value;
    }
    out.zero_rate = !(out.report.rate_per_pulse > 0.0);
    return out;
}

struct ScanRow
{
    double distance_km = 0.0;
    OptimizationResult result;
};

/// Optimizes at each distance (ascending), warm-starting from the previous
/// optimum. A closing backward pass re-evaluates each row's successor
/// optimum at the row's distance and keeps it if better.
/// `seeds`, when given, supplies extra candidates per distance.
inline std::vector<ScanRow> scan_distance(const OptimizationProblem& problem, std::span<const double> distances,
                                          std::span<const std::vector<ProtocolParams>> seeds = {})
{
    if (!std::is_sorted(distances.begin(), distances.end()))
        throw std::invalid_argument("distances: must be sorted ascending");
    if (!seeds.empty() && seeds.size() != distances.size())
        throw std::invalid_argument("seeds: need one per distance");

    std::vector<ScanRow> rows;
    rows.reserve(distances.size());
    for (std::size_t i = 0; i < distances.size(); ++i) {
        OptimizationProblem p = problem;
        p.device.distance_km = distances[i];
        if (!rows.empty()) p.candidates.push_back(rows.back().result.params);
        if (!seeds.empty()) p.candidates.insert(p.candidates.end(), seeds[i].begin(), seeds[i].end());
        rows.push_back({distances[i], optimize(p)});
    }

    for (std::size_t i = rows.size(); i-- > 1;) {
        OptimizationProblem p = problem;
        p.device.distance_km = rows[i - 1].distance_km;
        try {
            const KeyRateReport r = evaluate(p, rows[i].result.params);
            auto& prev = rows[i - 1].result;
            ++prev.evaluations;
            if (detail::objective_value(r, rows[i].result.params) >
                detail::objective_value(prev.report, prev.params)) {
                prev.params = rows[i].result.params;
                prev.report = r;
                prev.zero_rate = !(r.rate_per_pulse > 0.0);
            }
        } catch (const std::exception&) {
        }
    }
    return rows;
}

}  // namespace snstf
