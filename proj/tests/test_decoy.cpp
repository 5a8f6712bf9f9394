#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "snstf/decoy.hpp"
#include "snstf/optimizer.hpp"

using namespace snstf;

namespace {

// Per-photon-number yields of |0 n> through a lossy arm with transmittance
// t and dark count p_d; y_1 is overridden to make the true value explicit.
std::vector<double> lossy_yields(double t, double pd, double y1)
{
    std::vector<double> y(41);
    for (int n = 0; n <= 40; ++n) y[n] = 1.0 - std::pow(1.0 - t, n) * (1.0 - pd);
    y[1] = y1;
    return y;
}

// Exactly-one-click probability of one photon: it survives with
// probability eta and fires one detector (misalignment only changes which
// one); the other must stay dark. Lost photons leave exactly one dark count.
double true_single_photon_yield(const DeviceModel& d)
{
    const double eta = d.eta_d * std::pow(10.0, -d.loss_db_per_km * d.distance_km / 20.0);
    return eta * (1.0 - d.p_d) + (1.0 - eta) * 2.0 * d.p_d * (1.0 - d.p_d);
}

ProtocolParams optimized_asymptotic(double distance, Variant v = Variant::FourIntensity)
{
    OptimizationProblem prob;
    prob.device = table1_device(distance);
    prob.pipeline = Pipeline::Asymptotic;
    prob.variant = v;
    prob.restarts = 8;
    prob.budget = 2000;
    return optimize(prob).params;
}

}  // namespace

TEST(YieldBound, ZeroYieldsGiveZero)
{
    EXPECT_EQ(s_z0_lower(0, 0, 0, 0.05, 0.2).value, 0.0);
    EXPECT_EQ(s_z1_lower(0, 0, 0, 0.05, 0.2).value, 0.0);
    EXPECT_EQ(s1z_lower_three_intensity(0, 0, 0, 0, 0, 0.05, 0.5).value, 0.0);
    EXPECT_EQ(s1z_lower(Clamped{}, Clamped{}).value, 0.0);
}

TEST(YieldBound, PoissonFixtureIsSoundAndTight)
{
    const double y1 = 1e-3, mu1 = 0.05, mu2 = 0.2;
    const auto y = lossy_yields(5e-4, 1e-10, y1);
    const double s00 = y[0];
    const double s01 = poisson_yield_oracle(y, mu1).value;
    const double s02 = poisson_yield_oracle(y, mu2).value;
    const Clamped b = s_z0_lower(s01, s02, s00, mu1, mu2);
    EXPECT_LE(b.value, y1);
    EXPECT_GE(b.value, 0.99 * y1);
    EXPECT_FALSE(b.clamped());
    EXPECT_LE(s_z1_lower(s01, s02, s00, mu1, mu2).value, y1);
    EXPECT_LE(s1z_lower_three_intensity(s01, poisson_yield_oracle(y, 0.5).value, s00, s01,
                                        poisson_yield_oracle(y, 0.5).value, mu1, 0.5)
                  .value,
              y1);
}

TEST(YieldBound, DarkFloorChannelIsNotClamped)
{
    const double pd = 1e-6, s = 2 * pd * (1 - pd), mu1 = 0.05, mu2 = 0.2;
    const double expected =
        (mu2 * mu2 * std::exp(mu1) - mu1 * mu1 * std::exp(mu2) - mu2 * mu2 + mu1 * mu1) * s / (mu1 * mu2 * (mu2 - mu1));
    const Clamped b = s_z0_lower(s, s, s, mu1, mu2);
    EXPECT_GT(b.raw, 0.0);
    EXPECT_FALSE(b.clamped());
    EXPECT_NEAR(b.value, expected, 1e-18);
}

TEST(YieldBound, MirrorAndMean)
{
    EXPECT_EQ(s_z1_lower(1e-3, 4e-3, 1e-6, 0.05, 0.2).raw, s_z0_lower(1e-3, 4e-3, 1e-6, 0.05, 0.2).raw);
    const Clamped a{0.3, 0.3};
    EXPECT_EQ(s1z_lower(a, a).value, 0.3);
}

TEST(YieldBound, ThreeIntensityIsASubstitution)
{
    const double s01 = 1e-3, s02 = 4.2e-3, s00 = 2e-8, s10 = 1.1e-3, s20 = 4.0e-3;
    const Clamped four = s1z_lower(s_z0_lower(s01, s02, s00, 0.05, 0.2), s_z1_lower(s10, s20, s00, 0.05, 0.2));
    const Clamped three = s1z_lower_three_intensity(s01, s02, s00, s10, s20, 0.05, 0.2);
    EXPECT_EQ(four.raw, three.raw);
}

TEST(YieldBound, LinearInYields)
{
    for (double c : {1.0, 0.5, 0.1, 1e-3}) {
        const double base = s_z0_lower(1e-3, 4e-3, 1e-6, 0.05, 0.2).raw;
        EXPECT_NEAR(s_z0_lower(c * 1e-3, c * 4e-3, c * 1e-6, 0.05, 0.2).raw, c * base, 1e-15 * std::abs(base));
    }
}

TEST(YieldBound, TightensAsIntensitiesShrink)
{
    const double y1 = 1e-3;
    const auto y = lossy_yields(5e-4, 1e-10, y1);
    double prev = 0.0;
    for (double mu1 : {0.2, 0.1, 0.05, 0.02, 0.01}) {
        const double mu2 = 3 * mu1;
        const double r =
            s_z0_lower(poisson_yield_oracle(y, mu1).value, poisson_yield_oracle(y, mu2).value, y[0], mu1, mu2).value /
            y1;
        EXPECT_LE(r, 1.0);
        EXPECT_GT(r, prev);
        prev = r;
    }
    EXPECT_GT(prev, 0.999);
}

TEST(YieldBound, RejectsDegenerateIntensities)
{
    EXPECT_THROW(s_z0_lower(1e-3, 1e-3, 0, 0.1, 0.1), std::invalid_argument);
    EXPECT_THROW(s_z0_lower(1e-3, 1e-3, 0, 0.2, 0.1), std::invalid_argument);
    EXPECT_THROW(s_z0_lower(1e-3, 1e-3, 0, 0.0, 0.1), std::invalid_argument);
}

TEST(SliceError, Definition)
{
    Observables o;
    o.cap_n_slice_plus = o.cap_n_slice_minus = 1000;
    EXPECT_EQ(t_delta(o), 0.0);
    o.n_slice_wrong_plus = o.n_slice_wrong_minus = 500;
    EXPECT_DOUBLE_EQ(t_delta(o), 0.5);
    o.n_slice_wrong_plus = 100;
    o.n_slice_wrong_minus = 300;
    EXPECT_DOUBLE_EQ(t_delta(o), 0.2);
    o.cap_n_slice_minus = 0;
    EXPECT_THROW(t_delta(o), std::domain_error);
}

TEST(SliceError, MatchesChannelAverages)
{
    const DeviceModel d = table1_device(200);
    ProtocolParams p;
    p.mu1 = 0.05;
    p.delta_slice = 0.6;
    const SliceRates r = expected_slice_rates(p, arm_transmittance(d), d);
    EXPECT_NEAR(t_delta(expected_observables(p, d)), 0.5 * (r.t_plus_wrong + r.t_minus_wrong), 1e-18);
}

TEST(PhaseErrorBound, Cases)
{
    const double mu1 = 0.05, s00 = 2e-10;
    const auto zero = e1ph_upper(0.5 * std::exp(-2 * mu1) * s00, s00, mu1, 1e-3);
    ASSERT_TRUE(zero);
    EXPECT_NEAR(zero->value, 0.0, 1e-18);

    const auto huge = e1ph_upper(0.5, s00, mu1, 1e-6);
    ASSERT_TRUE(huge);
    EXPECT_EQ(huge->value, 1.0);
    EXPECT_TRUE(huge->clamped());

    EXPECT_FALSE(e1ph_upper(1e-4, s00, mu1, 0.0));
    EXPECT_FALSE(e1ph_upper(1e-4, s00, mu1, -1e-9));
}

TEST(AsymptoticPipeline, SoundAt200km)
{
    const DeviceModel d = table1_device(200);
    const ProtocolParams p = optimized_asymptotic(200);
    const KeyRateReport r = asymptotic_pipeline(p, d, Variant::FourIntensity);
    EXPECT_GT(r.rate_per_pulse, 0.0);
    EXPECT_LE(r.s1z_lower, true_single_photon_yield(d));
    // No phase-error bound can go below the misalignment floor.
    EXPECT_GE(r.e1ph_upper, d.e_a);
}

TEST(AsymptoticPipeline, RateIsTheKeyRateFormula)
{
    const DeviceModel d = table1_device(100);
    const ProtocolParams p = optimized_asymptotic(100);
    const KeyRateReport r = asymptotic_pipeline(p, d, Variant::FourIntensity);
    EXPECT_EQ(r.rate_per_pulse, key_rate_per_pulse(p, r.s1_used, r.e1ph_used, r.s_z, r.e_z, d.f_ec).value);
    EXPECT_EQ(r.s1_used, r.s1z_lower);
    EXPECT_GT(r.rate_per_pulse, 1e-5);
}

TEST(AsymptoticPipeline, BeyondCutoffIsZero)
{
    const KeyRateReport r = asymptotic_pipeline(ProtocolParams{}, table1_device(900), Variant::FourIntensity);
    EXPECT_EQ(r.rate_per_pulse, 0.0);
    EXPECT_TRUE(r.rate_clamped);
}

TEST(AsymptoticPipeline, EqualDecoysRejected)
{
    ProtocolParams p;
    p.mu2 = p.mu1;
    EXPECT_THROW(asymptotic_pipeline(p, table1_device(0), Variant::FourIntensity), std::invalid_argument);
}

TEST(AsymptoticPipeline, ThreeIntensityNeedsNoSecondDecoy)
{
    ProtocolParams p;
    EXPECT_THROW(asymptotic_pipeline(p, table1_device(0), Variant::ThreeIntensity), std::invalid_argument);
    p.p_2 = 0.0;
    const KeyRateReport three = asymptotic_pipeline(p, table1_device(50), Variant::ThreeIntensity);
    const KeyRateReport four = asymptotic_pipeline(p, table1_device(50), Variant::FourIntensity);
    EXPECT_EQ(three.rate_per_pulse, four.rate_per_pulse);
    EXPECT_STREQ(three.bound_source, "mu_z");
}

TEST(AsymptoticPipeline, ThreeAndFourIntensityAgreeOnSharedObservables)
{
    for (double dist : {0.0, 100.0, 200.0, 300.0}) {
        const DeviceModel d = table1_device(dist);
        ProtocolParams p = optimized_asymptotic(dist);
        ProtocolParams unit = p;
        unit.n_pairs = 1.0;
        const Observables obs = expected_observables(unit, d);
        const KeyRateReport four = asymptotic_from_observables(obs, p, d, Variant::FourIntensity);
        p.p_2 = 0.0;
        const KeyRateReport three = asymptotic_from_observables(obs, p, d, Variant::ThreeIntensity);
        if (four.rate_per_pulse < 1e-6) continue;
        EXPECT_LT(std::abs(four.rate_per_pulse - three.rate_per_pulse) / four.rate_per_pulse, 0.01) << dist;
    }
}

TEST(AsymptoticPipeline, DecreasesWithDistance)
{
    const ProtocolParams p = optimized_asymptotic(100);
    double prev = 1.0;
    for (double dist = 0; dist <= 300; dist += 25) {
        const double r = asymptotic_pipeline(p, table1_device(dist), Variant::FourIntensity).rate_per_pulse;
        EXPECT_LT(r, prev);
        prev = r;
    }
}
