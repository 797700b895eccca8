#include <gtest/gtest.h>

#include "qst/feasibility.hpp"

using namespace qst::lab;

TEST(Feasibility, WaistFromGeometry) {
  EXPECT_NEAR(mode_waist(0.05, 250e-6, 313e-9) * 1e6, 15.8, 0.1);
  double prev = mode_waist(0.05, 0.099, 313e-9);
  for (double l = 0.0995; l < 0.1; l += 0.0001) {
    const double w = mode_waist(0.05, l, 313e-9);
    EXPECT_LT(w, prev);
    prev = w;
  }
  EXPECT_NEAR(mode_waist(0.05, 250e-6, 4 * 313e-9) / mode_waist(0.05, 250e-6, 313e-9), 2.0,
              1e-12);
  EXPECT_THROW(mode_waist(0.05, 0.1, 313e-9), qst::DomainError);
  EXPECT_THROW(mode_waist(0.05, -1e-3, 313e-9), qst::DomainError);
}

TEST(Feasibility, CouplingAndDecay) {
  const double w0 = mode_waist(0.05, 250e-6, 313e-9);
  const double g0 = dipole_coupling(313e-9, kTwoPi * 19.4e6, w0, 250e-6);
  EXPECT_NEAR(g0 / kTwoPi / 1e6, 14.9, 0.1);
  EXPECT_NEAR(dipole_coupling(313e-9, kTwoPi * 19.4e6, w0, 500e-6), g0 / std::sqrt(2.0),
              1e-9 * g0);
  const double k = cavity_kappa(250e-6, 3e5);
  EXPECT_NEAR(k / kTwoPi / 1e6, 1.0, 0.02);
  EXPECT_NEAR(cavity_kappa(250e-6, 6e5), k / 2, 1e-12 * k);
  EXPECT_NEAR(kTwoPi * 22e6 / k, 22.0, 0.5);
}

TEST(Feasibility, PresetMetrics) {
  const auto p = beryllium_preset();
  const auto m = strong_coupling_metrics(p);
  EXPECT_NEAR(m.geometric_ratio, 28.0, 1.0);
  EXPECT_NEAR(m.coupling_ratio / m.geometric_ratio, 1.0, 1e-10);
  EXPECT_NEAR(m.eta, 0.10, 0.005);
  EXPECT_NEAR(m.transfer_rates.front() / kTwoPi / 1e3, 20.0, 0.5);
  EXPECT_NEAR(m.transfer_rates.back() / kTwoPi / 1e3, 200.0, 5.0);
  const auto j = feasibility_report(p);
  EXPECT_NEAR(j["g0_over_2pi_hz"].get<double>() / 1e6, 14.9, 0.1);
  EXPECT_EQ(j["transfer_rates"].size(), 2u);
}

TEST(Feasibility, IdentityHoldsForOtherParameters) {
  auto p = beryllium_preset();
  p.wavelength = 852e-9;
  p.finesse = 4.2e5;
  p.mirror_separation = 80e-6;
  p.mirror_radius = 0.01;
  p.gamma = kTwoPi * 5.2e6;
  const auto m = strong_coupling_metrics(p);
  EXPECT_NEAR(m.coupling_ratio / m.geometric_ratio, 1.0, 1e-10);
  p.mass = -1;
  EXPECT_THROW(strong_coupling_metrics(p), qst::DomainError);
}
