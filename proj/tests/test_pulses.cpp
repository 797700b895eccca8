#include <gtest/gtest.h>

#include <complex>
#include <sstream>

#include "qst/pulses.hpp"

using namespace qst;

TEST(Overdamped, ValuesAndLimits) {
  const double G = 0.02;
  auto p = overdamped_pulse(G, 1.0);
  EXPECT_NEAR(p.gamma1(0.0), G / 2, 1e-16);
  EXPECT_NEAR(p.gamma2(0.0), G / 2, 1e-16);
  for (double t : linspace(-300, 300, 61))
    EXPECT_NEAR(p.gamma1(t) / p.gamma2(t) / std::exp(2 * G * t), 1.0, 1e-12);
  EXPECT_NEAR(p.gamma1(1e5), G, 1e-16);
  EXPECT_NEAR(p.gamma1(-1e5), 0.0, 1e-16);
  EXPECT_NEAR(p.omega1(10.0), std::sqrt(p.gamma1(10.0)), 1e-16);
  EXPECT_DOUBLE_EQ(p.t_min, -300.0);
  EXPECT_LT(p.gamma1(p.t_min) / G, 1e-5);
  EXPECT_THROW(overdamped_pulse(0.0, 1.0), DomainError);
}

TEST(Overdamped, MirroredGrid) {
  auto p = overdamped_pulse(0.05, 1.0);
  for (double t : linspace(p.t_min, p.t_max, 401)) EXPECT_EQ(p.omega2(t), p.omega1(-t));
}

TEST(DarkCondition, AnalyticPairSatisfiesCondition) {
  auto p = overdamped_pulse(0.02, 1.0);
  auto r = dark_condition_residual(p, 100001);
  EXPECT_LE(r.relative, 1e-8);
  EXPECT_LE(r.absolute, 1e-8);
}

TEST(DarkCondition, ViolatedByConstantAndReversedPairs) {
  PulsePair flat;
  flat.omega1 = flat.omega2 = [](double) { return 0.2; };
  flat.t_min = 0.0;
  flat.t_max = 50.0;
  auto r = dark_condition_residual(flat, 1001);
  EXPECT_GT(r.absolute, 1.0);
  EXPECT_NEAR(r.t_absolute, 50.0, 1e-12);

  auto p = overdamped_pulse(0.02, 1.0);
  std::swap(p.omega1, p.omega2);
  p.prior_area = 0.0;
  EXPECT_GT(dark_condition_residual(p, 10001).relative, 0.5);

  PulsePair gap = flat;
  gap.omega2 = [](double t) { return t > 10 && t < 20 ? 0.0 : 0.2; };
  EXPECT_THROW(dark_condition_residual(gap, 1001), DomainError);
}

TEST(SolveGamma2, RecoversMirroredPulse) {
  const double G = 0.02;
  auto p = overdamped_pulse(G, 1.0);
  auto t = p.grid(100001);
  std::vector<double> g1;
  for (double x : t) g1.push_back(p.gamma1(x));
  auto s = solve_gamma2(t, g1, 0.0, p.prior_area);
  EXPECT_EQ(s.cap, 1e3 * *std::max_element(g1.begin(), g1.end()));
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!s.capped[i]) worst = std::max(worst, std::abs(s.gamma2[i] - p.gamma2(t[i])));
  EXPECT_LT(worst, 1e-6);
}

TEST(SolveGamma2, ZeroInputFullyCapped) {
  auto t = linspace(0, 10, 101);
  std::vector<double> zero(t.size(), 0.0);
  auto s = solve_gamma2(t, zero, 5.0);
  EXPECT_TRUE(s.fully_capped);
  EXPECT_EQ(s.gamma2[50], 5.0);
  std::vector<double> neg(t.size(), 0.1);
  neg[7] = -1e-3;
  EXPECT_THROW(solve_gamma2(t, neg), DomainError);
}

TEST(SolveGamma2, RectangularPulse) {
  const double G = 0.3, t_on = 2.0;
  auto t = linspace(t_on, 12.0, 200001);
  std::vector<double> g1(t.size(), G);
  auto s = solve_gamma2(t, g1);
  for (std::size_t i = 0; i < t.size(); i += 1000) {
    if (s.capped[i]) continue;
    const double expect = G / std::expm1(2 * G * (t[i] - t_on));
    EXPECT_NEAR(s.gamma2[i] / expect, 1.0, 1e-9);
  }
  EXPECT_TRUE(s.capped[0]);
}

TEST(Underdamped, SeamContinuity) {
  for (double W : {0.3, 0.5, 0.7, 1.0, 2.0}) {
    EXPECT_NEAR(underdamped_omega1(W, 1.0, -1e-300), W, 1e-9);
    EXPECT_NEAR(underdamped_omega1(W, 1.0, -1e-9), W, 1e-8);
  }
  EXPECT_NEAR(underdamped_omega1(0.5, 1.0, -1e-12), 0.5, 1e-9);
}

TEST(Underdamped, MatchesExponentialFormWithConsistentLabels) {
  // f, h from the two-exponential form with λ_+ = -(κ - p)/2, λ_- = -(κ + p)/2.
  const double k = 1.0;
  for (double W : {0.3, 0.45, 0.7, 1.0}) {
    const std::complex<double> p = std::sqrt(std::complex<double>(k * k - 4 * W * W));
    const std::complex<double> lp = -0.5 * (k - p), lm = -0.5 * (k + p);
    const double f0 = std::sqrt(k * k / 2 / (k * k + W * W));
    const double h0 = -std::sqrt(W * W / 2 / (k * k + W * W));
    for (double s : {0.1, 0.7, 2.5, 6.0}) {
      const auto ep = std::exp(lp * s), em = std::exp(lm * s);
      const auto f = (lp * em - lm * ep) / p * f0 + W / p * (ep - em) * h0;
      const auto h = (lp * ep - lm * em) / p * h0 - W / p * (ep - em) * f0;
      EXPECT_LT(std::abs(f.imag()), 1e-12);
      const double expect =
          -(W * f.real() + 2 * k * h.real()) / std::sqrt(1 - std::norm(f) - 2 * std::norm(h));
      EXPECT_NEAR(underdamped_omega1(W, k, -s), expect, 1e-12);
    }
  }
}

TEST(Underdamped, DecaysAndMirrors) {
  auto p = underdamped_pulse(0.5, 1.0);
  EXPECT_LT(p.omega1(-10.0), 0.05);
  EXPECT_LT(p.omega1(-40.0), 1e-6);
  for (double t : linspace(-10, 10, 201)) {
    EXPECT_EQ(p.omega2(t), p.omega1(-t));
    EXPECT_GE(p.omega1(t), 0.0);
  }
}

TEST(Underdamped, SignChangeIsReported) {
  EXPECT_TRUE(std::isinf(underdamped_support(0.5, 1.0)));
  const double s07 = underdamped_support(0.7, 1.0);
  const double s10 = underdamped_support(1.0, 1.0);
  EXPECT_NEAR(s07, 5.4748, 1e-3);
  EXPECT_NEAR(s10, 3.023, 1e-3);
  EXPECT_THROW(underdamped_pulse(0.7, 1.0), DomainError);
  EXPECT_THROW(underdamped_pulse(1.0, 1.0), DomainError);
  EXPECT_NO_THROW(underdamped_pulse(0.7, 1.0, -s07, s07));
  EXPECT_NO_THROW(underdamped_pulse(1.0, 1.0, -s10, s10));
}

TEST(DarkState, SingleQuantumAtOrigin) {
  auto p = overdamped_pulse(0.02, 1.0);
  auto grid = linspace(p.t_min, 0.0, 500001);
  auto d = dark_state_coefficients(1, p, grid);
  EXPECT_NEAR(d.alpha.back()[0], 1 / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(d.alpha.back()[1], 1 / std::sqrt(2.0), 1e-9);
}

TEST(DarkState, NormalizationAndLimits) {
  auto p = overdamped_pulse(0.02, 1.0);
  auto grid = p.grid(1000001);
  for (int n = 0; n <= 5; ++n) {
    auto d = dark_state_coefficients(n, p, grid);
    EXPECT_LE(d.max_normalization_error(), 1e-10) << n;
    EXPECT_NEAR(d.alpha.front()[0], 1.0, 1e-4);
    EXPECT_NEAR(d.alpha.back()[static_cast<std::size_t>(n)], 1.0, 1e-4);
  }
  auto d0 = dark_state_coefficients(0, p, grid);
  for (const auto& row : d0.alpha) EXPECT_NEAR(row[0], 1.0, 1e-5);
  auto bad = p;
  std::swap(bad.omega1, bad.omega2);
  EXPECT_THROW(dark_state_coefficients(2, bad, grid), DomainError);
}

TEST(PulseCsv, HeaderAndRows) {
  std::ostringstream os;
  write_pulse_csv(os, overdamped_pulse(0.1, 1.0), 11);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "t,omega1,omega2,gamma1,gamma2");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 12);
}
