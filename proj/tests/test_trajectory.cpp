#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "qst/analysis.hpp"
#include "qst/trajectory.hpp"

using namespace qst;

namespace {

std::vector<cplx> test_coefficients() {
  std::vector<cplx> c;
  for (int k = 0; k < 4; ++k) c.push_back(0.5 * std::exp(kI * (kPi * k / 3.0)));
  return c;
}

// Γ₁(t) = γ/(1+e^{-2t}), Γ₂ ≡ 0 on [-5, 10].
PulsePair sender_only(double gamma) {
  PulsePair p;
  p.omega1 = [gamma](double t) { return std::sqrt(gamma / (1.0 + std::exp(-2.0 * t))); };
  p.omega2 = [](double) { return 0.0; };
  p.t_min = -5.0;
  p.t_max = 10.0;
  return p;
}

double sender_area(double gamma, double t) {
  return 0.5 * gamma * (std::log1p(std::exp(2.0 * t)) - std::log1p(std::exp(-10.0)));
}

}  // namespace

TEST(EffectiveHamiltonian, LimitsAndPhases) {
  auto l = motional_layout(4, 4);
  PulsePair p = sender_only(0.3);
  DenseMatrix h = effective_hamiltonian(l, p, 1.0).dense();
  EXPECT_LT((h + h.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
  const int i10 = l->index_of(std::vector<int>{1, 0});
  EXPECT_LT(std::abs(h(i10, i10) - cplx(0, -p.gamma1(1.0))), 1e-15);
  auto q = overdamped_pulse(0.1, 1.0);
  DenseVector out = effective_hamiltonian(l, q, 0.2).matrix() * vacuum(l).amplitudes();
  EXPECT_EQ(out.norm(), 0.0);
  q.phi1 = 0.3;
  EXPECT_THROW(effective_hamiltonian(l, q, 0.0), DomainError);
}

TEST(Collapse, BrightAndDarkStates) {
  auto l = motional_layout(3, 3);
  PulsePair p;
  p.omega1 = p.omega2 = [](double) { return 0.5; };
  DenseVector c10 = collapse_operator(l, p, 0.0).matrix() * fock_state(l, {1, 0}).amplitudes();
  EXPECT_NEAR(std::abs(c10(0) - 0.5), 0.0, 1e-15);
  DenseVector d = DenseVector::Zero(9);
  d(l->index_of(std::vector<int>{1, 0})) = d(l->index_of(std::vector<int>{0, 1})) =
      1 / std::sqrt(2.0);
  DenseVector cd = collapse_operator(l, p, 0.0).matrix() * d;
  EXPECT_LT(cd.norm(), 1e-15);
}

TEST(Collapse, DarkStateFromCoefficients) {
  auto l = motional_layout(4, 4);
  auto p = overdamped_pulse(0.02, 1.0);
  auto c = test_coefficients();
  auto grid = linspace(p.t_min, p.t_max, 200001);
  std::vector<double> g1;
  for (double t : grid) g1.push_back(p.gamma1(t));
  auto area = cumulative_trapezoid(grid, g1, p.prior_area);
  for (std::size_t i = 0; i < grid.size(); i += 20000) {
    auto psi = dark_state_vector(l, c, p, grid[i], area[i]);
    DenseVector cpsi = collapse_operator(l, p, grid[i]).matrix() * psi.amplitudes();
    EXPECT_LE(cpsi.norm(), 1e-8);
  }
}

TEST(NoJump, NormLossMatchesCollapseRate) {
  auto l = motional_layout(4, 5);
  auto p = overdamped_pulse(0.05, 1.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int rep = 0; rep < 5; ++rep) {
    DenseVector v(l->total_dim());
    for (auto& x : v) x = cplx(g(rng), g(rng));
    auto psi = StateVector::normalized(l, v);
    const double t = -20.0 + 10.0 * rep;
    DenseVector mpsi = cplx(0, -1) * (effective_hamiltonian(l, p, t).matrix() * psi.amplitudes());
    const double rate = 2.0 * psi.amplitudes().dot(mpsi).real();
    DenseVector cpsi = collapse_operator(l, p, t).matrix() * psi.amplitudes();
    EXPECT_NEAR(rate, -2.0 * cpsi.squaredNorm(), 1e-10);
  }
}

TEST(NoJump, SurvivalLaws) {
  auto l = motional_layout(3, 3);
  auto p = sender_only(0.3);
  auto grid = linspace(p.t_min, p.t_max, 301);
  auto r = propagate_nojump(fock_state(l, {1, 0}), p, grid);
  for (std::size_t i = 0; i < grid.size(); i += 10) {
    const double area = sender_area(0.3, grid[i]);
    EXPECT_NEAR(r.survival[i], std::exp(-2 * area), 1e-6);
  }
  auto v = propagate_nojump(vacuum(l), p, grid);
  for (double s : v.survival) EXPECT_EQ(s, 1.0);
  PulsePair strong = sender_only(100.0);
  EXPECT_THROW(propagate_nojump(fock_state(l, {1, 0}), strong, grid), IntegrationError);
}

TEST(NoJump, DarkStateSurvivesAndTracksCoefficients) {
  auto l = motional_layout(4, 4);
  auto p = overdamped_pulse(0.02, 1.0);
  auto c = test_coefficients();
  auto grid = linspace(p.t_min, p.t_max, 100001);
  std::vector<double> g1;
  for (double t : grid) g1.push_back(p.gamma1(t));
  auto area = cumulative_trapezoid(grid, g1, p.prior_area);
  auto psi0 = dark_state_vector(l, c, p, grid.front(), area.front());
  auto r = propagate_nojump(psi0, p, grid, true);
  double worst = 0.0, surv = 0.0;
  for (std::size_t i = 0; i < grid.size(); i += 500) {
    auto expect = dark_state_vector(l, c, p, grid[i], area[i]);
    worst = std::max(worst, (r.states[i].amplitudes() - expect.amplitudes()).cwiseAbs().maxCoeff());
    surv = std::max(surv, std::abs(r.survival[i] - 1.0));
  }
  EXPECT_LE(worst, 1e-4);
  EXPECT_LE(surv, 1e-6);
  auto target = fock_state(l, {0, 0}).amplitudes();
  DenseVector want = DenseVector::Zero(16);
  for (int n = 0; n < 4; ++n) want(l->index_of(std::vector<int>{0, n})) = c[std::size_t(n)];
  EXPECT_GT(std::norm(want.dot(r.final_state.amplitudes())), 1 - 1e-4);
}

TEST(Mcwf, DarkStateHasNoJumps) {
  auto l = motional_layout(4, 4);
  auto p = overdamped_pulse(0.02, 1.0);
  auto c = test_coefficients();
  const double area0 = p.prior_area;
  auto psi0 = dark_state_vector(l, c, p, p.t_min, area0);
  auto grid = linspace(p.t_min, p.t_max, 241);
  auto e = mcwf_ensemble(psi0, p, 50, 42, grid);
  EXPECT_EQ(e.total_jumps, 0u);
}

TEST(Mcwf, SingleEmitterJumpTimes) {
  auto l = motional_layout(3, 2);
  auto p = sender_only(0.3);
  auto grid = linspace(p.t_min, p.t_max, 151);
  const std::size_t n = 2000;
  auto e = mcwf_ensemble(fock_state(l, {1, 0}), p, n, 7, grid);
  std::vector<double> first;
  for (const auto& r : e.records) {
    EXPECT_LE(r.jump_times.size(), 1u);
    if (!r.jump_times.empty()) first.push_back(r.jump_times[0]);
  }
  auto cdf = [](double t) {
    const double area = sender_area(0.3, t);
    return 1.0 - std::exp(-2 * area);
  };
  std::sort(first.begin(), first.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    const double f = cdf(first[i]);
    ks = std::max({ks, std::abs(f - double(i) / n), std::abs(f - double(i + 1) / n)});
  }
  const double tail = 1.0 - cdf(p.t_max);
  ks = std::max(ks, std::abs(double(n - first.size()) / n - tail));
  EXPECT_LT(ks, 1.63 / std::sqrt(double(n)));
}

TEST(Mcwf, DeterministicAcrossThreads) {
  auto l = motional_layout(3, 3);
  auto p = overdamped_pulse(0.1, 1.0);
  std::swap(p.omega1, p.omega2);
  auto grid = linspace(p.t_min, p.t_max, 61);
  auto a = mcwf_ensemble(fock_state(l, {2, 0}), p, 40, 99, grid, 1);
  auto b = mcwf_ensemble(fock_state(l, {2, 0}), p, 40, 99, grid, 3);
  EXPECT_EQ((a.rho.matrix() - b.rho.matrix()).cwiseAbs().maxCoeff(), 0.0);
  for (std::size_t k = 0; k < 40; ++k) EXPECT_EQ(a.records[k].jump_times, b.records[k].jump_times);
  EXPECT_GT(a.total_jumps, 0u);
  std::ostringstream os;
  write_jump_csv(os, a.records);
  EXPECT_EQ(os.str().substr(0, 13), "trajectory,t\n");
}

TEST(Mcwf, AgreesWithReducedMasterEquation) {
  auto l = motional_layout(4, 4);
  auto p = overdamped_pulse(0.05, 1.0);
  std::swap(p.omega1, p.omega2);
  p.prior_area = 0.0;
  auto c = test_coefficients();
  auto psi0 = superposition_state(l, "b1", c);
  auto grid = linspace(p.t_min, p.t_max, 121);
  auto e = mcwf_ensemble(psi0, p, 2000, 2024, grid);
  auto model = reduced_transfer_model(l, p);
  auto me = integrate(model, DensityMatrix::pure(psi0), p.t_min, p.t_max);
  EXPECT_GT(e.total_jumps, 500u);
  EXPECT_LE(trace_distance(e.rho, me.final_state), 0.05);
}

TEST(ReducedModel, DarkTransferMatchesNoJump) {
  auto l = motional_layout(4, 4);
  auto p = overdamped_pulse(0.05, 1.0);
  auto c = test_coefficients();
  auto psi0 = superposition_state(l, "b1", c);
  auto model = reduced_transfer_model(l, p);
  auto me = integrate(model, DensityMatrix::pure(psi0), p.t_min, p.t_max);
  DenseVector want = DenseVector::Zero(16);
  for (int n = 0; n < 4; ++n) want(l->index_of(std::vector<int>{0, n})) = c[std::size_t(n)];
  EXPECT_GT(fidelity(me.final_state, StateVector(l, want)), 1 - 1e-3);
}
