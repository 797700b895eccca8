#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "qst/analysis.hpp"

using namespace qst;

namespace {

std::vector<cplx> test_coefficients() {
  std::vector<cplx> c;
  for (int k = 0; k < 4; ++k) c.push_back(0.5 * std::exp(kI * (kPi * k / 3.0)));
  return c;
}

LiouvillianModel two_cavity_cascade(const LayoutPtr& l, double k) {
  LiouvillianModel m(l);
  auto a1 = annihilation(l, "a1"), a2 = annihilation(l, "a2");
  m.add(Dissipator{a1, constant(k)});
  m.add(Dissipator{a2, constant(k)});
  m.add(CascadeLink{a1, a2, constant(k), constant(k)});
  return m;
}

}  // namespace

TEST(Fidelity, PureAndTransferStart) {
  auto l = ModeLayout::make({{"a1", 4}, {"b1", 5}, {"a2", 4}, {"b2", 5}});
  auto c = test_coefficients();
  auto start = superposition_state(l, "b1", c);
  auto target = superposition_state(l, "b2", c);
  EXPECT_NEAR(fidelity(DensityMatrix::pure(target), target), 1.0, 1e-15);
  EXPECT_NEAR(fidelity(DensityMatrix::pure(start), target), 1.0 / 16.0, 1e-15);
}

TEST(Fidelity, LinearUnderMixing) {
  auto l = ModeLayout::make({{"a", 3}, {"b", 3}});
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  auto rnd = [&] {
    DenseVector v(9);
    for (auto& x : v) x = cplx(g(rng), g(rng));
    return StateVector::normalized(l, v);
  };
  auto r1 = DensityMatrix::pure(rnd()), r2 = DensityMatrix::pure(rnd());
  auto t = rnd();
  const double lam = 0.3;
  DensityMatrix mix(l, lam * r1.matrix() + (1 - lam) * r2.matrix());
  EXPECT_NEAR(fidelity(mix, t), lam * fidelity(r1, t) + (1 - lam) * fidelity(r2, t), 1e-14);
}

TEST(SqueezedFidelity, ExactAndVacuum) {
  const auto bath = dpo_effective_bath(0.3, 1.0);
  auto sq = squeezed_vacuum(30, bath.N, bath.M);
  EXPECT_GE(squeezed_fidelity(DensityMatrix::pure(sq), bath.N, bath.M), 1 - 1e-6);
  auto vac = DensityMatrix::pure(vacuum(ModeLayout::make({{"b", 10}})));
  EXPECT_NEAR(squeezed_fidelity(vac, 0.4348, std::sqrt(0.4348 * 1.4348)),
              1 / std::sqrt(1.4348), 1e-12);
  EXPECT_NEAR(squeezed_fidelity(vac, 0.4348, std::sqrt(0.4348 * 1.4348)), 0.835, 1e-3);
  EXPECT_THROW(squeezed_fidelity(vac, 0.1, 2.0), DomainError);
}

TEST(Dpo, OperatingPointAtXPointThree) {
  const auto b = dpo_effective_bath(0.3, 1.0);
  EXPECT_NEAR(b.max_squeezing, 0.710, 1e-3);
  EXPECT_NEAR(b.N, 0.4348, 1e-4);
  EXPECT_NEAR(std::abs(b.M), 0.7899, 2e-4);
  EXPECT_NEAR(std::abs(b.M), 0.78976, 1e-5);
  EXPECT_NEAR(std::norm(b.M) - b.N * (b.N + 1), 0.0, 1e-9);
  EXPECT_NEAR(b.v_plus * b.v_minus, 1.0, 1e-12);
  const auto z = dpo_effective_bath(0.0, 1.0);
  EXPECT_EQ(z.N, 0.0);
  EXPECT_EQ(z.M, cplx(0.0));
  EXPECT_THROW(dpo_effective_bath(1.0, 1.0), DomainError);
  const auto ph = dpo_effective_bath(0.3 * std::exp(kI * 0.4), 1.0);
  EXPECT_NEAR(std::arg(ph.M), 0.4, 1e-14);
  for (double x = 0.0; x < 0.99; x += 0.07) {
    const auto r = dpo_effective_bath(x, 1.0);
    EXPECT_NEAR(std::norm(r.M), r.N * (r.N + 1), 1e-9 * (1 + r.N * r.N));
  }
}

TEST(Regression, TwoCavityCascade) {
  auto l = ModeLayout::make({{"a1", 3}, {"a2", 3}});
  auto m = two_cavity_cascade(l, 1.0);
  auto vac = DensityMatrix::pure(vacuum(l));
  auto a1 = annihilation(l, "a1"), a2 = annihilation(l, "a2");
  auto tau = linspace(0, 6, 61);
  auto c11 = regression_correlation(m, vac, a1, a1.adjoint(), tau);
  auto c22 = regression_correlation(m, vac, a2, a2.adjoint(), tau);
  auto c21 = regression_correlation(m, vac, a2, a1.adjoint(), tau);
  auto c12 = regression_correlation(m, vac, a1, a2.adjoint(), tau);
  auto back = regression_correlation(m, vac, a2.adjoint(), a1, tau, Ordering::BFirst);
  EXPECT_NEAR(c11.value[0].real(), 1.0, 1e-15);
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const double t = tau[i];
    EXPECT_NEAR(std::abs(c11.value[i] - std::exp(-t)), 0.0, 1e-6);
    EXPECT_NEAR(std::abs(c22.value[i] - std::exp(-t)), 0.0, 1e-6);
    EXPECT_NEAR(std::abs(c21.value[i] + 2 * t * std::exp(-t)), 0.0, 1e-6);
    EXPECT_NEAR(std::abs(back.value[i] + 2 * t * std::exp(-t)), 0.0, 1e-6);
    EXPECT_LE(std::abs(c12.value[i]), 1e-8);
  }
  auto via_ss = regression_correlation(m, a1, a1.adjoint(), tau, Ordering::AFirst,
                                       DensityMatrix::pure(fock_state(l, {1, 0})));
  EXPECT_NEAR(std::abs(via_ss.value[10] - std::exp(-1.0)), 0.0, 1e-6);
}

TEST(OutputVariance, GroundThermalAndUncoupled) {
  auto l = ModeLayout::make({{"b", 12}});
  auto b = annihilation(l, "b");
  const double G = 0.3;
  LiouvillianModel damped(l);
  damped.add(Dissipator{b, constant(G)});
  auto vac = DensityMatrix::pure(vacuum(l));
  EXPECT_NEAR(output_field_variance(damped, vac, b, G).variance, 1.0, 1e-12);
  EXPECT_EQ(output_field_variance(damped, vac, b, 0.0).variance, 1.0);

  for (double nbar : {0.1, 0.3}) {
    LiouvillianModel hot(l);
    hot.add(SqueezedBathChannel{b, G, nbar, 0.0});
    SteadyStateOptions opt;
    opt.tol = 1e-9;
    opt.t_max = 400;
    auto v = output_field_variance(hot, b, G, 0.0, vac, opt);
    EXPECT_NEAR(v.variance, 1.0 + 8.0 * nbar, 1e-3);
    EXPECT_NEAR(output_field_variance(hot, b, 2 * G, 0.0, vac, opt).added, 2 * v.added, 1e-3);
  }
}

TEST(DensityTable, StructureAndEmitters) {
  const auto bath = dpo_effective_bath(0.3, 1.0);
  auto sq = DensityMatrix::pure(squeezed_vacuum(24, bath.N, bath.M));
  auto t = density_matrix_table(sq, 6);
  EXPECT_EQ(t.size, 7);
  EXPECT_LE(t.re[1][1], 1e-3);
  EXPECT_LE(t.re[3][3], 1e-3);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      EXPECT_EQ(t.re[i][j], t.re[j][i]);
      EXPECT_EQ(t.im[i][j], -t.im[j][i]);
    }
  auto vt = density_matrix_table(DensityMatrix::pure(vacuum(ModeLayout::make({{"b", 5}}))), 6);
  EXPECT_EQ(vt.size, 5);
  double off = 0.0;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j)
      if (i || j) off += std::abs(vt.re[i][j]);
  EXPECT_EQ(off, 0.0);
  EXPECT_EQ(vt.re[0][0], 1.0);
  std::ostringstream os;
  write_density_csv(os, vt);
  EXPECT_EQ(os.str().substr(0, 10), "i,j,re,im\n");
  EXPECT_EQ(to_json(vt)["size"], 5);
}
