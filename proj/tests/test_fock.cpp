#include <gtest/gtest.h>

#include <random>

#include "qst/fock.hpp"

using namespace qst;

namespace {

DenseMatrix random_density(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  DenseMatrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cplx(g(rng), g(rng));
  DenseMatrix r = a * a.adjoint();
  return r / r.trace();
}

}  // namespace

TEST(Layout, RejectsBadModes) {
  EXPECT_THROW(ModeLayout({{"a", 1}}), LayoutError);
  EXPECT_THROW(ModeLayout({{"a", 3}, {"a", 3}}), LayoutError);
  EXPECT_THROW(ModeLayout({}), LayoutError);
}

TEST(Layout, RowMajorStrides) {
  auto l = ModeLayout::make({{"a1", 4}, {"b1", 5}, {"a2", 4}, {"b2", 5}});
  EXPECT_EQ(l->total_dim(), 400);
  EXPECT_EQ(l->stride(0), 100);
  EXPECT_EQ(l->stride(1), 20);
  EXPECT_EQ(l->stride(3), 1);
  auto psi = fock_state(l, {0, 3, 0, 0});
  EXPECT_EQ(std::abs(psi[3 * 20]), 1.0);
}

TEST(Layout, ExcitationCapKeepsOrder) {
  auto l = ModeLayout::make({{"a", 3}, {"b", 3}}, 2);
  EXPECT_EQ(l->total_dim(), 6);
  EXPECT_EQ(l->product_dim(), 9);
  std::vector<int> o11{1, 1}, o21{2, 1};
  EXPECT_GE(l->index_of(o11), 0);
  EXPECT_EQ(l->index_of(o21), -1);
  for (int i = 1; i < l->total_dim(); ++i) {
    auto p = l->occupations(i - 1), q = l->occupations(i);
    EXPECT_TRUE(p[0] < q[0] || (p[0] == q[0] && p[1] < q[1]));
  }
  EXPECT_THROW(fock_state(l, {2, 1}), TruncationError);
}

TEST(Operators, LoweringMatrixSingleMode) {
  auto l = ModeLayout::make({{"b", 3}});
  DenseMatrix b = annihilation(l, "b").dense();
  EXPECT_EQ(b(0, 1), cplx(1.0));
  EXPECT_NEAR(b(1, 2).real(), std::sqrt(2.0), 1e-15);
  EXPECT_EQ(annihilation(l, "b").nonzeros(), 2);
}

TEST(Operators, UnknownModeNamed) {
  auto l = ModeLayout::make({{"b", 3}});
  try {
    annihilation(l, "zz");
    FAIL();
  } catch (const LayoutError& e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(Operators, EmbeddingActsOnOneSlot) {
  auto l = ModeLayout::make({{"x", 2}, {"y", 2}});
  auto b2 = annihilation(l, "y");
  auto psi = fock_state(l, {0, 1});
  DenseVector out = b2.matrix() * psi.amplitudes();
  EXPECT_EQ(out(l->index_of(std::vector<int>{0, 0})), cplx(1.0));
  EXPECT_EQ(b2.nonzeros(), 2);
}

TEST(Operators, CommutatorBelowTruncation) {
  auto l = ModeLayout::make({{"b", 10}});
  auto b = annihilation(l, "b");
  auto c = commutator(b, b.adjoint());
  DenseVector v = c.matrix() * fock_state(l, {4}).amplitudes();
  EXPECT_NEAR((v - fock_state(l, {4}).amplitudes()).norm(), 0.0, 1e-14);
  DenseMatrix cd = c.dense();
  for (int n = 0; n < 9; ++n) EXPECT_NEAR(cd(n, n).real(), 1.0, 1e-14);
}

TEST(Operators, LadderExact) {
  auto l = ModeLayout::make({{"b", 12}});
  auto b = annihilation(l, "b");
  for (int n = 1; n < 12; ++n) {
    DenseVector v = b.matrix() * fock_state(l, {n}).amplitudes();
    EXPECT_NEAR(std::abs(v(n - 1) - std::sqrt(double(n))) / std::sqrt(double(n)), 0.0,
                1e-15);
  }
}

TEST(Operators, DisjointModesCommute) {
  auto l = ModeLayout::make({{"a", 4}, {"b", 3}, {"c", 3}});
  auto a = annihilation(l, "a"), b = creation(l, "b"), c = number(l, "c");
  EXPECT_EQ(commutator(a, b).matrix().norm(), 0.0);
  EXPECT_EQ(commutator(a, c).matrix().norm(), 0.0);
  EXPECT_EQ(commutator(b, c).matrix().norm(), 0.0);
}

TEST(States, FockAndExpectation) {
  auto l = ModeLayout::make({{"a", 3}, {"b", 4}});
  EXPECT_NEAR(vacuum(l).amplitudes().norm(), 1.0, 1e-15);
  EXPECT_THROW(fock_state(l, {0, 4}), TruncationError);
  auto psi = fock_state(l, {0, 2});
  EXPECT_NEAR(expectation(number(l, "b"), psi).real(), 2.0, 1e-15);
  EXPECT_EQ(expectation(annihilation(l, "a"), vacuum(l)), cplx(0.0));
  DenseVector v = annihilation(l, "b").matrix() * psi.amplitudes();
  EXPECT_NEAR(std::abs(v(l->index_of(std::vector<int>{0, 1})) - std::sqrt(2.0)), 0.0, 1e-15);
  auto other = ModeLayout::make({{"a", 3}, {"b", 5}});
  EXPECT_THROW(expectation(number(other, "b"), psi), LayoutError);
}

TEST(States, TestSuperposition) {
  auto l = ModeLayout::make({{"a", 2}, {"b", 5}});
  std::vector<cplx> c;
  for (int k = 0; k < 4; ++k) c.push_back(0.5 * std::exp(kI * (kPi * k / 3.0)));
  auto psi = superposition_state(l, "b", c);
  EXPECT_NEAR(std::norm(psi[0]), 0.25, 1e-15);
  std::vector<cplx> one{1.0};
  EXPECT_NEAR(std::abs(superposition_state(l, "b", one)[0]), 1.0, 1e-15);
  std::vector<cplx> bad{1.0, 1.0};
  try {
    superposition_state(l, "b", bad);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("2.0"), std::string::npos);
  }
}

TEST(States, SqueezedVacuum) {
  auto vac = squeezed_vacuum(6, 0.0, 0.0);
  EXPECT_NEAR(std::abs(vac[0]), 1.0, 1e-15);

  const double N = 0.4348;
  const double m = std::sqrt(N * (N + 1));
  EXPECT_THROW(squeezed_vacuum(20, N, m), TruncationError);
  auto relaxed = squeezed_vacuum(20, N, m, "b", 2e-6);
  EXPECT_NEAR(expectation(number(relaxed.layout(), "b"), relaxed).real(), N, 1e-4);
  auto sq = squeezed_vacuum(22, N, m);
  for (int k = 1; k < 22; k += 2) EXPECT_EQ(sq[k], cplx(0.0));
  auto l = sq.layout();
  EXPECT_NEAR(expectation(number(l, "b"), sq).real(), N, 1e-4);
  auto b = annihilation(l, "b");
  EXPECT_NEAR(std::abs(expectation(b * b, sq) - cplx(m)), 0.0, 1e-4);
  EXPECT_NEAR(std::norm(sq[0]), 1.0 / std::sqrt(N + 1.0), 1e-6);

  EXPECT_THROW(squeezed_vacuum(20, N, m * 1.01), DomainError);
  EXPECT_THROW(squeezed_vacuum(6, 2.0, std::sqrt(6.0)), TruncationError);
}

TEST(States, SqueezedPhaseFollowsM) {
  const double N = 0.3;
  const cplx M = std::sqrt(N * (N + 1)) * std::exp(kI * 0.7);
  auto sq = squeezed_vacuum(24, N, M);
  auto b = annihilation(sq.layout(), "b");
  EXPECT_NEAR(std::abs(expectation(b * b, sq) - M), 0.0, 1e-6);
}

TEST(DensityMatrices, Validation) {
  auto l = ModeLayout::make({{"a", 3}});
  auto rho = DensityMatrix::pure(fock_state(l, {1}));
  EXPECT_NO_THROW(rho.validate());
  DenseMatrix bad = rho.matrix();
  bad(0, 0) = -0.1;
  bad(1, 1) = 1.1;
  EXPECT_THROW(DensityMatrix(l, bad).validate(), DomainError);
}

TEST(PartialTrace, BellMarginal) {
  auto l = ModeLayout::make({{"x", 2}, {"y", 2}});
  DenseVector v = DenseVector::Zero(4);
  v(0) = v(3) = 1.0 / std::sqrt(2.0);
  auto rho = DensityMatrix::pure(StateVector(l, v));
  auto r = partial_trace(rho, {"x"});
  EXPECT_NEAR(std::abs(r(0, 0) - 0.5), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(r(1, 1) - 0.5), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(r(0, 1)), 0.0, 1e-15);
  EXPECT_THROW(partial_trace(rho, std::span<const std::string>{}), LayoutError);
}

TEST(PartialTrace, InvertsTensorOnRandomProducts) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 5; ++rep) {
    auto la = ModeLayout::make({{"a", 3}});
    auto lb = ModeLayout::make({{"b", 4}, {"c", 2}});
    DensityMatrix ra(la, random_density(3, rng)), rb(lb, random_density(8, rng));
    auto joint = tensor(ra, rb);
    EXPECT_NEAR(std::abs(joint.trace() - 1.0), 0.0, 1e-12);
    auto back_a = partial_trace(joint, {"a"});
    auto back_b = partial_trace(joint, {"b", "c"});
    EXPECT_LT((back_a.matrix() - ra.matrix()).norm(), 1e-13);
    EXPECT_LT((back_b.matrix() - rb.matrix()).norm(), 1e-13);
  }
}

TEST(PartialTrace, CappedLayoutPreservesTrace) {
  std::mt19937_64 rng(3);
  auto l = ModeLayout::make({{"a", 4}, {"b", 5}, {"c", 4}}, 5);
  DensityMatrix rho(l, random_density(l->total_dim(), rng));
  auto r = partial_trace(rho, {"c", "a"});
  EXPECT_NEAR(std::abs(r.trace() - 1.0), 0.0, 1e-12);
  EXPECT_EQ(r.layout()->modes()[0].name, "a");
  std::vector<std::string> keep{"b"};
  auto rb = partial_trace(rho, keep);
  EXPECT_EQ(rb.layout()->total_dim(), 5);
  EXPECT_NEAR(std::abs(rb.trace() - 1.0), 0.0, 1e-12);
}

TEST(Truncation, ReportsTopLevels) {
  auto l = ModeLayout::make({{"a", 4}, {"b", 3}});
  auto rho = DensityMatrix::pure(fock_state(l, {3, 0}));
  auto rep = truncation_report(rho);
  EXPECT_NEAR(rep.per_mode[0].second, 1.0, 1e-15);
  EXPECT_NEAR(rep.per_mode[1].second, 0.0, 1e-15);
}
