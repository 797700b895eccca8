#pragma once

// Quantum trajectories for the reduced two-mode cascaded model of the
// motional modes b1 (sender) and b2 (receiver), with the cavities
// adiabatically eliminated.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <thread>
#include <vector>

#include "qst/fock.hpp"
#include "qst/model.hpp"
#include "qst/pulses.hpp"

namespace qst {

/// Layout {b1: dim1, b2: dim2}.
inline LayoutPtr motional_layout(int dim1, int dim2) {
  return ModeLayout::make({{"b1", dim1}, {"b2", dim2}});
}

inline void require_equal_phases(const PulsePair& pair) {
  if (pair.phi1 != pair.phi2)
    throw DomainError("trajectory engine supports only phi1 == phi2");
}

/// H_eff = -iΓ₁ b1†b1 - iΓ₂ b2†b2 + 2i sqrt(Γ₁Γ₂) b2†b1, with dψ/dt = -i H_eff ψ.
inline SparseOperator effective_hamiltonian(const LayoutPtr& layout, const PulsePair& pair,
                                            double t) {
  require_equal_phases(pair);
  const double g1 = pair.gamma1(t), g2 = pair.gamma2(t);
  auto b1 = annihilation(layout, "b1"), b2 = annihilation(layout, "b2");
  return cplx(0, -g1) * number(layout, "b1") + cplx(0, -g2) * number(layout, "b2") +
         cplx(0, 2.0 * std::sqrt(g1 * g2)) * (b2.adjoint() * b1);
}

/// C = sqrt(Γ₁) b1 - sqrt(Γ₂) b2.
inline SparseOperator collapse_operator(const LayoutPtr& layout, const PulsePair& pair,
                                        double t) {
  return std::sqrt(pair.gamma1(t)) * annihilation(layout, "b1") -
         std::sqrt(pair.gamma2(t)) * annihilation(layout, "b2");
}

/// Reduced master equation for the two motional modes: Γ₁ D[b1] + Γ₂ D[b2]
/// plus the cascade from b1 to b2 carrying the relative laser phase.
inline LiouvillianModel reduced_transfer_model(const LayoutPtr& layout,
                                               const PulsePair& pair) {
  LiouvillianModel m(layout);
  auto b1 = annihilation(layout, "b1"), b2 = annihilation(layout, "b2");
  RealSignal g1 = [pair](double t) { return pair.gamma1(t); };
  RealSignal g2 = [pair](double t) { return pair.gamma2(t); };
  m.add(Dissipator{b1, g1});
  m.add(Dissipator{b2, g2});
  const cplx phase = -std::exp(-kI * (pair.phi1 - pair.phi2));
  m.add(CascadeLink{phase * b1, b2, g1, g2});
  return m;
}

namespace detail {

/// Precomputed pieces of the no-jump generator -i H_eff.
class NoJumpGenerator {
 public:
  NoJumpGenerator(const LayoutPtr& layout, const PulsePair& pair)
      : pair_(pair),
        n1_(number(layout, "b1").matrix()),
        n2_(number(layout, "b2").matrix()),
        hop_((creation(layout, "b2") * annihilation(layout, "b1")).matrix()),
        b1_(annihilation(layout, "b1").matrix()),
        b2_(annihilation(layout, "b2").matrix()) {
    require_equal_phases(pair);
  }

  void apply(double t, const DenseVector& psi, DenseVector& out) const {
    const double g1 = pair_.gamma1(t), g2 = pair_.gamma2(t);
    out.noalias() = -g1 * (n1_ * psi);
    out.noalias() -= g2 * (n2_ * psi);
    out.noalias() += (2.0 * std::sqrt(g1 * g2)) * (hop_ * psi);
  }

  DenseVector collapse(double t, const DenseVector& psi) const {
    DenseVector out = std::sqrt(pair_.gamma1(t)) * (b1_ * psi);
    out.noalias() -= std::sqrt(pair_.gamma2(t)) * (b2_ * psi);
    return out;
  }

  void step(double t, double h, DenseVector& psi) {
    apply(t, psi, k1_);
    tmp_ = psi + (0.5 * h) * k1_;
    apply(t + 0.5 * h, tmp_, k2_);
    tmp_ = psi + (0.5 * h) * k2_;
    apply(t + 0.5 * h, tmp_, k3_);
    tmp_ = psi + h * k3_;
    apply(t + h, tmp_, k4_);
    psi += (h / 6.0) * (k1_ + 2.0 * k2_ + 2.0 * k3_ + k4_);
  }

  double max_rate(const std::vector<double>& grid) const {
    double r = 0.0;
    for (double t : grid) r = std::max({r, pair_.gamma1(t), pair_.gamma2(t)});
    return r;
  }

 private:
  PulsePair pair_;
  SparseMatrix n1_, n2_, hop_, b1_, b2_;
  DenseVector k1_, k2_, k3_, k4_, tmp_;
};

inline int substeps_for(double span, double max_rate, double max_step) {
  double h = max_step;
  if (max_rate > 0.0) h = std::min(h, 0.01 / max_rate);
  return std::max(1, static_cast<int>(std::ceil(span / h - 1e-9)));
}

}  // namespace detail

/// Σ_n c_n Σ_m α_m^{(n)} |n-m, m> given the accumulated area ∫Γ₁ up to t.
inline StateVector dark_state_vector(const LayoutPtr& layout, std::span<const cplx> c,
                                     const PulsePair& pair, double t, double area) {
  const double g1 = pair.gamma1(t), g2 = pair.gamma2(t);
  if (!(g2 > 0.0)) throw DomainError("dark state undefined where Gamma2 = 0");
  const double r = std::sqrt(g1 / g2);
  DenseVector v = DenseVector::Zero(layout->total_dim());
  for (std::size_t n = 0; n < c.size(); ++n) {
    const double a0 = std::exp(-static_cast<double>(n) * area);
    double binom = 1.0, rp = 1.0;
    for (std::size_t m = 0; m <= n; ++m) {
      std::vector<int> occ{static_cast<int>(n - m), static_cast<int>(m)};
      const int idx = layout->index_of(occ);
      if (idx < 0) throw TruncationError("dark state exceeds the layout");
      v(idx) += c[n] * rp * std::sqrt(binom) * a0;
      binom = binom * static_cast<double>(n - m) / static_cast<double>(m + 1);
      rp *= r;
    }
  }
  return StateVector::normalized(layout, std::move(v));
}

struct NoJumpResult {
  std::vector<double> t;
  std::vector<double> survival;  ///< ||ψ(t)||² of the unnormalized state
  std::vector<StateVector> states;  ///< normalized ψ(t) at every grid point
  StateVector final_state;
};

/// Propagates ψ under -i H_eff alone over the grid (RK4, substeps keep
/// h <= 0.01/max Γ and h <= max_step).
inline NoJumpResult propagate_nojump(const StateVector& psi0, const PulsePair& pair,
                                     const std::vector<double>& grid,
                                     bool keep_states = true, double max_step = 0.1) {
  if (grid.size() < 2) throw DomainError("grid too small");
  const auto& layout = psi0.layout();
  detail::NoJumpGenerator gen(layout, pair);
  const double rate = gen.max_rate(grid);
  NoJumpResult r;
  DenseVector psi = psi0.amplitudes();
  auto record = [&](double t) {
    const double n2 = psi.squaredNorm();
    if (!(n2 > 1e-12))
      throw IntegrationError("no-jump state fully decayed at t = " + std::to_string(t));
    r.t.push_back(t);
    r.survival.push_back(n2);
    if (keep_states) r.states.emplace_back(layout, DenseVector(psi / std::sqrt(n2)));
  };
  record(grid.front());
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double span = grid[i] - grid[i - 1];
    const int sub = detail::substeps_for(span, rate, max_step);
    const double h = span / sub;
    for (int s = 0; s < sub; ++s) gen.step(grid[i - 1] + s * h, h, psi);
    record(grid[i]);
  }
  r.final_state = StateVector(layout, DenseVector(psi / psi.norm()));
  return r;
}

struct TrajectoryRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<double> t;
  std::vector<double> norms;  ///< ||ψ||² of the unnormalized state at grid points
  std::vector<double> jump_times;
  StateVector final_state;
};

struct EnsembleResult {
  DensityMatrix rho;
  std::vector<TrajectoryRecord> records;
  std::size_t total_jumps = 0;
};

namespace detail {

inline std::mt19937_64 trajectory_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32)};
  return std::mt19937_64(seq);
}

inline TrajectoryRecord run_trajectory(const StateVector& psi0, const PulsePair& pair,
                                       const std::vector<double>& grid, std::uint64_t seed,
                                       std::size_t index, double max_step) {
  const auto& layout = psi0.layout();
  NoJumpGenerator gen(layout, pair);
  const double rate = gen.max_rate(grid);
  auto rng = trajectory_rng(seed, index);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  TrajectoryRecord rec;
  rec.index = index;
  rec.seed = seed;
  DenseVector psi = psi0.amplitudes();
  double r = uni(rng);
  rec.t.push_back(grid.front());
  rec.norms.push_back(psi.squaredNorm());

  DenseVector saved;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double span = grid[i] - grid[i - 1];
    const int sub = substeps_for(span, rate, max_step);
    const double h = span / sub;
    for (int s = 0; s < sub; ++s) {
      double t = grid[i - 1] + s * h;
      double left = h;
      while (left > 0.0) {
        saved = psi;
        gen.step(t, left, psi);
        if (psi.squaredNorm() > r) break;
        // Bisect the partial step length at which ||ψ||² reaches r.
        double lo = 0.0, hi = left;
        DenseVector trial;
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          trial = saved;
          gen.step(t, mid, trial);
          const double n2 = trial.squaredNorm();
          if (std::abs(n2 - r) < 1e-10 || hi - lo < 1e-14 * std::max(1.0, std::abs(t))) {
            lo = hi = mid;
            break;
          }
          (n2 > r ? lo : hi) = mid;
        }
        const double tau = 0.5 * (lo + hi);
        psi = saved;
        gen.step(t, tau, psi);
        const double tj = t + tau;
        DenseVector jumped = gen.collapse(tj, psi);
        const double jn = jumped.norm();
        if (!(jn > 0.0))
          throw IntegrationError("collapse annihilated the state at t = " + std::to_string(tj));
        psi = jumped / jn;
        rec.jump_times.push_back(tj);
        r = uni(rng);
        t = tj;
        left -= tau;
        if (left <= 1e-15 * std::max(1.0, std::abs(t))) left = 0.0;
      }
    }
    rec.t.push_back(grid[i]);
    rec.norms.push_back(psi.squaredNorm());
  }
  rec.final_state = StateVector(layout, DenseVector(psi / psi.norm()));
  return rec;
}

}  // namespace detail

/// Monte-Carlo wave-function ensemble. Trajectory k draws from a generator
/// seeded by (seed, k), so results do not depend on the thread count.
inline EnsembleResult mcwf_ensemble(const StateVector& psi0, const PulsePair& pair,
                                    std::size_t n_traj, std::uint64_t seed,
                                    const std::vector<double>& grid, unsigned threads = 1,
                                    double max_step = 0.1) {
  if (n_traj < 1) throw DomainError("n_traj must be >= 1");
  if (grid.size() < 2) throw DomainError("grid too small");
  require_equal_phases(pair);
  EnsembleResult res;
  res.records.resize(n_traj);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_traj)));
  auto work = [&](unsigned w) {
    for (std::size_t k = w; k < n_traj; k += threads)
      res.records[k] = detail::run_trajectory(psi0, pair, grid, seed, k, max_step);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  const int n = psi0.layout()->total_dim();
  DenseMatrix rho = DenseMatrix::Zero(n, n);
  for (const auto& rec : res.records) {
    const auto& v = rec.final_state.amplitudes();
    rho.noalias() += v * v.adjoint();
    res.total_jumps += rec.jump_times.size();
  }
  rho /= static_cast<double>(n_traj);
  res.rho = DensityMatrix(psi0.layout(), std::move(rho));
  return res;
}

/// Jump table with columns trajectory, t.
inline void write_jump_csv(std::ostream& os, const std::vector<TrajectoryRecord>& records) {
  std::vector<std::vector<double>> rows;
  for (const auto& rec : records)
    for (double t : rec.jump_times) rows.push_back({static_cast<double>(rec.index), t});
  write_csv(os, {"trajectory", "t"}, rows);
}

}  // namespace qst
