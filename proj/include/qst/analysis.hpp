#pragma once

// Observables and diagnostics on simulated states: fidelities, two-time
// correlations via the regression theorem, DPO bath parameters, output
// quadrature noise and density-matrix tables.

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qst/csv.hpp"
#include "qst/fock.hpp"
#include "qst/model.hpp"

namespace qst {

/// <ψ|ρ|ψ>.
inline double fidelity(const DensityMatrix& rho, const StateVector& target) {
  require_same_layout(rho.layout(), target.layout(), "fidelity");
  const auto& v = target.amplitudes();
  return v.dot(rho.matrix() * v).real();
}

/// ½ ||ρ - σ||₁.
inline double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  require_same_layout(a.layout(), b.layout(), "trace_distance");
  return 0.5 * trace_norm_hermitian(a.matrix() - b.matrix());
}

/// Overlap of a single-mode state with the squeezed vacuum of (N, M),
/// using the untruncated expansion coefficients on the levels of ρm.
inline double squeezed_fidelity(const DensityMatrix& rho_m, double N, cplx M) {
  if (rho_m.layout()->mode_count() != 1)
    throw LayoutError("squeezed_fidelity needs a single-mode state, got " +
                      rho_m.layout()->describe());
  const int d = rho_m.layout()->total_dim();
  const auto c = squeezed_vacuum_coefficients(N, M, d);
  DenseVector v(d);
  for (int i = 0; i < d; ++i) v(i) = c[static_cast<std::size_t>(i)];
  return v.dot(rho_m.matrix() * v).real();
}

enum class Ordering {
  /// <A(τ) B(0)>: propagate B ρss.
  AFirst,
  /// <B(0) A(τ)>: propagate ρss B.
  BFirst,
};

struct CorrelationSeries {
  std::vector<double> tau;
  std::vector<cplx> value;
  std::string label;
};

/// Propagates a seed matrix under the model generator and traces it with
/// A on an increasing τ grid starting at 0.
inline CorrelationSeries propagate_correlation(const LiouvillianModel& model,
                                               const SparseOperator& a, DenseMatrix seed,
                                               const std::vector<double>& tau,
                                               double t0 = 0.0, double dt_scale = 1.0) {
  if (tau.empty() || tau.front() < 0.0) throw DomainError("tau grid must start at >= 0");
  for (std::size_t i = 1; i < tau.size(); ++i)
    if (!(tau[i] > tau[i - 1])) throw DomainError("tau grid must increase");
  CorrelationSeries out;
  const double dt_max = default_step(model, t0, t0 + tau.back() + 1.0, dt_scale);
  detail::Rk4 rk(model.generator(), true);
  double now = 0.0;
  for (double target : tau) {
    const double span = target - now;
    if (span > 0.0) {
      const long n = std::max(1L, static_cast<long>(std::ceil(span / dt_max - 1e-9)));
      const double h = span / static_cast<double>(n);
      for (long s = 0; s < n; ++s) rk.step(t0 + now + h * static_cast<double>(s), h, seed);
      detail::check_finite(seed, t0 + target);
      now = target;
    }
    out.tau.push_back(target);
    out.value.push_back(trace_product(a.matrix(), seed));
  }
  return out;
}

/// Two-time correlation in the state ρ_ref via the regression theorem.
inline CorrelationSeries regression_correlation(const LiouvillianModel& model,
                                                const DensityMatrix& rho_ref,
                                                const SparseOperator& a,
                                                const SparseOperator& b,
                                                const std::vector<double>& tau,
                                                Ordering order = Ordering::AFirst) {
  require_same_layout(model.layout(), rho_ref.layout(), "regression_correlation");
  require_same_layout(model.layout(), a.layout(), "regression_correlation");
  require_same_layout(model.layout(), b.layout(), "regression_correlation");
  DenseMatrix seed = order == Ordering::AFirst ? DenseMatrix(b.matrix() * rho_ref.matrix())
                                               : DenseMatrix(rho_ref.matrix() * b.matrix());
  return propagate_correlation(model, a, std::move(seed), tau);
}

/// Same, with ρ_ref the steady state of the model reached from ρ0.
inline CorrelationSeries regression_correlation(const LiouvillianModel& model,
                                                const SparseOperator& a,
                                                const SparseOperator& b,
                                                const std::vector<double>& tau,
                                                Ordering order, const DensityMatrix& rho0,
                                                const SteadyStateOptions& opt = {}) {
  const auto ss = steady_state(model, rho0, opt);
  return regression_correlation(model, ss.rho, a, b, tau, order);
}

struct DpoBath {
  double N = 0.0;
  cplx M = 0.0;
  double max_squeezing = 0.0;
  double v_minus = 1.0;  ///< squeezed quadrature variance
  double v_plus = 1.0;   ///< antisqueezed quadrature variance
};

/// Zero-frequency output of a degenerate parametric oscillator below
/// threshold, x = |ε|/κc: V∓ = 1 ∓ 4x/(1±x)², N = (V₊+V₋)/4 - ½,
/// |M| = (V₊-V₋)/4, arg M = arg ε.
inline DpoBath dpo_effective_bath(cplx epsilon, double kappa_c) {
  if (!(kappa_c > 0.0)) throw DomainError("kappa_c must be positive");
  const double x = std::abs(epsilon) / kappa_c;
  if (!(x < 1.0))
    throw DomainError("parametric oscillator above threshold (eps/kappa_c = " +
                      std::to_string(x) + ")");
  DpoBath r;
  r.v_minus = 1.0 - 4.0 * x / ((1.0 + x) * (1.0 + x));
  r.v_plus = 1.0 + 4.0 * x / ((1.0 - x) * (1.0 - x));
  r.N = 0.25 * (r.v_plus + r.v_minus) - 0.5;
  const double mag = 0.25 * (r.v_plus - r.v_minus);
  r.M = std::abs(epsilon) > 0.0 ? mag * epsilon / std::abs(epsilon) : cplx(mag);
  r.max_squeezing = 4.0 * x / ((1.0 + x) * (1.0 + x));
  return r;
}

struct OutputVariance {
  double variance = 1.0;  ///< zero-frequency spectrum, vacuum = 1
  double added = 0.0;     ///< variance - 1
  double theta = 0.0;
};

/// Zero-frequency spectrum of the output quadrature X_θ for
/// a_out = -a_in - sqrt(2Γ) b with vacuum input, normalized so the vacuum
/// gives 1: S(0) = 1 + 2Γ ∫ <:T δX_b(τ) δX_b(0):> dτ, with the b
/// correlations taken in the reference state through the regression
/// theorem. The τ integral runs to `tau_max` (default 40 / slowest rate).
inline OutputVariance output_field_variance(const LiouvillianModel& model,
                                            const DensityMatrix& rho_ref,
                                            const SparseOperator& b, double gamma,
                                            double theta = 0.0, double tau_max = 0.0,
                                            std::size_t points = 4001) {
  if (gamma < 0.0) throw DomainError("output coupling must be >= 0");
  OutputVariance out;
  out.theta = theta;
  if (gamma == 0.0) return out;
  if (tau_max <= 0.0) tau_max = 40.0 / model.min_damping_rate(0.0, 1.0);
  if (!std::isfinite(tau_max)) throw DomainError("no damping: correlations never decay");
  const auto tau = linspace(0.0, tau_max, points);
  const SparseOperator bd = b.adjoint();
  const cplx mean_b = expectation(b, rho_ref);
  // <b(τ) b(0)> and <b†(0) b(τ)>
  auto bb = regression_correlation(model, rho_ref, b, b, tau, Ordering::AFirst);
  auto bdb = regression_correlation(model, rho_ref, b, bd, tau, Ordering::BFirst);
  const cplx rot = std::exp(-2.0 * kI * theta);
  std::vector<double> c(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) {
    const cplx v = rot * (bb.value[i] - mean_b * mean_b) +
                   (bdb.value[i] - std::conj(mean_b) * mean_b);
    c[i] = 2.0 * v.real();
  }
  const auto integral = cumulative_trapezoid(tau, c);
  out.variance = 1.0 + 2.0 * gamma * 2.0 * integral.back();
  out.added = out.variance - 1.0;
  return out;
}

/// As above, with the reference state taken as the model steady state.
inline OutputVariance output_field_variance(const LiouvillianModel& model,
                                            const SparseOperator& b, double gamma,
                                            double theta, const DensityMatrix& rho0,
                                            const SteadyStateOptions& opt = {}) {
  const auto ss = steady_state(model, rho0, opt);
  return output_field_variance(model, ss.rho, b, gamma, theta);
}

/// <i|ρ|j> for i, j <= n_max (clipped to the dimension).
struct DensityTable {
  int size = 0;
  std::vector<std::vector<double>> re;
  std::vector<std::vector<double>> im;
};

inline DensityTable density_matrix_table(const DensityMatrix& rho, int n_max) {
  const int d = std::min(n_max + 1, rho.layout()->total_dim());
  DensityTable t;
  t.size = d;
  t.re.assign(static_cast<std::size_t>(d), std::vector<double>(static_cast<std::size_t>(d)));
  t.im = t.re;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      t.re[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = rho(i, j).real();
      t.im[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = rho(i, j).imag();
    }
  return t;
}

/// Long-form table with columns i, j, re, im.
inline void write_density_csv(std::ostream& os, const DensityTable& t) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < t.size; ++i)
    for (int j = 0; j < t.size; ++j)
      rows.push_back({double(i), double(j), t.re[std::size_t(i)][std::size_t(j)],
                      t.im[std::size_t(i)][std::size_t(j)]});
  write_csv(os, {"i", "j", "re", "im"}, rows);
}

inline nlohmann::json to_json(const DensityTable& t) {
  return {{"size", t.size}, {"re", t.re}, {"im", t.im}};
}

/// Columns tau, re, im.
inline void write_correlation_csv(std::ostream& os, const CorrelationSeries& c) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < c.tau.size(); ++i)
    rows.push_back({c.tau[i], c.value[i].real(), c.value[i].imag()});
  write_csv(os, {"tau", "re", "im"}, rows);
}

inline nlohmann::json to_json(const CorrelationSeries& c) {
  std::vector<double> re, im;
  for (const auto& v : c.value) {
    re.push_back(v.real());
    im.push_back(v.imag());
  }
  return {{"label", c.label}, {"tau", c.tau}, {"re", re}, {"im", im}};
}

/// Columns t followed by the observer names.
inline void write_series_csv(std::ostream& os, const TimeSeries& ts) {
  std::vector<std::string> header{"t"};
  header.insert(header.end(), ts.names.begin(), ts.names.end());
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < ts.t.size(); ++i) {
    std::vector<double> r{ts.t[i]};
    r.insert(r.end(), ts.values[i].begin(), ts.values[i].end());
    rows.push_back(std::move(r));
  }
  write_csv(os, header, rows);
}

inline nlohmann::json to_json(const TimeSeries& ts) {
  nlohmann::json j;
  j["t"] = ts.t;
  for (std::size_t k = 0; k < ts.names.size(); ++k) {
    std::vector<double> col;
    for (const auto& row : ts.values) col.push_back(row[k]);
    j[ts.names[k]] = col;
  }
  return j;
}

}  // namespace qst
