#pragma once

// Laser pulse profiles for two-site transfer: analytic overdamped pulses,
// the integral dark-state condition and its inversion, the underdamped
// closed form, and the dark-state amplitudes they imply.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "qst/csv.hpp"
#include "qst/errors.hpp"

namespace qst {

/// Piecewise-linear interpolation of sampled data, clamped at the ends.
class SampledSignal {
 public:
  SampledSignal(std::vector<double> t, std::vector<double> v)
      : t_(std::make_shared<const std::vector<double>>(std::move(t))),
        v_(std::make_shared<const std::vector<double>>(std::move(v))) {
    if (t_->size() != v_->size() || t_->size() < 2)
      throw DomainError("sampled signal needs >= 2 matching samples");
    if (!std::is_sorted(t_->begin(), t_->end()))
      throw DomainError("sampled signal needs increasing times");
  }
  double operator()(double t) const {
    const auto& ts = *t_;
    const auto& vs = *v_;
    if (t <= ts.front()) return vs.front();
    if (t >= ts.back()) return vs.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - ts.begin());
    const double w = (t - ts[j - 1]) / (ts[j] - ts[j - 1]);
    return (1.0 - w) * vs[j - 1] + w * vs[j];
  }

 private:
  std::shared_ptr<const std::vector<double>> t_, v_;
};

/// Coupling profiles Ω₁(t), Ω₂(t) of the two sites (units of κ).
struct PulsePair {
  std::function<double(double)> omega1;
  std::function<double(double)> omega2;
  double kappa = 1.0;
  double phi1 = 0.0;
  double phi2 = 0.0;
  double t_min = 0.0;
  double t_max = 0.0;
  /// ∫ Γ₁ from -∞ to t_min, for pulses whose onset precedes the window.
  double prior_area = 0.0;
  bool symmetric = false;

  double gamma1(double t) const {
    const double o = omega1(t);
    return o * o / kappa;
  }
  double gamma2(double t) const {
    const double o = omega2(t);
    return o * o / kappa;
  }

  std::vector<double> grid(std::size_t n) const { return linspace(t_min, t_max, n); }
};

/// Γ₁(t) = Γ e^{Γt}/(e^{Γt}+e^{-Γt}), Γ₂(t) = Γ₁(-t), Ω = sqrt(κ Γ).
/// Default window [-6/Γ, 6/Γ].
inline PulsePair overdamped_pulse(double gamma, double kappa, double t_min = NAN,
                                  double t_max = NAN) {
  if (!(gamma > 0.0) || !(kappa > 0.0))
    throw DomainError("overdamped pulse needs Gamma > 0 and kappa > 0");
  if (std::isnan(t_min)) t_min = -6.0 / gamma;
  if (std::isnan(t_max)) t_max = 6.0 / gamma;
  if (!(t_max > t_min)) throw DomainError("empty pulse window");
  auto g1 = [gamma](double t) { return gamma / (1.0 + std::exp(-2.0 * gamma * t)); };
  PulsePair p;
  p.kappa = kappa;
  p.omega1 = [g1, kappa](double t) { return std::sqrt(kappa * g1(t)); };
  p.omega2 = [g1, kappa](double t) { return std::sqrt(kappa * g1(-t)); };
  p.t_min = t_min;
  p.t_max = t_max;
  p.prior_area = 0.5 * std::log1p(std::exp(2.0 * gamma * t_min));
  p.symmetric = true;
  return p;
}

struct DarkConditionResidual {
  /// max |Γ₁/Γ₂ - (exp{2∫Γ₁} - 1)|
  double absolute = 0.0;
  /// max |(1 + Γ₁/Γ₂) exp{-2∫Γ₁} - 1|
  double relative = 0.0;
  double t_absolute = 0.0;
  double t_relative = 0.0;
};

/// Residual of the dark-state pulse condition Γ₁/Γ₂ = exp{2∫Γ₁} - 1 on an
/// evenly spaced grid over the pair's window.
inline DarkConditionResidual dark_condition_residual(const PulsePair& pair,
                                                     std::size_t n = 20001) {
  if (n < 3) throw DomainError("grid too small");
  const auto t = pair.grid(n);
  std::vector<double> g1(n), g2(n);
  for (std::size_t i = 0; i < n; ++i) {
    g1[i] = pair.gamma1(t[i]);
    g2[i] = pair.gamma2(t[i]);
  }
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (!(g2[i] > 0.0))
      throw DomainError("Gamma2 vanishes at interior time t = " + std::to_string(t[i]));
  const auto area = cumulative_trapezoid(t, g1, pair.prior_area);
  DarkConditionResidual r;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(g2[i] > 0.0)) continue;
    const double ratio = g1[i] / g2[i];
    const double abs_res = std::abs(ratio - std::expm1(2.0 * area[i]));
    const double rel_res = std::abs((1.0 + ratio) * std::exp(-2.0 * area[i]) - 1.0);
    if (abs_res > r.absolute) {
      r.absolute = abs_res;
      r.t_absolute = t[i];
    }
    if (rel_res > r.relative) {
      r.relative = rel_res;
      r.t_relative = t[i];
    }
  }
  return r;
}

struct Gamma2Solution {
  std::vector<double> t;
  std::vector<double> gamma2;
  std::vector<bool> capped;
  std::size_t capped_count = 0;
  bool fully_capped = false;
  double cap = 0.0;
};

/// Γ₂(t) = Γ₁(t)/(exp{2∫Γ₁} - 1) pointwise, saturating at `cap` where the
/// denominator is below 1e-12 or the quotient exceeds the cap. A
/// nonpositive cap selects 10³ times the peak of Γ₁ (or 1 when Γ₁ ≡ 0).
inline Gamma2Solution solve_gamma2(const std::vector<double>& t,
                                   const std::vector<double>& gamma1, double cap = 0.0,
                                   double prior_area = 0.0) {
  if (t.size() != gamma1.size() || t.size() < 2)
    throw DomainError("solve_gamma2 needs matching grids of length >= 2");
  for (std::size_t i = 0; i < t.size(); ++i)
    if (gamma1[i] < 0.0)
      throw DomainError("Gamma1 negative at t = " + std::to_string(t[i]));
  const double peak = *std::max_element(gamma1.begin(), gamma1.end());
  if (!(cap > 0.0)) cap = peak > 0.0 ? 1e3 * peak : 1.0;
  const auto area = cumulative_trapezoid(t, gamma1, prior_area);
  Gamma2Solution s;
  s.t = t;
  s.cap = cap;
  s.gamma2.resize(t.size());
  s.capped.resize(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double denom = std::expm1(2.0 * area[i]);
    double g = denom < 1e-12 ? cap : gamma1[i] / denom;
    const bool hit = denom < 1e-12 || g > cap;
    if (hit) g = cap;
    s.gamma2[i] = g;
    s.capped[i] = hit;
    s.capped_count += hit ? 1 : 0;
  }
  s.fully_capped = s.capped_count == t.size();
  return s;
}

namespace detail {

// (f, h)(s) = exp(A s)(f0, h0) with A = [[0, Ω], [-Ω, -κ]], in real form.
inline std::pair<double, double> underdamped_fh(double omega, double kappa, double s) {
  const double denom = kappa * kappa + omega * omega;
  const double f0 = std::sqrt(0.5 * kappa * kappa / denom);
  const double h0 = -std::sqrt(0.5 * omega * omega / denom);
  const double disc = omega * omega - 0.25 * kappa * kappa;
  const double q = std::sqrt(std::abs(disc));
  double c, sn;
  if (q * s < 1e-8) {
    c = 1.0;
    sn = s;
  } else if (disc > 0.0) {
    c = std::cos(q * s);
    sn = std::sin(q * s) / q;
  } else {
    c = std::cosh(q * s);
    sn = std::sinh(q * s) / q;
  }
  const double decay = std::exp(-0.5 * kappa * s);
  // exp(A s) = e^{-κs/2} [C I + S (A + κ/2 I)]
  const double f = decay * (c * f0 + sn * (0.5 * kappa * f0 + omega * h0));
  const double h = decay * (c * h0 + sn * (-omega * f0 - 0.5 * kappa * h0));
  return {f, h};
}

}  // namespace detail

/// Ω₁ of the underdamped symmetric pulse at time t: Ω for t >= 0,
/// -(Ω f(-t) + 2κ h(-t))/sqrt(1 - f² - 2h²) for t < 0.
inline double underdamped_omega1(double omega, double kappa, double t) {
  if (t >= 0.0) return omega;
  const auto [f, h] = detail::underdamped_fh(omega, kappa, -t);
  const double d = 1.0 - f * f - 2.0 * h * h;
  if (!(d > 0.0))
    throw DomainError("underdamped pulse radicand 1 - f^2 - 2h^2 = " + std::to_string(d) +
                      " at t = " + std::to_string(t));
  return -(omega * f + 2.0 * kappa * h) / std::sqrt(d);
}

/// Largest s such that Ω₁(t) > 0 on (-s, 0]; +inf if no sign change occurs
/// before `horizon`.
inline double underdamped_support(double omega, double kappa, double horizon = 50.0,
                                  std::size_t samples = 200001) {
  double prev_s = 0.0;
  for (std::size_t i = 1; i < samples; ++i) {
    const double s = horizon * static_cast<double>(i) / static_cast<double>(samples - 1);
    if (underdamped_omega1(omega, kappa, -s) <= 0.0) {
      double lo = prev_s, hi = s;
      for (int k = 0; k < 200 && hi - lo > 1e-14 * hi; ++k) {
        const double mid = 0.5 * (lo + hi);
        (underdamped_omega1(omega, kappa, -mid) > 0.0 ? lo : hi) = mid;
      }
      return lo;
    }
    prev_s = s;
  }
  return std::numeric_limits<double>::infinity();
}

/// Underdamped symmetric pulse pair (Ω₂(t) = Ω₁(-t)). Default window
/// [-10/κ, 10/κ]. The profile is checked on `check_points` samples of the
/// window; a vanishing radicand or a sign change raises DomainError.
inline PulsePair underdamped_pulse(double omega, double kappa, double t_min = NAN,
                                   double t_max = NAN, std::size_t check_points = 20001) {
  if (!(omega > 0.0) || !(kappa > 0.0))
    throw DomainError("underdamped pulse needs Omega > 0 and kappa > 0");
  if (std::isnan(t_min)) t_min = -10.0 / kappa;
  if (std::isnan(t_max)) t_max = 10.0 / kappa;
  if (!(t_min <= 0.0 && t_max >= 0.0)) throw DomainError("window must include t = 0");
  const double reach = std::max(-t_min, t_max);
  for (std::size_t i = 0; i < check_points; ++i) {
    const double t = -reach * static_cast<double>(i) / static_cast<double>(check_points - 1);
    const double v = underdamped_omega1(omega, kappa, t);
    if (v < 0.0)
      throw DomainError("underdamped pulse changes sign at t = " + std::to_string(t) +
                        " (Omega1 = " + std::to_string(v) + ")");
  }
  PulsePair p;
  p.kappa = kappa;
  p.omega1 = [omega, kappa](double t) { return underdamped_omega1(omega, kappa, t); };
  p.omega2 = [omega, kappa](double t) { return underdamped_omega1(omega, kappa, -t); };
  p.t_min = t_min;
  p.t_max = t_max;
  p.symmetric = true;
  return p;
}

/// Amplitudes α_m^{(n)}(t), m = 0..n, of the dark state carrying n quanta.
struct DarkStateCoefficients {
  int n = 0;
  std::vector<double> t;
  std::vector<std::vector<double>> alpha;  ///< alpha[i][m] at t[i]

  double max_normalization_error() const {
    double e = 0.0;
    for (const auto& row : alpha) {
      double s = 0.0;
      for (double a : row) s += a * a;
      e = std::max(e, std::abs(s - 1.0));
    }
    return e;
  }
};

/// α₀ = exp{-n∫Γ₁}, α_m = (Γ₁/Γ₂)^{m/2} sqrt(C(n,m)) α₀, with the integral
/// accumulated by trapezoid on `grid`.
inline DarkStateCoefficients dark_state_coefficients(int n, const PulsePair& pair,
                                                     const std::vector<double>& grid,
                                                     double max_residual = 1e-6) {
  if (n < 0) throw DomainError("negative quantum number");
  if (grid.size() < 2) throw DomainError("grid too small");
  std::vector<double> g1(grid.size()), g2(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    g1[i] = pair.gamma1(grid[i]);
    g2[i] = pair.gamma2(grid[i]);
  }
  const auto area = cumulative_trapezoid(grid, g1, pair.prior_area);
  double worst = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(g2[i] > 0.0)) throw DomainError("Gamma2 vanishes on the grid");
    worst = std::max(worst,
                     std::abs((1.0 + g1[i] / g2[i]) * std::exp(-2.0 * area[i]) - 1.0));
  }
  if (worst > max_residual)
    throw DomainError("pulses violate the dark condition (residual " +
                      std::to_string(worst) + ")");
  DarkStateCoefficients d;
  d.n = n;
  d.t = grid;
  d.alpha.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double a0 = std::exp(-n * area[i]);
    const double r = std::sqrt(g1[i] / g2[i]);
    auto& row = d.alpha[i];
    row.resize(static_cast<std::size_t>(n) + 1);
    double binom = 1.0, rp = 1.0;
    for (int m = 0; m <= n; ++m) {
      row[static_cast<std::size_t>(m)] = rp * std::sqrt(binom) * a0;
      binom = binom * (n - m) / (m + 1.0);
      rp *= r;
    }
  }
  return d;
}

/// Pulse table with columns t, Ω₁, Ω₂, Γ₁, Γ₂.
inline void write_pulse_csv(std::ostream& os, const PulsePair& pair, std::size_t n = 1001) {
  std::vector<std::vector<double>> rows;
  for (double t : pair.grid(n))
    rows.push_back({t, pair.omega1(t), pair.omega2(t), pair.gamma1(t), pair.gamma2(t)});
  write_csv(os, {"t", "omega1", "omega2", "gamma1", "gamma2"}, rows);
}

}  // namespace qst
