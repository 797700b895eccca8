#pragma once

// Cavity-QED parameter estimates for a trapped ion inside a
// high-finesse Fabry-Perot cavity. SI units; frequencies are angular.

#include <cmath>
#include <vector>

#include "json.hpp"
#include "qst/errors.hpp"

namespace qst::lab {

inline constexpr double kC = 299792458.0;
inline constexpr double kHbar = 6.62607015e-34 / (2.0 * 3.14159265358979323846);
inline constexpr double kAmu = 1.66053906660e-27;
inline constexpr double kTwoPi = 2.0 * 3.14159265358979323846;

struct LabParams {
  double wavelength = 0;           ///< m
  double gamma = 0;                ///< atomic linewidth, rad/s
  double mirror_separation = 0;    ///< m
  double finesse = 0;
  double mirror_radius = 0;        ///< m
  double mass = 0;                 ///< kg
  double trap_frequency = 0;       ///< rad/s
  std::vector<double> omega_over_kappa;  ///< effective couplings Ω/κ to report

  void validate() const {
    auto pos = [](double v, const char* what) {
      if (!(v > 0.0)) throw DomainError(std::string(what) + " must be positive");
    };
    pos(wavelength, "wavelength");
    pos(gamma, "gamma");
    pos(mirror_separation, "mirror separation");
    pos(finesse, "finesse");
    pos(mirror_radius, "mirror radius");
    pos(mass, "mass");
    pos(trap_frequency, "trap frequency");
    for (double w : omega_over_kappa) pos(w, "Omega/kappa");
    if (!(mirror_separation < 2.0 * mirror_radius))
      throw DomainError("unstable cavity: l >= 2R");
  }
};

/// ⁹Be⁺ on the 313 nm line in a 250 μm, F = 3e5 cavity with R = 5 cm.
inline LabParams beryllium_preset() {
  LabParams p;
  p.wavelength = 313e-9;
  p.gamma = kTwoPi * 19.4e6;
  p.mirror_separation = 250e-6;
  p.finesse = 3e5;
  p.mirror_radius = 0.05;
  p.mass = 9.012182 * kAmu;
  p.trap_frequency = kTwoPi * 22e6;
  p.omega_over_kappa = {std::sqrt(0.02), std::sqrt(0.2)};
  return p;
}

/// Symmetric-cavity waist: w0² = (λ/2π) sqrt(l(2R - l)).
inline double mode_waist(double R, double l, double wavelength) {
  if (!(l > 0.0 && l < 2.0 * R)) throw DomainError("unstable cavity geometry (need 0 < l < 2R)");
  return std::sqrt(wavelength / kTwoPi * std::sqrt(l * (2.0 * R - l)));
}

/// V_m = (π/4) w0² l.
inline double mode_volume(double w0, double l) { return 0.25 * 3.14159265358979323846 * w0 * w0 * l; }

/// g0 = sqrt(3 c λ² γ / (8π V_m)).
inline double dipole_coupling(double wavelength, double gamma, double w0, double l) {
  return std::sqrt(3.0 * kC * wavelength * wavelength * gamma /
                   (8.0 * 3.14159265358979323846 * mode_volume(w0, l)));
}

/// κ = π c / (2 F l).
inline double cavity_kappa(double l, double finesse) {
  return 3.14159265358979323846 * kC / (2.0 * finesse * l);
}

/// η = k sqrt(ħ / (2 m ν)).
inline double lamb_dicke(double wavelength, double mass, double trap_frequency) {
  return kTwoPi / wavelength * std::sqrt(kHbar / (2.0 * mass * trap_frequency));
}

struct StrongCouplingMetrics {
  double w0 = 0, g0 = 0, kappa = 0;
  double coupling_ratio = 0;    ///< 5 g0² / (2 κ γ)
  double geometric_ratio = 0;   ///< 15 λ² F / (2 π³ w0²)
  double eta = 0;
  double nu_over_kappa = 0;
  std::vector<double> transfer_rates;  ///< Γ = Ω²/κ, rad/s, one per Ω/κ
};

inline StrongCouplingMetrics strong_coupling_metrics(const LabParams& p) {
  p.validate();
  StrongCouplingMetrics m;
  const double pi = 3.14159265358979323846;
  m.w0 = mode_waist(p.mirror_radius, p.mirror_separation, p.wavelength);
  m.g0 = dipole_coupling(p.wavelength, p.gamma, m.w0, p.mirror_separation);
  m.kappa = cavity_kappa(p.mirror_separation, p.finesse);
  m.coupling_ratio = 5.0 * m.g0 * m.g0 / (2.0 * m.kappa * p.gamma);
  m.geometric_ratio =
      15.0 * p.wavelength * p.wavelength * p.finesse / (2.0 * pi * pi * pi * m.w0 * m.w0);
  m.eta = lamb_dicke(p.wavelength, p.mass, p.trap_frequency);
  m.nu_over_kappa = p.trap_frequency / m.kappa;
  for (double r : p.omega_over_kappa) m.transfer_rates.push_back(r * r * m.kappa);
  return m;
}

inline nlohmann::json feasibility_report(const LabParams& p) {
  const auto m = strong_coupling_metrics(p);
  nlohmann::json rates = nlohmann::json::array();
  for (std::size_t i = 0; i < m.transfer_rates.size(); ++i)
    rates.push_back({{"omega_over_kappa", p.omega_over_kappa[i]},
                     {"gamma_rad_per_s", m.transfer_rates[i]},
                     {"gamma_over_2pi_hz", m.transfer_rates[i] / kTwoPi}});
  return {
      {"waist_m", m.w0},
      {"mode_volume_m3", mode_volume(m.w0, p.mirror_separation)},
      {"g0_rad_per_s", m.g0},
      {"g0_over_2pi_hz", m.g0 / kTwoPi},
      {"kappa_rad_per_s", m.kappa},
      {"kappa_over_2pi_hz", m.kappa / kTwoPi},
      {"gamma_over_2pi_hz", p.gamma / kTwoPi},
      {"coupling_ratio", m.coupling_ratio},
      {"geometric_ratio", m.geometric_ratio},
      {"lamb_dicke", m.eta},
      {"nu_over_kappa", m.nu_over_kappa},
      {"transfer_rates", rates},
  };
}

}  // namespace qst::lab
