#pragma once

// Built-in scenarios as YAML documents, loadable with scenario::parse_yaml.

#include <map>
#include <string>
#include <vector>

#include "qst/errors.hpp"

namespace qst::builtins {

namespace detail {

// |ψ> = ½ Σ_{n=0}^{3} e^{iπn/3} |n>
inline const char* kPsi = R"([{abs: 0.5, arg: 0}, {abs: 0.5, arg: pi/3}, {abs: 0.5, arg: 2*pi/3}, {abs: 0.5, arg: pi}])";

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

// Two atom-cavity sites driven by `pulses`; the state on b1 is carried to b2.
inline std::string two_site(const std::string& head, const std::string& pulses) {
  std::string body = R"(
layout:
  modes:
    - {name: a1, dim: 4}
    - {name: b1, dim: 6}
    - {name: a2, dim: 4}
    - {name: b2, dim: 6}
  max_excitations: 6
@PULSES@
model:
  hamiltonian:
    - {op: "a1+ b1", coefficient: {signal: omega1, phase: -phi}}
    - {op: "a2+ b2", coefficient: {signal: omega2, phase: -phi}}
    - {op: "a1+ b1+", coefficient: {signal: omega1, phase: -phi}, oscillation: 2*nu, enabled: nonsecular}
    - {op: "a2+ b2+", coefficient: {signal: omega2, phase: -phi}, oscillation: 2*nu, enabled: nonsecular}
  dissipators:
    - {op: a1, rate: kappa}
    - {op: a2, rate: kappa}
  cascades:
    - {source: a1, target: a2, source_rate: kappa, target_rate: kappa}
initial:
  b1: {amplitudes: @PSI@}
observe:
  fidelity:
    target:
      b2: {amplitudes: @PSI@}
  expectations:
    - {name: n_b1, op: "b1+ b1"}
    - {name: n_b2, op: "b2+ b2"}
    - {name: n_a1, op: "a1+ a1"}
    - {name: n_a2, op: "a2+ a2"}
time:
  samples: 301
)";
  body = replace_all(body, "@PULSES@", pulses);
  body = replace_all(body, "@PSI@", kPsi);
  return head + body;
}

inline std::string fig5() {
  return two_site(R"(name: fig5
task: evolve
params:
  nu: 20
  Omega: 0.141
  kappa: 1
  phi: 0
  nonsecular: 1)",
                  "pulses: {shape: overdamped, Omega: Omega, kappa: kappa}");
}

inline std::string fig5_secular() {
  // Without the counter-rotating terms the excitation number is conserved.
  auto s = two_site(R"(name: fig5-secular
task: evolve
params:
  nu: 20
  Omega: 0.141
  kappa: 1
  phi: 0
  nonsecular: 0)",
                    "pulses: {shape: overdamped, Omega: Omega, kappa: kappa}");
  return replace_all(s, "max_excitations: 6", "max_excitations: 5");
}

inline std::string fig6() {
  return two_site(R"(name: fig6
task: evolve
params:
  nu: 20
  Omega: 0.4
  kappa: 1
  phi: 0
  nonsecular: 1
sweep:
  param: params.Omega
  values: [0.4, 0.5, 0.7])",
                  "pulses: {shape: overdamped, Omega: Omega, kappa: kappa}");
}

inline std::string fig6_underdamped() {
  return two_site(R"(name: fig6-underdamped
task: evolve
params:
  nu: 20
  Omega: 0.7
  kappa: 1
  phi: 0
  nonsecular: 1)",
                  "pulses: {shape: underdamped, Omega: Omega, kappa: kappa, clip_to_support: true}");
}

inline std::string swap_lossless() {
  auto s = std::string(R"(name: swap-lossless
task: evolve
params:
  Omega: 1
  theta: pi/2
  phi: pi/2
layout:
  modes:
    - {name: a, dim: 6}
    - {name: b, dim: 6}
model:
  hamiltonian:
    - {op: "a+ b", coefficient: {scale: Omega, phase: -phi}}
initial:
  b: {amplitudes: @PSI@}
time:
  start: 0
  end: theta/Omega
  samples: 101
observe:
  fidelity:
    target:
      a: {amplitudes: @PSI@, parity: true}
  expectations:
    - {name: n_a, op: "a+ a"}
    - {name: n_b, op: "b+ b"}
)");
  return replace_all(s, "@PSI@", kPsi);
}

inline std::string appendix_correlations() {
  std::string s = R"(name: appendix-correlations
task: correlations
params:
  kappa: 1
layout:
  modes:
    - {name: a1, dim: 3}
    - {name: a2, dim: 3}
model:
  dissipators:
    - {op: a1, rate: kappa}
    - {op: a2, rate: kappa}
  cascades:
    - {source: a1, target: a2, source_rate: kappa, target_rate: kappa}
time:
  start: 0
  end: 1
correlations:
  tau_end: 6/kappa
  points: 601
  pairs:
)";
  const std::vector<std::string> ops{"a1", "a1+", "a2", "a2+"};
  const std::map<std::pair<std::string, std::string>, std::string> known{
      {{"a1", "a1+"}, "exp(-kappa*tau)"},
      {{"a2", "a2+"}, "exp(-kappa*tau)"},
      {{"a2", "a1+"}, "-2*kappa*tau*exp(-kappa*tau)"}};
  for (const auto& a : ops)
    for (const auto& b : ops) {
      const auto it = known.find({a, b});
      s += "    - {a: \"" + a + "\", b: \"" + b + "\", expect: \"" +
           (it == known.end() ? std::string("0") : it->second) + "\"}\n";
    }
  return s;
}

// Steady-state search starts from b in the bath's squeezed state.
inline std::string fig3() {
  return R"(name: fig3
task: steady_state
params:
  kappa_a: 1
  kappa_c: 1
  nu: 10
  Omega: 0.1
  epsilon: 0.3
  theta: 0
  phi: 0
  Gamma: Omega^2/kappa_a
layout:
  modes:
    - {name: c, dim: 8}
    - {name: a, dim: 8}
    - {name: b, dim: 12}
  max_excitations: 11
model:
  hamiltonian:
    - {op: "a+ b", coefficient: {scale: Omega, phase: -phi}}
    - {op: "a+ b+", coefficient: {scale: Omega, phase: -phi}, oscillation: 2*nu}
    - {op: "c c", coefficient: {scale: epsilon/2, phase: pi/2 - theta}}
  dissipators:
    - {op: a, rate: kappa_a}
    - {op: c, rate: kappa_c}
  cascades:
    - {source: c, target: a, source_rate: kappa_c, target_rate: kappa_a}
initial:
  b: {squeezed: {dpo: {epsilon: {abs: epsilon, arg: theta}, kappa_c: kappa_c}}}
time:
  start: 0
  end: 1/Gamma
  samples: 201
steady:
  tol: 1e-6
observe:
  squeezed_fidelity:
    mode: b
    dpo: {epsilon: {abs: epsilon, arg: theta}, kappa_c: kappa_c}
  density_table: {mode: b, n_max: 6}
  expectations:
    - {name: n_b, op: "b+ b"}
    - {name: n_a, op: "a+ a"}
    - {name: n_c, op: "c+ c"}
)";
}

inline std::string squeezed_bath() {
  return R"(name: squeezed-bath
task: steady_state
params:
  Gamma: 1
  epsilon: 0.3
  kappa_c: 1
layout:
  modes:
    - {name: b, dim: 24}
model:
  baths:
    - {mode: b, rate: Gamma, dpo: {epsilon: epsilon, kappa_c: kappa_c}}
time:
  start: 0
  end: 10/Gamma
steady:
  tol: 1e-9
observe:
  squeezed_fidelity:
    mode: b
    dpo: {epsilon: epsilon, kappa_c: kappa_c}
  density_table: {mode: b, n_max: 6}
  expectations:
    - {name: n_b, op: "b+ b"}
)";
}

inline std::string dark_state_trajectories() {
  auto s = std::string(R"(name: dark-state-trajectories
task: trajectories
seed: 2024
params:
  Omega: 0.141
  kappa: 1
layout:
  modes:
    - {name: b1, dim: 6}
    - {name: b2, dim: 6}
pulses: {shape: overdamped, Omega: Omega, kappa: kappa}
initial:
  b1: {amplitudes: @PSI@}
observe:
  fidelity:
    target:
      b2: {amplitudes: @PSI@}
trajectories:
  count: 200
time:
  samples: 201
)");
  return replace_all(s, "@PSI@", kPsi);
}

struct Entry {
  const char* name;
  std::string (*make)();
};

inline const std::vector<Entry>& table() {
  static const std::vector<Entry> t{
      {"fig3", fig3},
      {"fig5", fig5},
      {"fig5-secular", fig5_secular},
      {"fig6", fig6},
      {"fig6-underdamped", fig6_underdamped},
      {"swap-lossless", swap_lossless},
      {"appendix-correlations", appendix_correlations},
      {"squeezed-bath", squeezed_bath},
      {"dark-state-trajectories", dark_state_trajectories},
  };
  return t;
}

}  // namespace detail

inline std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& e : detail::table()) out.emplace_back(e.name);
  return out;
}

inline std::string source(const std::string& name) {
  for (const auto& e : detail::table())
    if (name == e.name) return e.make();
  throw ConfigError("builtin", "unknown built-in scenario '" + name + "'");
}

}  // namespace qst::builtins
