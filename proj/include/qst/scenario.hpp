#pragma once

// Declarative run descriptions. A scenario is a YAML document with the
// sections name, task, params, layout, pulses, model, initial, time,
// observe, output (and optionally steady, correlations, trajectories,
// sweep). Numeric fields accept either a number or an arithmetic
// expression over `params` (e.g. "2*nu", "-6/Gamma", "pi/2").

#include <yaml-cpp/yaml.h>

#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "qst/analysis.hpp"
#include "qst/feasibility.hpp"
#include "qst/pulses.hpp"
#include "qst/trajectory.hpp"

namespace qst::scenario {

using Params = std::map<std::string, double>;
using nlohmann::json;

// ---------------------------------------------------------------- expressions

namespace detail {

class ExprParser {
 public:
  ExprParser(std::string_view src, const Params& params, const std::string& key)
      : s_(src), params_(params), key_(key) {}

  double parse() {
    const double v = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(key_, "bad expression '" + std::string(s_) + "' at " + key_ + ": " + what);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  double sum() {
    double v = product();
    for (;;) {
      if (eat('+')) v += product();
      else if (eat('-')) v -= product();
      else return v;
    }
  }
  double product() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    const double base = primary();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double primary() {
    skip();
    if (eat('(')) {
      const double v = sum();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      const std::string rest(s_.substr(pos_));
      double v = 0.0;
      try {
        v = std::stod(rest, &used);
      } catch (const std::exception&) {
        fail("bad number");
      }
      pos_ += used;
      return v;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
        ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      if (eat('(')) {
        const double a = sum();
        if (!eat(')')) fail("missing ')'");
        if (name == "sqrt") return std::sqrt(a);
        if (name == "exp") return std::exp(a);
        if (name == "log") return std::log(a);
        if (name == "sin") return std::sin(a);
        if (name == "cos") return std::cos(a);
        if (name == "abs") return std::abs(a);
        fail("unknown function '" + name + "'");
      }
      if (auto it = params_.find(name); it != params_.end()) return it->second;
      if (name == "pi") return kPi;
      fail("unknown name '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  const Params& params_;
  const std::string& key_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline double evaluate(std::string_view expr, const Params& params, const std::string& key) {
  return detail::ExprParser(expr, params, key).parse();
}

// ---------------------------------------------------------------- YAML access

/// A YAML node together with its dotted key path, for error reporting.
class Node {
 public:
  Node(YAML::Node n, std::string path) : n_(std::move(n)), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const YAML::Node& raw() const { return n_; }
  bool defined() const { return n_.IsDefined() && !n_.IsNull(); }
  bool is_map() const { return n_.IsDefined() && n_.IsMap(); }
  bool is_seq() const { return n_.IsDefined() && n_.IsSequence(); }
  bool is_scalar() const { return n_.IsDefined() && n_.IsScalar(); }
  std::size_t size() const { return n_.size(); }

  bool has(const std::string& k) const {
    return is_map() && n_[k].IsDefined() && !n_[k].IsNull();
  }
  Node operator[](const std::string& k) const {
    return {is_map() ? n_[k] : YAML::Node(), join(k)};
  }
  Node operator[](std::size_t i) const { return {n_[i], join(std::to_string(i))}; }
  Node at(const std::string& k) const {
    if (!is_map()) throw ConfigError(path_, "expected a mapping at '" + path_ + "'");
    if (!has(k)) throw ConfigError(join(k), "missing required key '" + join(k) + "'");
    return (*this)[k];
  }

  /// Rejects keys outside `allowed`.
  void expect_keys(std::initializer_list<std::string_view> allowed) const {
    if (!is_map()) throw ConfigError(path_, "expected a mapping at '" + path_ + "'");
    for (const auto& kv : n_) {
      const auto k = kv.first.as<std::string>();
      bool ok = false;
      for (auto a : allowed) ok = ok || a == k;
      if (!ok) throw ConfigError(join(k), "unknown key '" + join(k) + "'");
    }
  }
  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    if (n_.IsMap())
      for (const auto& kv : n_) out.push_back(kv.first.as<std::string>());
    return out;
  }

  std::string str() const {
    if (!n_.IsScalar()) throw ConfigError(path_, "expected a string at '" + path_ + "'");
    return n_.as<std::string>();
  }
  double number(const Params& p) const {
    if (!n_.IsScalar()) throw ConfigError(path_, "expected a number at '" + path_ + "'");
    const auto s = n_.as<std::string>();
    return evaluate(s, p, path_);
  }
  double number(const Params& p, double fallback) const {
    return defined() ? number(p) : fallback;
  }
  int integer(const Params& p) const {
    const double v = number(p);
    if (std::abs(v - std::round(v)) > 1e-9)
      throw ConfigError(path_, "expected an integer at '" + path_ + "'");
    return static_cast<int>(std::lround(v));
  }
  bool boolean() const {
    try {
      return n_.as<bool>();
    } catch (const YAML::Exception&) {
      throw ConfigError(path_, "expected true/false at '" + path_ + "'");
    }
  }

 private:
  std::string join(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  YAML::Node n_;
  std::string path_;
};

/// Sets a dotted path (mapping keys or sequence indices) to a scalar.
inline void set_path(YAML::Node root, const std::string& path, const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string p; std::getline(ss, p, '.');) parts.push_back(p);
  if (parts.empty()) throw ConfigError(path, "empty parameter path");
  YAML::Node cur = root;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    const bool last = i + 1 == parts.size();
    if (cur.IsSequence()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(p);
      } catch (const std::exception&) {
        throw ConfigError(path, "'" + p + "' is not an index in '" + path + "'");
      }
      if (idx >= cur.size()) throw ConfigError(path, "index out of range in '" + path + "'");
      if (last) {
        cur[idx] = value;
        return;
      }
      cur.reset(cur[idx]);
    } else {
      if (!cur.IsMap() && cur.IsDefined() && !cur.IsNull())
        throw ConfigError(path, "cannot descend into a scalar in '" + path + "'");
      if (last) {
        cur[p] = value;
        return;
      }
      YAML::Node next = cur[p];
      cur.reset(next);
    }
  }
}

// ---------------------------------------------------------------- scenario

struct SqueezedTarget {
  std::string mode;
  double N = 0.0;
  cplx M = 0.0;
};

struct TableSpec {
  std::string mode;
  int n_max = 6;
};

struct CorrelationSpec {
  std::string label;
  SparseOperator a, b;
  Ordering order = Ordering::AFirst;
  std::optional<std::string> expected;  ///< expression in tau and params
};

struct SweepSpec {
  std::string param;
  std::vector<std::string> values;
};

struct Scenario {
  std::string name;
  std::string task = "evolve";  ///< evolve | steady_state | correlations | trajectories
  YAML::Node source;
  Params params;
  std::uint64_t seed = 0;
  LayoutPtr layout;
  std::optional<PulsePair> pulses;
  std::shared_ptr<LiouvillianModel> model;
  std::optional<StateVector> initial;
  std::optional<StateVector> target;
  double t_start = 0.0, t_end = 0.0;
  StepControl step;
  std::vector<std::pair<std::string, SparseOperator>> expectations;
  std::optional<SqueezedTarget> squeezed;
  std::optional<TableSpec> table;
  SteadyStateOptions steady;
  std::vector<double> tau;
  std::vector<CorrelationSpec> correlations;
  std::size_t trajectories = 0;
  unsigned threads = 1;
  std::string prefix;
  double truncation_threshold = 1e-4;
  std::optional<SweepSpec> sweep;
};

struct LoadOptions {
  std::optional<std::uint64_t> seed;
  double dt_scale = 1.0;
};

namespace detail {

/// "a1+ b1" -> a1† b1; factors multiply left to right.
inline SparseOperator parse_operator(const LayoutPtr& layout, const Node& n) {
  const std::string src = n.str();
  std::stringstream ss(src);
  std::optional<SparseOperator> out;
  for (std::string tok; ss >> tok;) {
    bool dag = false;
    if (!tok.empty() && tok.back() == '+') {
      dag = true;
      tok.pop_back();
    }
    if (!layout->has_mode(tok))
      throw ConfigError(n.path(), "unknown mode '" + tok + "' in operator at '" + n.path() + "'");
    SparseOperator f = dag ? creation(layout, tok) : annihilation(layout, tok);
    out = out ? *out * f : f;
  }
  if (!out) throw ConfigError(n.path(), "empty operator at '" + n.path() + "'");
  return *out;
}

inline cplx parse_complex(const Node& n, const Params& p) {
  if (n.is_scalar()) return n.number(p);
  n.expect_keys({"re", "im", "abs", "arg"});
  if (n.has("abs") || n.has("arg"))
    return std::polar(n["abs"].number(p, 1.0), n["arg"].number(p, 0.0));
  return {n["re"].number(p, 0.0), n["im"].number(p, 0.0)};
}

inline RealSignal pulse_signal(const Scenario& sc, const Node& n) {
  const std::string name = n.str();
  if (name == "one") return constant(1.0);
  if (!sc.pulses)
    throw ConfigError(n.path(), "signal '" + name + "' needs a pulses section");
  const PulsePair p = *sc.pulses;
  if (name == "omega1") return p.omega1;
  if (name == "omega2") return p.omega2;
  if (name == "gamma1") return [p](double t) { return p.gamma1(t); };
  if (name == "gamma2") return [p](double t) { return p.gamma2(t); };
  throw ConfigError(n.path(), "unknown signal '" + name + "' at '" + n.path() + "'");
}

/// Number -> constant; {signal, scale} -> scale * signal(t).
inline RealSignal parse_rate(const Scenario& sc, const Node& n) {
  if (n.is_scalar()) return constant(n.number(sc.params));
  n.expect_keys({"signal", "scale"});
  const double scale = n["scale"].number(sc.params, 1.0);
  auto sig = pulse_signal(sc, n.at("signal"));
  return [sig, scale](double t) { return scale * sig(t); };
}

/// Number -> constant; {signal, scale, phase} -> scale e^{i phase} signal(t).
inline ComplexSignal parse_coefficient(const Scenario& sc, const Node& n) {
  if (n.is_scalar()) return constant_c(n.number(sc.params));
  n.expect_keys({"signal", "scale", "phase"});
  const cplx f = std::polar(n["scale"].number(sc.params, 1.0), n["phase"].number(sc.params, 0.0));
  if (!n.has("signal")) return constant_c(f);
  auto sig = pulse_signal(sc, n["signal"]);
  return [sig, f](double t) { return f * sig(t); };
}

inline std::vector<cplx> parse_amplitudes(const Node& n, const Params& p) {
  if (!n.is_seq() || n.size() == 0)
    throw ConfigError(n.path(), "expected a non-empty list at '" + n.path() + "'");
  std::vector<cplx> c;
  for (std::size_t i = 0; i < n.size(); ++i) c.push_back(parse_complex(n[i], p));
  return c;
}

/// Per-mode factor of a product state.
inline std::vector<cplx> parse_factor(const Node& n, const Params& p, int dim) {
  n.expect_keys({"fock", "amplitudes", "parity", "squeezed"});
  std::vector<cplx> c;
  if (n.has("fock")) {
    const int k = n["fock"].integer(p);
    if (k < 0 || k >= dim)
      throw ConfigError(n["fock"].path(), "Fock level outside the mode at '" + n.path() + "'");
    c.assign(static_cast<std::size_t>(k + 1), 0.0);
    c.back() = 1.0;
  } else if (n.has("amplitudes")) {
    c = parse_amplitudes(n["amplitudes"], p);
  } else if (n.has("squeezed")) {
    const Node s = n["squeezed"];
    s.expect_keys({"N", "M", "dpo"});
    try {
      if (s.has("dpo")) {
        const Node d = s["dpo"];
        d.expect_keys({"epsilon", "kappa_c"});
        const auto bath =
            dpo_effective_bath(parse_complex(d.at("epsilon"), p), d.at("kappa_c").number(p));
        c = squeezed_vacuum_coefficients(bath.N, bath.M, dim);
      } else {
        c = squeezed_vacuum_coefficients(s.at("N").number(p), parse_complex(s.at("M"), p), dim);
      }
    } catch (const DomainError& e) {
      throw ConfigError(s.path(), std::string(e.what()) + " (at '" + s.path() + "')");
    }
  } else {
    throw ConfigError(n.path(), "state factor at '" + n.path() +
                                    "' needs one of fock, amplitudes, squeezed");
  }
  if (static_cast<int>(c.size()) > dim)
    throw ConfigError(n.path(), "state at '" + n.path() + "' does not fit in dim " +
                                    std::to_string(dim));
  if (n.has("parity") && n["parity"].boolean())
    for (std::size_t k = 1; k < c.size(); k += 2) c[k] = -c[k];
  double norm2 = 0.0;
  for (auto v : c) norm2 += std::norm(v);
  if (!(norm2 > 0.0)) throw ConfigError(n.path(), "zero state at '" + n.path() + "'");
  for (auto& v : c) v /= std::sqrt(norm2);
  return c;
}

/// Product state; unspecified modes start in vacuum.
inline StateVector parse_state(const LayoutPtr& layout, const Node& n, const Params& p) {
  const auto& modes = layout->modes();
  std::vector<std::vector<cplx>> factors(modes.size(), std::vector<cplx>{1.0});
  for (const auto& k : n.keys()) {
    if (!layout->has_mode(k))
      throw ConfigError(n[k].path(), "unknown mode '" + k + "' at '" + n[k].path() + "'");
    const auto idx = layout->mode_index(k);
    factors[idx] = parse_factor(n[k], p, modes[idx].dim);
  }
  DenseVector v = DenseVector::Zero(layout->total_dim());
  double dropped = 0.0;
  std::vector<int> occ(modes.size(), 0);
  const int product = layout->product_dim();
  for (int q = 0; q < product; ++q) {
    int rem = q;
    cplx amp = 1.0;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      occ[k] = rem / layout->stride(k);
      rem %= layout->stride(k);
      const auto o = static_cast<std::size_t>(occ[k]);
      amp *= o < factors[k].size() ? factors[k][o] : cplx(0.0);
    }
    if (amp == cplx(0.0)) continue;
    const int i = layout->index_of(occ);
    if (i < 0)
      dropped += std::norm(amp);
    else
      v(i) = amp;
  }
  if (dropped > 1e-12)
    throw TruncationError("state at '" + n.path() + "' loses " + std::to_string(dropped) +
                          " of its norm to the excitation cap");
  return StateVector::normalized(layout, std::move(v));
}

inline LayoutPtr parse_layout(const Node& n, const Params& p) {
  n.expect_keys({"modes", "max_excitations"});
  const Node modes = n.at("modes");
  if (!modes.is_seq() || modes.size() == 0)
    throw ConfigError(modes.path(), "expected a non-empty list at '" + modes.path() + "'");
  std::vector<Mode> out;
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const Node m = modes[i];
    m.expect_keys({"name", "dim"});
    out.push_back({m.at("name").str(), m.at("dim").integer(p)});
  }
  std::optional<int> cap;
  if (n.has("max_excitations")) cap = n["max_excitations"].integer(p);
  try {
    return ModeLayout::make(std::move(out), cap);
  } catch (const LayoutError& e) {
    throw ConfigError(n.path(), e.what());
  }
}

inline PulsePair parse_pulses(const Node& n, const Params& p) {
  n.expect_keys({"shape", "Omega", "kappa", "t_min", "t_max", "clip_to_support", "phi1", "phi2"});
  const std::string shape = n.at("shape").str();
  const double omega = n.at("Omega").number(p);
  const double kappa = n["kappa"].number(p, 1.0);
  double t_min = n["t_min"].number(p, NAN), t_max = n["t_max"].number(p, NAN);
  PulsePair pair;
  if (shape == "overdamped") {
    pair = overdamped_pulse(omega * omega / kappa, kappa, t_min, t_max);
  } else if (shape == "underdamped") {
    if (n.has("clip_to_support") && n["clip_to_support"].boolean()) {
      const double s = std::min(10.0 / kappa, underdamped_support(omega, kappa));
      if (std::isnan(t_min)) t_min = -s;
      if (std::isnan(t_max)) t_max = s;
    }
    pair = underdamped_pulse(omega, kappa, t_min, t_max);
  } else if (shape == "constant") {
    if (std::isnan(t_min) || std::isnan(t_max))
      throw ConfigError(n.path(), "constant pulses need t_min and t_max at '" + n.path() + "'");
    pair.omega1 = [omega](double) { return omega; };
    pair.omega2 = pair.omega1;
    pair.kappa = kappa;
    pair.t_min = t_min;
    pair.t_max = t_max;
  } else {
    throw ConfigError(n["shape"].path(), "unknown pulse shape '" + shape + "'");
  }
  pair.phi1 = n["phi1"].number(p, 0.0);
  pair.phi2 = n["phi2"].number(p, 0.0);
  return pair;
}

inline void parse_model(Scenario& sc, const Node& n) {
  n.expect_keys({"hamiltonian", "dissipators", "cascades", "baths", "recoil"});
  const auto& p = sc.params;
  auto& m = *sc.model;
  auto each = [](const Node& list, auto&& fn) {
    if (!list.defined()) return;
    if (!list.is_seq())
      throw ConfigError(list.path(), "expected a list at '" + list.path() + "'");
    for (std::size_t i = 0; i < list.size(); ++i) fn(list[i]);
  };
  auto enabled = [&p](const Node& e) { return !e.has("enabled") || e["enabled"].number(p) != 0.0; };
  auto rethrow = [](const Node& e, auto&& fn) {
    try {
      fn();
    } catch (const DomainError& err) {
      throw ConfigError(e.path(), std::string(err.what()) + " (at '" + e.path() + "')");
    }
  };
  each(n["hamiltonian"], [&](const Node& e) {
    e.expect_keys({"op", "coefficient", "oscillation", "hc", "enabled"});
    if (!enabled(e)) return;
    HamiltonianTerm h{parse_operator(sc.layout, e.at("op")), parse_coefficient(sc, e.at("coefficient")),
                      std::nullopt, true};
    if (e.has("oscillation")) h.oscillation = e["oscillation"].number(p);
    if (e.has("hc")) h.add_hermitian_conjugate = e["hc"].boolean();
    rethrow(e, [&] { m.add(std::move(h)); });
  });
  each(n["dissipators"], [&](const Node& e) {
    e.expect_keys({"op", "rate", "enabled"});
    if (!enabled(e)) return;
    Dissipator d{parse_operator(sc.layout, e.at("op")), parse_rate(sc, e.at("rate"))};
    rethrow(e, [&] { m.add(std::move(d)); });
  });
  each(n["cascades"], [&](const Node& e) {
    e.expect_keys({"source", "target", "source_rate", "target_rate", "enabled"});
    if (!enabled(e)) return;
    CascadeLink c{parse_operator(sc.layout, e.at("source")), parse_operator(sc.layout, e.at("target")),
                  parse_rate(sc, e.at("source_rate")), parse_rate(sc, e.at("target_rate"))};
    rethrow(e, [&] { m.add(std::move(c)); });
  });
  each(n["baths"], [&](const Node& e) {
    e.expect_keys({"mode", "rate", "N", "M", "dpo", "enabled"});
    if (!enabled(e)) return;
    SqueezedBathChannel b{parse_operator(sc.layout, e.at("mode")), e.at("rate").number(p), 0.0, 0.0};
    if (e.has("dpo")) {
      const Node d = e["dpo"];
      d.expect_keys({"epsilon", "kappa_c"});
      rethrow(e, [&] {
        const auto bath = dpo_effective_bath(parse_complex(d.at("epsilon"), p), d.at("kappa_c").number(p));
        b.N = bath.N;
        b.M = bath.M;
      });
    } else {
      b.N = e.at("N").number(p);
      b.M = parse_complex(e.at("M"), p);
    }
    rethrow(e, [&] { m.add(std::move(b)); });
  });
  each(n["recoil"], [&](const Node& e) {
    e.expect_keys({"mode", "rate", "enabled"});
    if (!enabled(e)) return;
    const auto b = parse_operator(sc.layout, e.at("mode"));
    const double rate = e.at("rate").number(p);
    rethrow(e, [&] { m.add(recoil_dissipator(b, rate)); });
  });
}

inline void parse_observe(Scenario& sc, const Node& n) {
  n.expect_keys({"fidelity", "expectations", "squeezed_fidelity", "density_table",
                 "truncation_threshold"});
  const auto& p = sc.params;
  if (n.has("fidelity")) {
    const Node f = n["fidelity"];
    f.expect_keys({"target"});
    sc.target = parse_state(sc.layout, f.at("target"), p);
  }
  if (n.has("expectations")) {
    const Node list = n["expectations"];
    for (std::size_t i = 0; i < list.size(); ++i) {
      list[i].expect_keys({"name", "op"});
      sc.expectations.emplace_back(list[i].at("name").str(),
                                   parse_operator(sc.layout, list[i].at("op")));
    }
  }
  if (n.has("squeezed_fidelity")) {
    const Node s = n["squeezed_fidelity"];
    s.expect_keys({"mode", "N", "M", "dpo"});
    SqueezedTarget t;
    t.mode = s.at("mode").str();
    if (!sc.layout->has_mode(t.mode))
      throw ConfigError(s["mode"].path(), "unknown mode '" + t.mode + "'");
    if (s.has("dpo")) {
      const Node d = s["dpo"];
      d.expect_keys({"epsilon", "kappa_c"});
      const auto bath = dpo_effective_bath(parse_complex(d.at("epsilon"), p), d.at("kappa_c").number(p));
      t.N = bath.N;
      t.M = bath.M;
    } else {
      t.N = s.at("N").number(p);
      t.M = parse_complex(s.at("M"), p);
    }
    sc.squeezed = t;
  }
  if (n.has("density_table")) {
    const Node d = n["density_table"];
    d.expect_keys({"mode", "n_max"});
    TableSpec t{d.at("mode").str(), d["n_max"].defined() ? d["n_max"].integer(p) : 6};
    if (!sc.layout->has_mode(t.mode))
      throw ConfigError(d["mode"].path(), "unknown mode '" + t.mode + "'");
    sc.table = t;
  }
  if (n.has("truncation_threshold")) sc.truncation_threshold = n["truncation_threshold"].number(p);
}

}  // namespace detail

/// Builds a runnable scenario from a parsed document.
inline Scenario load(const YAML::Node& doc, const LoadOptions& opt = {}) {
  const Node root(doc, "");
  if (!doc.IsMap()) throw ConfigError("", "scenario document must be a mapping");
  root.expect_keys({"name", "task", "seed", "params", "layout", "pulses", "model", "initial",
                    "time", "observe", "steady", "correlations", "trajectories", "output",
                    "sweep"});
  Scenario sc;
  sc.source = YAML::Clone(doc);
  sc.name = root.at("name").str();
  if (root.has("task")) sc.task = root["task"].str();
  if (sc.task != "evolve" && sc.task != "steady_state" && sc.task != "correlations" &&
      sc.task != "trajectories")
    throw ConfigError("task", "unknown task '" + sc.task + "'");

  if (root.has("params")) {
    const Node ps = root["params"];
    if (!ps.is_map()) throw ConfigError("params", "expected a mapping at 'params'");
    // Parameters may refer to earlier ones.
    for (const auto& k : ps.keys()) sc.params[k] = ps[k].number(sc.params);
  }
  const auto& p = sc.params;
  if (root.has("seed")) sc.seed = static_cast<std::uint64_t>(root["seed"].integer(p));
  if (opt.seed) sc.seed = *opt.seed;

  sc.layout = detail::parse_layout(root.at("layout"), p);
  sc.model = std::make_shared<LiouvillianModel>(sc.layout);
  if (root.has("pulses")) {
    try {
      sc.pulses = detail::parse_pulses(root["pulses"], p);
    } catch (const DomainError& e) {
      throw ConfigError("pulses", e.what());
    }
    sc.params["t_min"] = sc.pulses->t_min;
    sc.params["t_max"] = sc.pulses->t_max;
  }
  if (root.has("model")) detail::parse_model(sc, root["model"]);

  sc.initial = root.has("initial") ? detail::parse_state(sc.layout, root["initial"], p)
                                   : vacuum(sc.layout);

  const Node time = root["time"];
  if (time.defined()) time.expect_keys({"start", "end", "dt", "dt_scale", "samples"});
  const double def_start = sc.pulses ? sc.pulses->t_min : NAN;
  const double def_end = sc.pulses ? sc.pulses->t_max : NAN;
  sc.t_start = time["start"].number(p, def_start);
  sc.t_end = time["end"].number(p, def_end);
  if (std::isnan(sc.t_start)) throw ConfigError("time.start", "missing required key 'time.start'");
  if (std::isnan(sc.t_end)) throw ConfigError("time.end", "missing required key 'time.end'");
  if (!(sc.t_end > sc.t_start)) throw ConfigError("time.end", "time.end must exceed time.start");
  sc.step.dt = time["dt"].number(p, 0.0);
  sc.step.dt_scale = time["dt_scale"].number(p, 1.0) * opt.dt_scale;
  sc.step.sample_points = time["samples"].defined() ? time["samples"].integer(p) : 201;
  if (sc.step.sample_points < 2) throw ConfigError("time.samples", "time.samples must be >= 2");

  if (root.has("observe")) detail::parse_observe(sc, root["observe"]);

  if (root.has("steady")) {
    const Node s = root["steady"];
    s.expect_keys({"tol", "t_max", "probe"});
    sc.steady.tol = s["tol"].number(p, sc.steady.tol);
    sc.steady.t_max = s["t_max"].number(p, sc.steady.t_max);
    sc.steady.probe = s["probe"].number(p, 0.0);
  }
  sc.steady.step = sc.step;

  if (root.has("correlations")) {
    const Node c = root["correlations"];
    c.expect_keys({"tau_end", "points", "pairs"});
    const int pts = c["points"].defined() ? c["points"].integer(p) : 601;
    if (pts < 2) throw ConfigError(c["points"].path(), "need at least 2 tau points");
    sc.tau = linspace(0.0, c.at("tau_end").number(p), static_cast<std::size_t>(pts));
    const Node list = c.at("pairs");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const Node e = list[i];
      e.expect_keys({"a", "b", "order", "label", "expect"});
      CorrelationSpec cs;
      cs.a = detail::parse_operator(sc.layout, e.at("a"));
      cs.b = detail::parse_operator(sc.layout, e.at("b"));
      cs.label = e.has("label") ? e["label"].str()
                                : "<" + e["a"].str() + "(tau) " + e["b"].str() + ">";
      if (e.has("order")) {
        const auto o = e["order"].str();
        if (o == "a_first") cs.order = Ordering::AFirst;
        else if (o == "b_first") cs.order = Ordering::BFirst;
        else throw ConfigError(e["order"].path(), "order must be a_first or b_first");
      }
      if (e.has("expect")) {
        cs.expected = e["expect"].str();
        Params probe = p;
        probe["tau"] = 0.0;
        evaluate(*cs.expected, probe, e["expect"].path());
      }
      sc.correlations.push_back(std::move(cs));
    }
  }
  if (sc.task == "correlations" && sc.correlations.empty())
    throw ConfigError("correlations", "task 'correlations' needs a correlations section");

  if (root.has("trajectories")) {
    const Node t = root["trajectories"];
    t.expect_keys({"count", "threads"});
    sc.trajectories = static_cast<std::size_t>(t.at("count").integer(p));
    if (t.has("threads")) sc.threads = static_cast<unsigned>(t["threads"].integer(p));
  }
  if (sc.task == "trajectories") {
    if (!sc.pulses) throw ConfigError("pulses", "task 'trajectories' needs a pulses section");
    if (sc.layout->mode_count() != 2 || !sc.layout->has_mode("b1") || !sc.layout->has_mode("b2"))
      throw ConfigError("layout", "task 'trajectories' needs the two modes b1, b2");
    if (sc.trajectories == 0)
      throw ConfigError("trajectories.count", "missing required key 'trajectories.count'");
  }

  sc.prefix = sc.name;
  if (root.has("output")) {
    const Node o = root["output"];
    o.expect_keys({"prefix"});
    if (o.has("prefix")) sc.prefix = o["prefix"].str();
  }
  if (root.has("sweep")) {
    const Node s = root["sweep"];
    s.expect_keys({"param", "values"});
    SweepSpec sw{s.at("param").str(), {}};
    const Node v = s.at("values");
    for (std::size_t i = 0; i < v.size(); ++i) sw.values.push_back(v[i].str());
    sc.sweep = sw;
  }
  return sc;
}

inline YAML::Node parse_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("", std::string("YAML syntax error: ") + e.what());
  }
}

inline YAML::Node read_yaml(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open scenario file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_yaml(ss.str());
}

// ---------------------------------------------------------------- running

struct RunOptions {
  std::string out_dir = ".";
  bool write_files = true;
};

struct RunResult {
  json summary;
  std::optional<DensityMatrix> final_state;
  TimeSeries series;
  std::vector<CorrelationSeries> correlations;
  std::vector<std::string> files;
};

namespace detail {

inline std::string mode_top_name(const std::string& mode) { return "top2_" + mode; }

inline void write_text(RunResult& r, const RunOptions& opt, const std::string& file,
                       const std::function<void(std::ostream&)>& fn) {
  if (!opt.write_files) return;
  std::filesystem::create_directories(opt.out_dir);
  const auto path = (std::filesystem::path(opt.out_dir) / file).string();
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path + "'");
  fn(os);
  r.files.push_back(path);
}

inline std::vector<Observer> observers_for(const Scenario& sc) {
  std::vector<Observer> obs;
  if (sc.target) {
    const StateVector tgt = *sc.target;
    obs.push_back({"fidelity", [tgt](double, const DensityMatrix& r) { return fidelity(r, tgt); }});
  }
  for (const auto& [name, op] : sc.expectations) obs.push_back(observe_expectation(name, op));
  const auto n_modes = sc.layout->mode_count();
  for (std::size_t k = 0; k < n_modes; ++k)
    obs.push_back({mode_top_name(sc.layout->modes()[k].name), [k](double, const DensityMatrix& r) {
                     return truncation_report(r).per_mode[k].second;
                   }});
  if (sc.layout->max_excitations())
    obs.push_back({"top2_cap_shell",
                   [](double, const DensityMatrix& r) { return truncation_report(r).cap_shell; }});
  return obs;
}

/// Largest top-two-level population per mode over the sampled run.
inline json truncation_summary(const Scenario& sc, const TimeSeries& ts,
                               const std::optional<DensityMatrix>& final_state) {
  json per = json::object();
  double worst = 0.0;
  auto column_max = [&ts](const std::string& name) {
    for (std::size_t k = 0; k < ts.names.size(); ++k)
      if (ts.names[k] == name) {
        double m = 0.0;
        for (const auto& row : ts.values) m = std::max(m, row[k]);
        return m;
      }
    return -1.0;
  };
  std::optional<TruncationReport> fin;
  if (final_state) fin = truncation_report(*final_state);
  for (std::size_t k = 0; k < sc.layout->mode_count(); ++k) {
    const auto& name = sc.layout->modes()[k].name;
    double v = column_max(mode_top_name(name));
    if (fin) v = std::max(v, fin->per_mode[k].second);
    per[name] = v;
    worst = std::max(worst, v);
  }
  json out{{"per_mode", per}, {"threshold", sc.truncation_threshold}};
  if (sc.layout->max_excitations()) {
    double v = column_max("top2_cap_shell");
    if (fin) v = std::max(v, fin->cap_shell);
    out["cap_shell"] = v;
    worst = std::max(worst, v);
  }
  out["max"] = worst;
  out["flagged"] = worst > sc.truncation_threshold;
  return out;
}

inline json layout_json(const ModeLayout& l) {
  json modes = json::array();
  for (const auto& m : l.modes()) modes.push_back({{"name", m.name}, {"dim", m.dim}});
  json j{{"modes", modes}, {"dim", l.total_dim()}};
  j["max_excitations"] = l.max_excitations() ? json(*l.max_excitations()) : json(nullptr);
  return j;
}

inline void add_state_observables(const Scenario& sc, const DensityMatrix& rho, RunResult& r,
                                  const RunOptions& opt) {
  if (sc.target) r.summary["final_fidelity"] = fidelity(rho, *sc.target);
  json ex = json::object();
  for (const auto& [name, op] : sc.expectations) ex[name] = expectation(op, rho).real();
  r.summary["final_expectations"] = ex;
  if (sc.squeezed) {
    const auto reduced = partial_trace(rho, {sc.squeezed->mode});
    r.summary["squeezed_fidelity"] = squeezed_fidelity(reduced, sc.squeezed->N, sc.squeezed->M);
    r.summary["squeezed_target"] = {{"N", sc.squeezed->N},
                                    {"M_re", sc.squeezed->M.real()},
                                    {"M_im", sc.squeezed->M.imag()}};
  }
  if (sc.table) {
    const auto reduced = partial_trace(rho, {sc.table->mode});
    const auto t = density_matrix_table(reduced, sc.table->n_max);
    r.summary["density_table"] = to_json(t);
    r.summary["density_table"]["mode"] = sc.table->mode;
    write_text(r, opt, sc.prefix + "_density.csv", [&](std::ostream& os) { write_density_csv(os, t); });
  }
}

inline void run_evolve(const Scenario& sc, RunResult& r, const RunOptions& opt) {
  auto ts = integrate(*sc.model, DensityMatrix::pure(*sc.initial), sc.t_start, sc.t_end, sc.step,
                      observers_for(sc));
  r.summary["dt"] = ts.dt;
  r.summary["steps"] = ts.steps;
  r.summary["max_trace_drift"] = ts.max_trace_drift;
  r.final_state = ts.final_state;
  r.series = std::move(ts);
}

inline void run_steady(const Scenario& sc, RunResult& r, const RunOptions& opt) {
  run_evolve(sc, r, opt);
  SteadyStateOptions so = sc.steady;
  so.t_start = sc.t_end;
  const auto ss = steady_state(*sc.model, *r.final_state, so);
  r.summary["steady"] = {{"t_reached", ss.t_reached},
                         {"residual", ss.residual},
                         {"probe", ss.probe},
                         {"steps", ss.steps}};
  r.final_state = ss.rho;
}

inline void run_correlations(const Scenario& sc, RunResult& r, const RunOptions& opt) {
  SteadyStateOptions so = sc.steady;
  so.t_start = sc.t_start;
  const auto ss = steady_state(*sc.model, DensityMatrix::pure(*sc.initial), so);
  r.final_state = ss.rho;
  r.summary["steady"] = {{"t_reached", ss.t_reached}, {"residual", ss.residual}, {"probe", ss.probe}};
  json list = json::array();
  std::size_t idx = 0;
  for (const auto& c : sc.correlations) {
    auto series = regression_correlation(*sc.model, ss.rho, c.a, c.b, sc.tau, c.order);
    series.label = c.label;
    json j{{"label", c.label}};
    double max_abs = 0.0;
    for (const auto& v : series.value) max_abs = std::max(max_abs, std::abs(v));
    j["max_abs"] = max_abs;
    if (c.expected) {
      Params pv = sc.params;
      double sq = 0.0;
      for (std::size_t i = 0; i < sc.tau.size(); ++i) {
        pv["tau"] = sc.tau[i];
        const double e = evaluate(*c.expected, pv, "correlations.expect");
        sq += std::norm(series.value[i] - e);
      }
      j["expected"] = *c.expected;
      j["rms_error"] = std::sqrt(sq / static_cast<double>(sc.tau.size()));
    }
    list.push_back(j);
    write_text(r, opt, sc.prefix + "_corr" + std::to_string(idx++) + ".csv",
               [&](std::ostream& os) { write_correlation_csv(os, series); });
    r.correlations.push_back(std::move(series));
  }
  r.summary["correlations"] = list;
}

inline void run_trajectories(const Scenario& sc, RunResult& r, const RunOptions& opt) {
  const auto grid = linspace(sc.t_start, sc.t_end, static_cast<std::size_t>(sc.step.sample_points));
  const auto ens = mcwf_ensemble(*sc.initial, *sc.pulses, sc.trajectories, sc.seed, grid, sc.threads);
  r.final_state = ens.rho;
  r.summary["trajectories"] = sc.trajectories;
  r.summary["total_jumps"] = ens.total_jumps;
  // Mean squared norm of the unnormalized trajectories, with resets at jumps.
  TimeSeries ts;
  ts.names = {"mean_norm2"};
  for (std::size_t i = 0; i < grid.size() && !ens.records.empty(); ++i) {
    double s = 0.0;
    for (const auto& rec : ens.records) s += i < rec.norms.size() ? rec.norms[i] : 0.0;
    ts.t.push_back(grid[i]);
    ts.values.push_back({s / static_cast<double>(ens.records.size())});
  }
  r.series = std::move(ts);
  write_text(r, opt, sc.prefix + "_jumps.csv",
             [&](std::ostream& os) { write_jump_csv(os, ens.records); });
}

}  // namespace detail

/// Executes a scenario: CSV series, optional tables, and a JSON summary.
inline RunResult run(const Scenario& sc, const RunOptions& opt = {}) {
  const auto wall0 = std::chrono::steady_clock::now();
  RunResult r;
  r.summary = {{"name", sc.name},
               {"task", sc.task},
               {"seed", sc.seed},
               {"dt_scale", sc.step.dt_scale},
               {"layout", detail::layout_json(*sc.layout)},
               {"t_start", sc.t_start},
               {"t_end", sc.t_end},
               {"params", sc.params}};
  if (sc.task == "evolve") detail::run_evolve(sc, r, opt);
  else if (sc.task == "steady_state") detail::run_steady(sc, r, opt);
  else if (sc.task == "correlations") detail::run_correlations(sc, r, opt);
  else detail::run_trajectories(sc, r, opt);

  if (r.final_state) {
    detail::add_state_observables(sc, *r.final_state, r, opt);
    r.summary["truncation"] = detail::truncation_summary(sc, r.series, r.final_state);
  }
  if (!r.series.t.empty())
    detail::write_text(r, opt, sc.prefix + "_series.csv",
                       [&](std::ostream& os) { write_series_csv(os, r.series); });
  if (sc.pulses)
    detail::write_text(r, opt, sc.prefix + "_pulses.csv",
                       [&](std::ostream& os) { write_pulse_csv(os, *sc.pulses); });
  r.summary["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  const std::string summary_file = sc.prefix + "_summary.json";
  auto files = r.files;
  if (opt.write_files)
    files.push_back((std::filesystem::path(opt.out_dir) / summary_file).string());
  r.summary["outputs"] = files;
  detail::write_text(r, opt, summary_file, [&](std::ostream& os) { os << r.summary.dump(2) << "\n"; });
  return r;
}

// ---------------------------------------------------------------- sweeps

struct SweepResult {
  std::string param;
  std::vector<std::string> values;
  std::vector<RunResult> runs;
  json summary;
};

inline std::string sanitize(std::string s) {
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
  return s;
}

/// One run per value of `param` (a dotted path into the document), executed
/// concurrently on `threads` workers; each run writes into its own
/// subdirectory, and the merged table is written once at the end.
inline SweepResult sweep(const YAML::Node& doc, const std::string& param,
                         const std::vector<std::string>& values, const LoadOptions& lopt,
                         const RunOptions& ropt, unsigned threads = 0) {
  SweepResult out;
  out.param = param;
  out.values = values;
  if (values.empty()) return out;

  // Validate every point before spending time on any of them.
  std::vector<Scenario> scenarios;
  for (const auto& v : values) {
    YAML::Node d = YAML::Clone(doc);
    d.remove("sweep");
    set_path(d, param, v);
    scenarios.push_back(load(d, lopt));
    scenarios.back().sweep.reset();
  }
  const std::string base = scenarios.front().prefix;
  const std::string leaf = param.substr(param.find_last_of('.') + 1);

  out.runs.resize(values.size());
  std::vector<std::exception_ptr> errors(values.size());
  std::atomic<std::size_t> next{0};
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(values.size()));
  auto worker = [&] {
    for (std::size_t i; (i = next++) < values.size();) {
      try {
        RunOptions ro = ropt;
        ro.out_dir = (std::filesystem::path(ropt.out_dir) /
                      sanitize(base + "_" + leaf + "=" + values[i]))
                         .string();
        out.runs[i] = run(scenarios[i], ro);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  json rows = json::array();
  std::vector<std::vector<double>> table;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& s = out.runs[i].summary;
    rows.push_back({{"value", values[i]}, {"summary", s}});
    auto num = [&s](const char* k) { return s.contains(k) ? s[k].get<double>() : NAN; };
    const double trunc = s.contains("truncation") ? s["truncation"]["max"].get<double>() : NAN;
    double v = NAN;
    try {
      v = std::stod(values[i]);
    } catch (const std::exception&) {
    }
    table.push_back({v, num("final_fidelity"), num("squeezed_fidelity"), trunc, num("wall_seconds")});
  }
  out.summary = {{"param", param}, {"values", values}, {"runs", rows}};
  RunResult sink;
  detail::write_text(sink, ropt, base + "_sweep.csv", [&](std::ostream& os) {
    write_csv(os, {leaf, "final_fidelity", "squeezed_fidelity", "truncation_max", "wall_seconds"},
              table);
  });
  detail::write_text(sink, ropt, base + "_sweep.json",
                     [&](std::ostream& os) { os << out.summary.dump(2) << "\n"; });
  return out;
}

// ---------------------------------------------------------------- lab parameters

/// Feasibility inputs. Frequencies are given as f/2π in Hz and stored as
/// angular frequencies; unspecified keys fall back to the ⁹Be⁺ preset.
inline lab::LabParams load_lab_params(const YAML::Node& doc) {
  const Node root(doc, "");
  if (!doc.IsMap()) throw ConfigError("", "parameter document must be a mapping");
  root.expect_keys({"preset", "wavelength_m", "gamma_over_2pi_hz", "mirror_separation_m",
                    "finesse", "mirror_radius_m", "mass_amu", "mass_kg",
                    "trap_frequency_over_2pi_hz", "omega_over_kappa"});
  const Params none;
  lab::LabParams p;
  if (root.has("preset")) {
    const auto name = root["preset"].str();
    if (name != "beryllium" && name != "be9")
      throw ConfigError("preset", "unknown preset '" + name + "'");
  }
  p = lab::beryllium_preset();
  if (root.has("wavelength_m")) p.wavelength = root["wavelength_m"].number(none);
  if (root.has("gamma_over_2pi_hz")) p.gamma = lab::kTwoPi * root["gamma_over_2pi_hz"].number(none);
  if (root.has("mirror_separation_m")) p.mirror_separation = root["mirror_separation_m"].number(none);
  if (root.has("finesse")) p.finesse = root["finesse"].number(none);
  if (root.has("mirror_radius_m")) p.mirror_radius = root["mirror_radius_m"].number(none);
  if (root.has("mass_amu")) p.mass = root["mass_amu"].number(none) * lab::kAmu;
  if (root.has("mass_kg")) p.mass = root["mass_kg"].number(none);
  if (root.has("trap_frequency_over_2pi_hz"))
    p.trap_frequency = lab::kTwoPi * root["trap_frequency_over_2pi_hz"].number(none);
  if (root.has("omega_over_kappa")) {
    const Node v = root["omega_over_kappa"];
    p.omega_over_kappa.clear();
    for (std::size_t i = 0; i < v.size(); ++i) p.omega_over_kappa.push_back(v[i].number(none));
  }
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ConfigError("", e.what());
  }
  return p;
}

}  // namespace qst::scenario
