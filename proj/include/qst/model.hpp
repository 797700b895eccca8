#pragma once

// Time-dependent Lindblad master equations with cascade links and
// squeezed-bath channels, integrated with fixed-step RK4.
//
// Every generator handled here can be written as
//
//   L(X) = G(X) + G(X^dagger)^dagger,
//   G(X) = K(t) X + sum_j c_j(t) A_j X B_j^dagger,
//
// with K(t) a sparse matrix collecting all left-multiplied terms. For
// Hermitian X this reduces to G(X) + G(X)^dagger, which is what the state
// integrator uses; regression propagation of non-Hermitian seeds goes
// through the general form. No superoperator is ever materialized.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "qst/fock.hpp"

namespace qst {

using RealSignal = std::function<double(double)>;
using ComplexSignal = std::function<cplx(double)>;

inline RealSignal constant(double v) {
  return [v](double) { return v; };
}
inline ComplexSignal constant_c(cplx v) {
  return [v](double) { return v; };
}

/// coefficient(t) * e^{i omega t} * op  (+ h.c. when requested).
struct HamiltonianTerm {
  SparseOperator op;
  ComplexSignal coefficient;
  std::optional<double> oscillation;
  bool add_hermitian_conjugate = true;
};

/// rate(t) * (2 L rho L† - L†L rho - rho L†L).
struct Dissipator {
  SparseOperator op;
  RealSignal rate;
};

/// -2 sqrt(k1 k2) ([a2†, a1 rho] + [rho a1†, a2]): a1 drives a2 one-way.
struct CascadeLink {
  SparseOperator source;
  SparseOperator target;
  RealSignal source_rate;
  RealSignal target_rate;
};

/// Broadband squeezed reservoir on one mode, four-line form:
///   G(N+1)(2 b rho b† - b†b rho - rho b†b)
/// + G N   (2 b† rho b - b b† rho - rho b b†)
/// - G M   (2 b rho b - b b rho - rho b b)
/// - G M*  (2 b† rho b† - b† b† rho - rho b† b†)
struct SqueezedBathChannel {
  SparseOperator mode;
  double rate = 0.0;
  double N = 0.0;
  cplx M = 0.0;
};

/// Collection of terms that can be appended to a model.
struct ModelFragment {
  std::vector<HamiltonianTerm> hamiltonian;
  std::vector<Dissipator> dissipators;
};

/// Leading-order recoil diffusion rate * (2 X rho X - X^2 rho - rho X^2)
/// with X = b + b†. A zero rate yields an empty fragment.
inline ModelFragment recoil_dissipator(const SparseOperator& b, double rate) {
  if (!(rate >= 0.0))
    throw DomainError("recoil rate must be nonnegative, got " +
                      std::to_string(rate));
  ModelFragment f;
  if (rate > 0.0) f.dissipators.push_back({b + b.adjoint(), constant(rate)});
  return f;
}

class LiouvillianModel {
 public:
  explicit LiouvillianModel(LayoutPtr layout) : layout_(std::move(layout)) {}

  const LayoutPtr& layout() const noexcept { return layout_; }

  LiouvillianModel& add(HamiltonianTerm term) {
    require_same_layout(layout_, term.op.layout(), "Hamiltonian term");
    if (!term.coefficient) throw DomainError("Hamiltonian term without signal");
    hamiltonian_.push_back(std::move(term));
    compiled_.reset();
    return *this;
  }
  LiouvillianModel& add(Dissipator d) {
    require_same_layout(layout_, d.op.layout(), "dissipator");
    if (!d.rate) throw DomainError("dissipator without rate");
    dissipators_.push_back(std::move(d));
    compiled_.reset();
    return *this;
  }
  LiouvillianModel& add(CascadeLink c) {
    require_same_layout(layout_, c.source.layout(), "cascade source");
    require_same_layout(layout_, c.target.layout(), "cascade target");
    cascades_.push_back(std::move(c));
    compiled_.reset();
    return *this;
  }
  LiouvillianModel& add(SqueezedBathChannel s) {
    require_same_layout(layout_, s.mode.layout(), "squeezed bath");
    if (s.rate < 0.0) throw DomainError("squeezed bath rate must be >= 0");
    if (s.N < 0.0) throw DomainError("squeezed bath needs N >= 0");
    if (std::norm(s.M) > s.N * (s.N + 1.0) + 1e-12)
      throw DomainError("squeezed bath violates |M|^2 <= N(N+1)");
    baths_.push_back(std::move(s));
    compiled_.reset();
    return *this;
  }
  LiouvillianModel& add(const ModelFragment& f) {
    for (const auto& h : f.hamiltonian) add(h);
    for (const auto& d : f.dissipators) add(d);
    return *this;
  }

  const std::vector<HamiltonianTerm>& hamiltonian() const { return hamiltonian_; }
  const std::vector<Dissipator>& dissipators() const { return dissipators_; }
  const std::vector<CascadeLink>& cascades() const { return cascades_; }
  const std::vector<SqueezedBathChannel>& baths() const { return baths_; }

  bool has_damping() const {
    return !dissipators_.empty() || !cascades_.empty() || !baths_.empty();
  }

  /// Largest |omega| over declared oscillations (0 if none).
  double max_oscillation() const {
    double w = 0.0;
    for (const auto& h : hamiltonian_)
      if (h.oscillation) w = std::max(w, std::abs(*h.oscillation));
    return w;
  }
  /// Smallest nonzero |omega| over declared oscillations (0 if none).
  double min_oscillation() const {
    double w = 0.0;
    for (const auto& h : hamiltonian_)
      if (h.oscillation && *h.oscillation != 0.0) {
        const double a = std::abs(*h.oscillation);
        w = (w == 0.0) ? a : std::min(w, a);
      }
    return w;
  }

  /// Largest rate or coupling magnitude over [t0, t1], sampled.
  double max_rate(double t0, double t1, int samples = 257) const {
    double r = 0.0;
    for (int s = 0; s < samples; ++s) {
      const double t = t0 + (t1 - t0) * s / (samples - 1);
      for (const auto& h : hamiltonian_) r = std::max(r, std::abs(h.coefficient(t)));
      for (const auto& d : dissipators_) r = std::max(r, std::abs(d.rate(t)));
      for (const auto& c : cascades_)
        r = std::max({r, std::abs(c.source_rate(t)), std::abs(c.target_rate(t))});
    }
    for (const auto& b : baths_) r = std::max(r, b.rate * (2.0 * b.N + 1.0));
    return r;
  }

  /// Smallest nonzero dissipative rate over [t0, t1], sampled.
  double min_damping_rate(double t0, double t1, int samples = 257) const {
    double r = std::numeric_limits<double>::infinity();
    auto take = [&r](double v) {
      if (v > 0.0) r = std::min(r, v);
    };
    for (int s = 0; s < samples; ++s) {
      const double t = t0 + (t1 - t0) * s / (samples - 1);
      for (const auto& d : dissipators_) take(d.rate(t));
      for (const auto& c : cascades_) {
        take(c.source_rate(t));
        take(c.target_rate(t));
      }
    }
    for (const auto& b : baths_) take(b.rate);
    return r;
  }

  class Generator;
  const Generator& generator() const;

 private:
  LayoutPtr layout_;
  std::vector<HamiltonianTerm> hamiltonian_;
  std::vector<Dissipator> dissipators_;
  std::vector<CascadeLink> cascades_;
  std::vector<SqueezedBathChannel> baths_;
  mutable std::shared_ptr<const Generator> compiled_;
};

/// Compiled form of a model: the pattern of K(t) plus sandwich terms.
class LiouvillianModel::Generator {
 public:
  explicit Generator(const LiouvillianModel& m) : dim_(m.layout()->total_dim()) {
    // Left-multiplied contributions, each with its own time signal.
    auto add_left = [this](const SparseOperator& op, ComplexSignal f) {
      left_.push_back({op.matrix(), std::move(f), {}});
    };
    for (const auto& h : m.hamiltonian()) {
      const ComplexSignal c = h.coefficient;
      const std::optional<double> w = h.oscillation;
      auto value = [c, w](double t) {
        cplx v = c(t);
        if (w) v *= std::exp(kI * (*w * t));
        return v;
      };
      add_left(h.op, [value](double t) { return -kI * value(t); });
      if (h.add_hermitian_conjugate)
        add_left(h.op.adjoint(),
                 [value](double t) { return -kI * std::conj(value(t)); });
    }
    for (const auto& d : m.dissipators()) {
      const RealSignal rate = d.rate;
      add_left(d.op.adjoint() * d.op, [rate](double t) {
        const double r = rate(t);
        if (r < 0.0)
          throw DomainError("negative dissipator rate " + std::to_string(r) +
                            " at t = " + std::to_string(t));
        return cplx(-r);
      });
      jumps_.push_back({d.op.matrix(), d.op.matrix(),
                        [rate](double t) { return cplx(rate(t)); }});
    }
    for (const auto& c : m.cascades()) {
      auto strength = [k1 = c.source_rate, k2 = c.target_rate](double t) {
        const double a = k1(t), b = k2(t);
        if (a < 0.0 || b < 0.0)
          throw DomainError("negative cascade rate at t = " + std::to_string(t));
        return 2.0 * std::sqrt(a * b);
      };
      add_left(c.target.adjoint() * c.source,
               [strength](double t) { return cplx(-strength(t)); });
      jumps_.push_back({c.source.matrix(), c.target.matrix(),
                        [strength](double t) { return cplx(strength(t)); }});
    }
    for (const auto& s : m.baths()) {
      const SparseOperator& b = s.mode;
      const SparseOperator bd = b.adjoint();
      const double g = s.rate, n = s.N;
      const cplx mm = s.M;
      add_left(bd * b, constant_c(-g * (n + 1.0)));
      add_left(b * bd, constant_c(-g * n));
      add_left(b * b, constant_c(g * mm));
      add_left(bd * bd, constant_c(g * std::conj(mm)));
      jumps_.push_back({b.matrix(), b.matrix(), constant_c(g * (n + 1.0))});
      jumps_.push_back({bd.matrix(), bd.matrix(), constant_c(g * n)});
      jumps_.push_back({b.matrix(), bd.matrix(), constant_c(-2.0 * g * mm)});
    }
    build_pattern();
  }

  int dim() const noexcept { return dim_; }
  std::size_t pattern_nonzeros() const { return static_cast<std::size_t>(k_.nonZeros()); }

  struct Workspace {
    SparseMatrix k;
    DenseMatrix g, xadj, g2;
    std::vector<std::vector<cplx>> w;
  };

  Workspace make_workspace() const {
    Workspace w;
    w.k = k_;
    for (const auto& grp : groups_)
      w.w.emplace_back(static_cast<std::size_t>(grp.w.nonZeros()), cplx(0.0));
    return w;
  }

  /// out = L(rho) for Hermitian rho.
  void apply_hermitian(double t, const DenseMatrix& rho, DenseMatrix& out,
                       Workspace& w) const {
    half(t, rho, w.g, w);
    out.resize(dim_, dim_);
    add_adjoint(w.g, w.g, out, true);
  }

  /// out = L(x) for arbitrary x.
  void apply_general(double t, const DenseMatrix& x, DenseMatrix& out,
                     Workspace& w) const {
    w.xadj.resize(dim_, dim_);
    blocked_adjoint(x, w.xadj);
    half(t, x, w.g, w);
    half(t, w.xadj, w.g2, w);
    out.resize(dim_, dim_);
    add_adjoint(w.g, w.g2, out, false);
  }

 private:
  struct Left {
    SparseMatrix op;
    ComplexSignal f;
    std::vector<std::pair<Eigen::Index, cplx>> slots;
  };
  struct Jump {
    SparseMatrix a, b;
    ComplexSignal c;
  };
  // Sandwich terms sharing the left operator A, merged as
  // sum_j c_j A x B_j^dagger = A x W^T with W = sum_j c_j conj(B_j).
  struct Group {
    SparseMatrix a;
    SparseMatrix w;  ///< union pattern of the B_j; values refreshed per t
    std::vector<std::pair<ComplexSignal, std::vector<std::pair<Eigen::Index, cplx>>>> members;
    // rows of w holding exactly one entry: (row, column, slot)
    std::vector<int> row, col, slot;
    bool single = true;  ///< no row of w holds more than one entry
  };

  static constexpr int kTile = 32;

  static void blocked_adjoint(const DenseMatrix& x, DenseMatrix& out) {
    const Eigen::Index n = x.rows();
    for (Eigen::Index ib = 0; ib < n; ib += kTile)
      for (Eigen::Index jb = 0; jb < n; jb += kTile) {
        const Eigen::Index ie = std::min(n, ib + kTile), je = std::min(n, jb + kTile);
        for (Eigen::Index i = ib; i < ie; ++i)
          for (Eigen::Index j = jb; j < je; ++j) out(j, i) = std::conj(x(i, j));
      }
  }

  // out = a + b^dagger; with `hermitian` set (a == b) only one triangle is
  // computed and mirrored.
  static void add_adjoint(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& out,
                          bool hermitian) {
    const Eigen::Index n = a.rows();
    for (Eigen::Index ib = 0; ib < n; ib += kTile)
      for (Eigen::Index jb = hermitian ? ib : 0; jb < n; jb += kTile) {
        const Eigen::Index ie = std::min(n, ib + kTile), je = std::min(n, jb + kTile);
        for (Eigen::Index i = ib; i < ie; ++i) {
          const double* ar = reinterpret_cast<const double*>(a.data() + i * n);
          double* orow = reinterpret_cast<double*>(out.data() + i * n);
          for (Eigen::Index j = jb; j < je; ++j) {
            const double* bj = reinterpret_cast<const double*>(b.data() + j * n + i);
            const double re = ar[2 * j] + bj[0], im = ar[2 * j + 1] - bj[1];
            orow[2 * j] = re;
            orow[2 * j + 1] = im;
            if (hermitian) {
              double* o2 = reinterpret_cast<double*>(out.data() + j * n + i);
              o2[0] = re;
              o2[1] = -im;
            }
          }
        }
      }
  }

  static bool same_matrix(const SparseMatrix& x, const SparseMatrix& y) {
    if (x.nonZeros() != y.nonZeros()) return false;
    return SparseMatrix(x - y).norm() == 0.0;
  }

  void build_groups() {
    for (auto& j : jumps_) {
      auto it = std::find_if(groups_.begin(), groups_.end(),
                             [&j](const Group& g) { return same_matrix(g.a, j.a); });
      if (it == groups_.end()) {
        groups_.push_back({});
        it = std::prev(groups_.end());
        it->a = j.a;
        it->a.makeCompressed();
      }
      it->members.push_back({j.c, {}});
    }
    std::size_t gi = 0;
    std::vector<std::size_t> member_of(jumps_.size());
    for (std::size_t k = 0; k < jumps_.size(); ++k) {
      for (gi = 0; !same_matrix(groups_[gi].a, jumps_[k].a); ++gi) {
      }
      member_of[k] = gi;
    }
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      auto& grp = groups_[g];
      std::vector<Eigen::Triplet<cplx>> trips;
      for (std::size_t k = 0; k < jumps_.size(); ++k)
        if (member_of[k] == g)
          for (Eigen::Index r = 0; r < jumps_[k].b.outerSize(); ++r)
            for (SparseMatrix::InnerIterator it(jumps_[k].b, r); it; ++it)
              trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), cplx(1.0));
      grp.w.resize(dim_, dim_);
      grp.w.setFromTriplets(trips.begin(), trips.end());
      grp.w.makeCompressed();
      const auto* outer = grp.w.outerIndexPtr();
      const auto* inner = grp.w.innerIndexPtr();
      std::size_t m = 0;
      for (std::size_t k = 0; k < jumps_.size(); ++k) {
        if (member_of[k] != g) continue;
        auto& slots = grp.members[m++].second;
        for (Eigen::Index r = 0; r < jumps_[k].b.outerSize(); ++r)
          for (SparseMatrix::InnerIterator it(jumps_[k].b, r); it; ++it) {
            const auto* pos = std::lower_bound(inner + outer[r], inner + outer[r + 1], it.col());
            slots.emplace_back(pos - inner, std::conj(it.value()));
          }
      }
      for (int r = 0; r < dim_; ++r) {
        const auto cnt = outer[r + 1] - outer[r];
        if (cnt > 1) grp.single = false;
        if (cnt == 1) {
          grp.row.push_back(r);
          grp.col.push_back(inner[outer[r]]);
          grp.slot.push_back(outer[r]);
        }
      }
    }
  }

  void build_pattern() {
    build_groups();
    std::vector<Eigen::Triplet<cplx>> trips;
    for (const auto& l : left_)
      for (Eigen::Index i = 0; i < l.op.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(l.op, i); it; ++it)
          trips.emplace_back(static_cast<int>(it.row()),
                             static_cast<int>(it.col()), cplx(1.0));
    k_.resize(dim_, dim_);
    k_.setFromTriplets(trips.begin(), trips.end());
    k_.makeCompressed();
    const auto* outer = k_.outerIndexPtr();
    const auto* inner = k_.innerIndexPtr();
    for (auto& l : left_)
      for (Eigen::Index i = 0; i < l.op.outerSize(); ++i)
        for (SparseMatrix::InnerIterator it(l.op, i); it; ++it) {
          const auto* first = inner + outer[i];
          const auto* last = inner + outer[i + 1];
          const auto* pos = std::lower_bound(first, last, it.col());
          l.slots.emplace_back(pos - inner, it.value());
        }
  }

  // g = K(t) x + sum_j c_j A_j x B_j^dagger. The sandwich is built row by
  // row: (x B^dagger)[k, n] = sum over B's row n of conj(beta) x[k, m].
  void half(double t, const DenseMatrix& x, DenseMatrix& g, Workspace& w) const {
    cplx* vals = w.k.valuePtr();
    std::fill(vals, vals + w.k.nonZeros(), cplx(0.0));
    for (const auto& l : left_) {
      const cplx f = l.f(t);
      if (f == cplx(0.0)) continue;
      for (const auto& [idx, v] : l.slots) vals[idx] += f * v;
    }
    const Eigen::Index n = dim_;
    g.resize(n, n);
    {
      const auto* outer = w.k.outerIndexPtr();
      const auto* inner = w.k.innerIndexPtr();
      const double* kv = reinterpret_cast<const double*>(w.k.valuePtr());
      for (Eigen::Index i = 0; i < n; ++i) {
        double* gr = reinterpret_cast<double*>(g.data() + i * n);
        std::fill(gr, gr + 2 * n, 0.0);
        for (auto p = outer[i]; p < outer[i + 1]; ++p) {
          const double vr = kv[2 * p], vi = kv[2 * p + 1];
          const double* xr = reinterpret_cast<const double*>(x.data() + inner[p] * n);
          for (Eigen::Index c = 0; c < n; ++c) {
            gr[2 * c] += vr * xr[2 * c] - vi * xr[2 * c + 1];
            gr[2 * c + 1] += vr * xr[2 * c + 1] + vi * xr[2 * c];
          }
        }
      }
    }
    for (std::size_t gi = 0; gi < groups_.size(); ++gi) {
      const auto& grp = groups_[gi];
      auto& wv = w.w[gi];
      std::fill(wv.begin(), wv.end(), cplx(0.0));
      bool any = false;
      for (const auto& [c, slots] : grp.members) {
        const cplx f = c(t);
        if (f == cplx(0.0)) continue;
        any = true;
        for (const auto& [idx, v] : slots) wv[static_cast<std::size_t>(idx)] += f * v;
      }
      if (!any) continue;
      // plain arithmetic: std::complex products go through the NaN-safe
      // library routine
      const double* wd = reinterpret_cast<const double*>(wv.data());
      for (Eigen::Index i = 0; i < grp.a.outerSize(); ++i) {
        double* gr = reinterpret_cast<double*>(g.data() + i * n);
        for (SparseMatrix::InnerIterator it(grp.a, i); it; ++it) {
          const double ar = it.value().real(), ai = it.value().imag();
          const double* xr = reinterpret_cast<const double*>(x.data() + it.col() * n);
          if (grp.single) {
            const std::size_t len = grp.row.size();
            for (std::size_t q = 0; q < len; ++q) {
              const int r = grp.row[q], m = grp.col[q], p = grp.slot[q];
              const double vr = ar * wd[2 * p] - ai * wd[2 * p + 1];
              const double vi = ar * wd[2 * p + 1] + ai * wd[2 * p];
              const double xre = xr[2 * m], xim = xr[2 * m + 1];
              gr[2 * r] += vr * xre - vi * xim;
              gr[2 * r + 1] += vr * xim + vi * xre;
            }
            continue;
          }
          const auto* outer = grp.w.outerIndexPtr();
          const auto* inner = grp.w.innerIndexPtr();
          for (Eigen::Index col = 0; col < n; ++col) {
            double sr = 0.0, si = 0.0;
            for (auto p = outer[col]; p < outer[col + 1]; ++p) {
              const double br = wd[2 * p], bi = wd[2 * p + 1];
              const double xre = xr[2 * inner[p]], xim = xr[2 * inner[p] + 1];
              sr += br * xre - bi * xim;
              si += br * xim + bi * xre;
            }
            gr[2 * col] += ar * sr - ai * si;
            gr[2 * col + 1] += ar * si + ai * sr;
          }
        }
      }
    }
  }

  int dim_;
  std::vector<Left> left_;
  std::vector<Jump> jumps_;
  std::vector<Group> groups_;
  SparseMatrix k_;
};

inline const LiouvillianModel::Generator& LiouvillianModel::generator() const {
  if (!compiled_) compiled_ = std::make_shared<const Generator>(*this);
  return *compiled_;
}

/// dρ/dt at time t.
inline DenseMatrix lindblad_rhs(const LiouvillianModel& model,
                                const DensityMatrix& rho, double t) {
  require_same_layout(model.layout(), rho.layout(), "lindblad_rhs");
  const auto& gen = model.generator();
  auto ws = gen.make_workspace();
  DenseMatrix out;
  gen.apply_general(t, rho.matrix(), out, ws);
  return out;
}

/// Observable sampled during integration.
struct Observer {
  std::string name;
  std::function<double(double, const DensityMatrix&)> fn;
};

inline Observer observe_expectation(std::string name, SparseOperator op) {
  return {std::move(name), [op = std::move(op)](double, const DensityMatrix& r) {
            return expectation(op, r).real();
          }};
}

struct StepControl {
  double dt = 0.0;        ///< explicit step; 0 selects the default rule
  double dt_scale = 1.0;  ///< multiplies the default step
  int sample_points = 201;  ///< observer samples across the window (>= 2)
  bool keep_snapshots = false;
  bool allow_halving = true;
  bool check_positivity = false;  ///< eigenvalue check at every sample
};

struct TimeSeries {
  std::vector<std::string> names;
  std::vector<double> t;
  std::vector<std::vector<double>> values;
  std::vector<DensityMatrix> snapshots;
  DensityMatrix final_state;
  double dt = 0.0;
  long steps = 0;
  double max_trace_drift = 0.0;
  double min_eigenvalue = 0.0;
  double wall_seconds = 0.0;
};

/// Default step: min(2π/(20 ω_max), 0.01 / rate_max), times dt_scale.
inline double default_step(const LiouvillianModel& model, double t0, double t1,
                           double dt_scale = 1.0) {
  double dt = std::numeric_limits<double>::infinity();
  if (const double w = model.max_oscillation(); w > 0.0)
    dt = 2.0 * kPi / (20.0 * w);
  if (const double r = model.max_rate(t0, t1); r > 0.0) dt = std::min(dt, 0.01 / r);
  if (!std::isfinite(dt)) dt = (t1 - t0) / 1000.0;
  return dt * dt_scale;
}

namespace detail {

inline void check_finite(const DenseMatrix& m, double t) {
  if (!m.allFinite())
    throw IntegrationError("NaN/Inf in density matrix at t = " + std::to_string(t));
}

/// One classical RK4 step using the Hermitian generator path.
struct Rk4 {
  const LiouvillianModel::Generator& gen;
  LiouvillianModel::Generator::Workspace ws;
  DenseMatrix k1, k2, k3, k4, tmp;
  bool general = false;

  explicit Rk4(const LiouvillianModel::Generator& g, bool general_path = false)
      : gen(g), ws(g.make_workspace()), general(general_path) {}

  void eval(double t, const DenseMatrix& x, DenseMatrix& out) {
    if (general)
      gen.apply_general(t, x, out, ws);
    else
      gen.apply_hermitian(t, x, out, ws);
  }

  void step(double t, double h, DenseMatrix& x) {
    eval(t, x, k1);
    tmp = x + (0.5 * h) * k1;
    eval(t + 0.5 * h, tmp, k2);
    tmp = x + (0.5 * h) * k2;
    eval(t + 0.5 * h, tmp, k3);
    tmp = x + h * k3;
    eval(t + h, tmp, k4);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
};

inline void symmetrize(DenseMatrix& x, DenseMatrix& scratch) {
  scratch = x.adjoint();
  x += scratch;
  x *= 0.5;
}

}  // namespace detail

/// Fixed-step RK4 propagation of ρ over [t_start, t_end].
inline TimeSeries integrate(const LiouvillianModel& model, const DensityMatrix& rho0,
                            double t_start, double t_end,
                            const StepControl& ctl = {},
                            const std::vector<Observer>& observers = {}) {
  require_same_layout(model.layout(), rho0.layout(), "integrate");
  if (!(t_end > t_start)) throw DomainError("integrate needs t_end > t_start");
  const auto wall0 = std::chrono::steady_clock::now();

  const double w_max = model.max_oscillation();
  double dt = ctl.dt > 0.0 ? ctl.dt * ctl.dt_scale
                           : default_step(model, t_start, t_end, ctl.dt_scale);
  if (w_max > 0.0 && dt > 2.0 * kPi / (20.0 * w_max) * (1.0 + 1e-12))
    throw DomainError("step " + std::to_string(dt) +
                      " does not resolve oscillation at omega = " +
                      std::to_string(w_max));
  const double span = t_end - t_start;
  const long n_steps = std::max(1L, static_cast<long>(std::ceil(span / dt - 1e-9)));
  dt = span / static_cast<double>(n_steps);

  TimeSeries ts;
  ts.dt = dt;
  for (const auto& o : observers) ts.names.push_back(o.name);
  const int samples = std::max(2, ctl.sample_points);
  std::vector<long> sample_steps;
  for (int s = 0; s < samples; ++s)
    sample_steps.push_back(static_cast<long>(
        std::llround(static_cast<double>(n_steps) * s / (samples - 1))));

  const auto& layout = model.layout();
  DenseMatrix rho = rho0.matrix();
  DenseMatrix scratch;
  detail::Rk4 rk(model.generator());
  const cplx trace0 = rho.trace();
  ts.min_eigenvalue = std::numeric_limits<double>::infinity();

  auto record = [&](double t) {
    DensityMatrix snap(layout, rho);
    std::vector<double> row;
    row.reserve(observers.size());
    for (const auto& o : observers) row.push_back(o.fn(t, snap));
    ts.t.push_back(t);
    ts.values.push_back(std::move(row));
    if (ctl.check_positivity)
      ts.min_eigenvalue = std::min(ts.min_eigenvalue, snap.min_eigenvalue());
    if (ctl.keep_snapshots) ts.snapshots.push_back(std::move(snap));
  };

  std::size_t next_sample = 0;
  auto maybe_record = [&](long step, double t) {
    while (next_sample < sample_steps.size() && sample_steps[next_sample] == step) {
      record(t);
      ++next_sample;
    }
  };
  maybe_record(0, t_start);

  DenseMatrix backup;
  for (long s = 0; s < n_steps; ++s) {
    const double t = t_start + dt * static_cast<double>(s);
    const cplx before = rho.trace();
    if (ctl.allow_halving) backup = rho;
    rk.step(t, dt, rho);
    if (ctl.allow_halving && std::abs(rho.trace() - before) > 1e-10) {
      // Retry the step as two half steps.
      rho = backup;
      rk.step(t, 0.5 * dt, rho);
      rk.step(t + 0.5 * dt, 0.5 * dt, rho);
    }
    detail::symmetrize(rho, scratch);
    const double drift = std::abs(rho.trace() - trace0);
    ts.max_trace_drift = std::max(ts.max_trace_drift, drift);
    if (drift > 1e-6 || !std::isfinite(drift)) {
      detail::check_finite(rho, t + dt);
      throw IntegrationError("trace drift " + std::to_string(drift) +
                             " exceeds 1e-6 at t = " + std::to_string(t + dt));
    }
    if ((s & 255) == 0) detail::check_finite(rho, t + dt);
    maybe_record(s + 1, s + 1 == n_steps ? t_end : t + dt);
  }
  detail::check_finite(rho, t_end);
  ts.steps = n_steps;
  ts.final_state = DensityMatrix(layout, rho);
  if (!ctl.check_positivity) ts.min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  ts.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  return ts;
}

/// Trace norm of a Hermitian matrix.
inline double trace_norm_hermitian(const DenseMatrix& h) {
  Eigen::MatrixXcd m = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

struct SteadyStateOptions {
  double tol = 1e-6;
  double t_max = 1e3;
  double t_start = 0.0;
  StepControl step;
  /// Probe interval; 0 selects one period of the slowest oscillation, or
  /// the inverse of the slowest damping rate when nothing oscillates.
  double probe = 0.0;
};

struct SteadyStateResult {
  DensityMatrix rho;  ///< time average over the final probe interval
  double t_reached = 0.0;
  double residual = 0.0;  ///< ||rho(t+Δ) - rho(t)||_1 at exit
  double probe = 0.0;
  long steps = 0;
  double wall_seconds = 0.0;
};

/// Integrates until one probe interval changes ρ by less than tol in trace
/// norm, then returns the average over that interval.
inline SteadyStateResult steady_state(const LiouvillianModel& model,
                                      const DensityMatrix& rho0,
                                      const SteadyStateOptions& opt = {}) {
  require_same_layout(model.layout(), rho0.layout(), "steady_state");
  if (!model.has_damping())
    throw DomainError("steady_state needs at least one damping channel");
  const auto wall0 = std::chrono::steady_clock::now();
  const double t0 = opt.t_start;
  double probe = opt.probe;
  if (probe <= 0.0) {
    if (const double w = model.min_oscillation(); w > 0.0)
      probe = 2.0 * kPi / w;
    else
      probe = 1.0 / model.min_damping_rate(t0, t0 + opt.t_max);
  }
  if (!std::isfinite(probe) || probe <= 0.0)
    throw DomainError("cannot determine a probe interval");

  const double w_max = model.max_oscillation();
  double dt = opt.step.dt > 0.0
                  ? opt.step.dt * opt.step.dt_scale
                  : default_step(model, t0, t0 + opt.t_max, opt.step.dt_scale);
  if (w_max > 0.0 && dt > 2.0 * kPi / (20.0 * w_max) * (1.0 + 1e-12))
    throw DomainError("step does not resolve the fastest oscillation");
  const long per_probe = std::max(1L, static_cast<long>(std::ceil(probe / dt - 1e-9)));
  dt = probe / static_cast<double>(per_probe);

  DenseMatrix rho = rho0.matrix();
  DenseMatrix scratch, mean, start;
  detail::Rk4 rk(model.generator());
  const cplx trace0 = rho.trace();
  double t = t0;
  long steps = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (t < t0 + opt.t_max - 1e-12) {
    start = rho;
    mean = 0.5 * rho;
    for (long s = 0; s < per_probe; ++s) {
      rk.step(t, dt, rho);
      detail::symmetrize(rho, scratch);
      t += dt;
      mean += (s + 1 == per_probe ? 0.5 : 1.0) * rho;
    }
    steps += per_probe;
    mean /= static_cast<double>(per_probe);
    detail::check_finite(rho, t);
    if (std::abs(rho.trace() - trace0) > 1e-6)
      throw IntegrationError("trace drift beyond 1e-6 during steady-state search");
    const DenseMatrix diff = rho - start;
    const double fro = diff.norm();
    // ||.||_F <= ||.||_1, so the eigen-decomposition is only needed close
    // to convergence.
    residual = fro >= opt.tol ? fro : trace_norm_hermitian(diff);
    if (residual < opt.tol) {
      SteadyStateResult r;
      r.rho = DensityMatrix(model.layout(), mean);
      r.t_reached = t;
      r.residual = residual;
      r.probe = probe;
      r.steps = steps;
      r.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
      return r;
    }
  }
  throw ConvergenceError("no steady state by t = " + std::to_string(t) +
                             " (last residual " + std::to_string(residual) + ")",
                         residual);
}

}  // namespace qst
