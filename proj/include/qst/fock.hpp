#pragma once

// Truncated Fock-space linear algebra on a set of bosonic modes.
//
// Basis ordering is row-major over the declared mode order: the last mode
// varies fastest. A layout may additionally carry a cap on the total number
// of quanta; basis states exceeding it are dropped and the survivors keep
// their relative row-major order.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qst/errors.hpp"

namespace qst {

using cplx = std::complex<double>;
using DenseMatrix =
    Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DenseVector = Eigen::VectorXcd;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr cplx kI{0.0, 1.0};

struct Mode {
  std::string name;
  int dim = 0;
};

class ModeLayout {
 public:
  explicit ModeLayout(std::vector<Mode> modes,
                      std::optional<int> max_excitations = std::nullopt)
      : modes_(std::move(modes)), cap_(max_excitations) {
    if (modes_.empty()) throw LayoutError("layout needs at least one mode");
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      if (modes_[i].dim < 2)
        throw LayoutError("mode '" + modes_[i].name + "' has dim " +
                          std::to_string(modes_[i].dim) + " (< 2)");
      for (std::size_t j = 0; j < i; ++j)
        if (modes_[j].name == modes_[i].name)
          throw LayoutError("duplicate mode name '" + modes_[i].name + "'");
    }
    if (cap_ && *cap_ < 0) throw LayoutError("negative excitation cap");

    strides_.assign(modes_.size(), 1);
    for (std::size_t k = modes_.size(); k-- > 1;)
      strides_[k - 1] = strides_[k] * modes_[k].dim;
    product_dim_ = strides_[0] * modes_[0].dim;

    const std::size_t n = modes_.size();
    index_of_product_.assign(product_dim_, -1);
    std::vector<int> occ(n, 0);
    for (int p = 0; p < product_dim_; ++p) {
      int rem = p, total = 0;
      for (std::size_t k = 0; k < n; ++k) {
        occ[k] = rem / strides_[k];
        rem %= strides_[k];
        total += occ[k];
      }
      if (cap_ && total > *cap_) continue;
      index_of_product_[p] = static_cast<int>(product_of_index_.size());
      product_of_index_.push_back(p);
      occupations_.insert(occupations_.end(), occ.begin(), occ.end());
    }
  }

  static std::shared_ptr<const ModeLayout> make(
      std::vector<Mode> modes, std::optional<int> max_excitations = {}) {
    return std::make_shared<const ModeLayout>(std::move(modes),
                                              max_excitations);
  }

  const std::vector<Mode>& modes() const noexcept { return modes_; }
  std::size_t mode_count() const noexcept { return modes_.size(); }
  std::optional<int> max_excitations() const noexcept { return cap_; }

  /// Number of retained basis states.
  int total_dim() const noexcept {
    return static_cast<int>(product_of_index_.size());
  }
  /// Product of the mode dimensions, ignoring any excitation cap.
  int product_dim() const noexcept { return product_dim_; }
  int stride(std::size_t mode) const { return strides_.at(mode); }

  std::size_t mode_index(std::string_view name) const {
    for (std::size_t i = 0; i < modes_.size(); ++i)
      if (modes_[i].name == name) return i;
    throw LayoutError("unknown mode '" + std::string(name) + "'");
  }
  bool has_mode(std::string_view name) const noexcept {
    return std::any_of(modes_.begin(), modes_.end(),
                       [&](const Mode& m) { return m.name == name; });
  }

  std::span<const int> occupations(int index) const {
    return {occupations_.data() + static_cast<std::size_t>(index) * modes_.size(),
            modes_.size()};
  }

  /// Basis index of an occupation tuple, or -1 if truncated away.
  int index_of(std::span<const int> occ) const {
    if (occ.size() != modes_.size())
      throw LayoutError("occupation tuple has wrong length");
    int p = 0;
    for (std::size_t k = 0; k < occ.size(); ++k) {
      if (occ[k] < 0 || occ[k] >= modes_[k].dim) return -1;
      p += occ[k] * strides_[k];
    }
    return index_of_product_[p];
  }

  friend bool operator==(const ModeLayout& a, const ModeLayout& b) {
    if (a.cap_ != b.cap_ || a.modes_.size() != b.modes_.size()) return false;
    for (std::size_t i = 0; i < a.modes_.size(); ++i)
      if (a.modes_[i].name != b.modes_[i].name ||
          a.modes_[i].dim != b.modes_[i].dim)
        return false;
    return true;
  }

  std::string describe() const {
    std::string s = "[";
    for (std::size_t i = 0; i < modes_.size(); ++i) {
      if (i) s += ", ";
      s += modes_[i].name + ":" + std::to_string(modes_[i].dim);
    }
    s += "]";
    if (cap_) s += " cap " + std::to_string(*cap_);
    return s;
  }

 private:
  std::vector<Mode> modes_;
  std::optional<int> cap_;
  std::vector<int> strides_;
  int product_dim_ = 0;
  std::vector<int> index_of_product_;
  std::vector<int> product_of_index_;
  std::vector<int> occupations_;
};

using LayoutPtr = std::shared_ptr<const ModeLayout>;

inline void require_same_layout(const LayoutPtr& a, const LayoutPtr& b,
                                std::string_view what) {
  if (a == b) return;
  if (!a || !b || !(*a == *b))
    throw LayoutError(std::string(what) + ": layout mismatch (" +
                      (a ? a->describe() : "null") + " vs " +
                      (b ? b->describe() : "null") + ")");
}

/// Sparse operator on the joint space of a layout.
class SparseOperator {
 public:
  SparseOperator() = default;
  SparseOperator(LayoutPtr layout, SparseMatrix m)
      : layout_(std::move(layout)), m_(std::move(m)) {
    m_.makeCompressed();
  }

  const LayoutPtr& layout() const noexcept { return layout_; }
  const SparseMatrix& matrix() const noexcept { return m_; }
  Eigen::Index nonzeros() const { return m_.nonZeros(); }

  SparseOperator adjoint() const {
    SparseMatrix a = m_.adjoint();
    return {layout_, std::move(a)};
  }
  DenseMatrix dense() const { return DenseMatrix(m_); }

  friend SparseOperator operator*(const SparseOperator& a,
                                  const SparseOperator& b) {
    require_same_layout(a.layout_, b.layout_, "operator product");
    SparseMatrix p = a.m_ * b.m_;
    p.prune(cplx(0.0));
    return {a.layout_, std::move(p)};
  }
  friend SparseOperator operator+(const SparseOperator& a,
                                  const SparseOperator& b) {
    require_same_layout(a.layout_, b.layout_, "operator sum");
    SparseMatrix s = a.m_ + b.m_;
    return {a.layout_, std::move(s)};
  }
  friend SparseOperator operator-(const SparseOperator& a,
                                  const SparseOperator& b) {
    require_same_layout(a.layout_, b.layout_, "operator difference");
    SparseMatrix s = a.m_ - b.m_;
    return {a.layout_, std::move(s)};
  }
  friend SparseOperator operator*(cplx c, const SparseOperator& a) {
    SparseMatrix s = c * a.m_;
    return {a.layout_, std::move(s)};
  }
  friend SparseOperator operator*(double c, const SparseOperator& a) {
    return cplx(c) * a;
  }
  SparseOperator operator-() const { return -1.0 * *this; }

 private:
  LayoutPtr layout_;
  SparseMatrix m_;
};

/// Commutator [A, B].
inline SparseOperator commutator(const SparseOperator& a,
                                 const SparseOperator& b) {
  return a * b - b * a;
}

/// Embeds a single-mode matrix (dim x dim of the named mode) into the joint
/// space. Transitions leaving the retained basis are dropped.
inline SparseOperator embed(const LayoutPtr& layout, std::string_view mode,
                            const Eigen::MatrixXcd& local) {
  const std::size_t k = layout->mode_index(mode);
  const int d = layout->modes()[k].dim;
  if (local.rows() != d || local.cols() != d)
    throw LayoutError("local operator for mode '" + std::string(mode) +
                      "' must be " + std::to_string(d) + "x" +
                      std::to_string(d));
  const int n = layout->total_dim();
  std::vector<Eigen::Triplet<cplx>> trips;
  std::vector<int> occ(layout->mode_count());
  for (int col = 0; col < n; ++col) {
    auto src = layout->occupations(col);
    std::copy(src.begin(), src.end(), occ.begin());
    const int from = occ[k];
    for (int to = 0; to < d; ++to) {
      const cplx v = local(to, from);
      if (v == cplx(0.0)) continue;
      occ[k] = to;
      const int row = layout->index_of(occ);
      if (row >= 0) trips.emplace_back(row, col, v);
    }
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return {layout, std::move(m)};
}

inline Eigen::MatrixXcd local_lowering(int dim) {
  Eigen::MatrixXcd b = Eigen::MatrixXcd::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) b(n - 1, n) = std::sqrt(static_cast<double>(n));
  return b;
}

/// Lowering operator of one mode, tensor-embedded.
inline SparseOperator annihilation(const LayoutPtr& layout,
                                   std::string_view mode) {
  const std::size_t k = layout->mode_index(mode);
  return embed(layout, mode, local_lowering(layout->modes()[k].dim));
}

inline SparseOperator creation(const LayoutPtr& layout, std::string_view mode) {
  return annihilation(layout, mode).adjoint();
}

/// Diagonal b†b, exact on every retained level (including the top one).
inline SparseOperator number(const LayoutPtr& layout, std::string_view mode) {
  const std::size_t k = layout->mode_index(mode);
  const int d = layout->modes()[k].dim;
  Eigen::MatrixXcd nn = Eigen::MatrixXcd::Zero(d, d);
  for (int i = 0; i < d; ++i) nn(i, i) = static_cast<double>(i);
  return embed(layout, mode, nn);
}

inline SparseOperator identity(const LayoutPtr& layout) {
  SparseMatrix m(layout->total_dim(), layout->total_dim());
  m.setIdentity();
  return {layout, std::move(m)};
}

/// Pure state on a layout.
class StateVector {
 public:
  StateVector() = default;
  /// Wraps amplitudes; rejects anything not normalized to 1e-12.
  StateVector(LayoutPtr layout, DenseVector amps)
      : layout_(std::move(layout)), amps_(std::move(amps)) {
    if (amps_.size() != layout_->total_dim())
      throw LayoutError("state length " + std::to_string(amps_.size()) +
                        " does not match layout dimension " +
                        std::to_string(layout_->total_dim()));
    const double nrm = amps_.norm();
    if (std::abs(nrm - 1.0) > 1e-12)
      throw DomainError("state norm " + std::to_string(nrm) + " is not 1");
  }

  static StateVector normalized(LayoutPtr layout, DenseVector amps) {
    const double nrm = amps.norm();
    if (!(nrm > 0.0)) throw DomainError("cannot normalize a zero vector");
    amps /= nrm;
    return {std::move(layout), std::move(amps)};
  }

  const LayoutPtr& layout() const noexcept { return layout_; }
  const DenseVector& amplitudes() const noexcept { return amps_; }
  cplx operator[](int i) const { return amps_(i); }

 private:
  LayoutPtr layout_;
  DenseVector amps_;
};

/// Mixed state on a layout.
class DensityMatrix {
 public:
  DensityMatrix() = default;
  DensityMatrix(LayoutPtr layout, DenseMatrix rho)
      : layout_(std::move(layout)), rho_(std::move(rho)) {
    const int n = layout_->total_dim();
    if (rho_.rows() != n || rho_.cols() != n)
      throw LayoutError("density matrix shape does not match layout");
  }

  static DensityMatrix pure(const StateVector& psi) {
    const auto& v = psi.amplitudes();
    DenseMatrix r = v * v.adjoint();
    return {psi.layout(), std::move(r)};
  }

  const LayoutPtr& layout() const noexcept { return layout_; }
  const DenseMatrix& matrix() const noexcept { return rho_; }
  cplx operator()(int i, int j) const { return rho_(i, j); }
  cplx trace() const { return rho_.trace(); }

  double hermiticity_error() const {
    return (rho_ - rho_.adjoint()).cwiseAbs().maxCoeff();
  }
  double min_eigenvalue() const {
    Eigen::MatrixXcd h = 0.5 * (rho_ + rho_.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h,
                                                       Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
  }

  /// Hermitian to 1e-12, unit trace to 1e-10, eigenvalues >= -1e-8.
  void validate(double herm_tol = 1e-12, double trace_tol = 1e-10,
                double eig_tol = 1e-8) const {
    if (double h = hermiticity_error(); h > herm_tol)
      throw DomainError("density matrix not Hermitian (" + std::to_string(h) +
                        ")");
    if (double t = std::abs(trace() - 1.0); t > trace_tol)
      throw DomainError("density matrix trace off by " + std::to_string(t));
    if (double e = min_eigenvalue(); e < -eig_tol)
      throw DomainError("density matrix has eigenvalue " + std::to_string(e));
  }

 private:
  LayoutPtr layout_;
  DenseMatrix rho_;
};

/// Product Fock state |n_1, n_2, ...>.
inline StateVector fock_state(const LayoutPtr& layout,
                              std::span<const int> occupations) {
  if (occupations.size() != layout->mode_count())
    throw LayoutError("expected " + std::to_string(layout->mode_count()) +
                      " occupations, got " +
                      std::to_string(occupations.size()));
  for (std::size_t k = 0; k < occupations.size(); ++k)
    if (occupations[k] < 0 || occupations[k] >= layout->modes()[k].dim)
      throw TruncationError("occupation " + std::to_string(occupations[k]) +
                            " of mode '" + layout->modes()[k].name +
                            "' exceeds dim " +
                            std::to_string(layout->modes()[k].dim));
  const int idx = layout->index_of(occupations);
  if (idx < 0)
    throw TruncationError("occupations exceed the layout excitation cap");
  DenseVector v = DenseVector::Zero(layout->total_dim());
  v(idx) = 1.0;
  return {layout, std::move(v)};
}

inline StateVector fock_state(const LayoutPtr& layout,
                              std::initializer_list<int> occupations) {
  std::vector<int> occ(occupations);
  return fock_state(layout, std::span<const int>(occ));
}

inline StateVector vacuum(const LayoutPtr& layout) {
  std::vector<int> occ(layout->mode_count(), 0);
  return fock_state(layout, std::span<const int>(occ));
}

/// sum_n c_n |n> on one mode, vacuum on all others.
inline StateVector superposition_state(const LayoutPtr& layout,
                                       std::string_view mode,
                                       std::span<const cplx> coeffs) {
  const std::size_t k = layout->mode_index(mode);
  if (coeffs.empty()) throw DomainError("empty coefficient list");
  if (static_cast<int>(coeffs.size()) > layout->modes()[k].dim)
    throw TruncationError(std::to_string(coeffs.size()) +
                          " coefficients exceed dim of mode '" +
                          std::string(mode) + "'");
  double norm2 = 0.0;
  for (const auto& c : coeffs) norm2 += std::norm(c);
  if (std::abs(norm2 - 1.0) > 1e-12)
    throw DomainError("coefficients are not normalized: sum |c_n|^2 = " +
                      std::to_string(norm2));
  DenseVector v = DenseVector::Zero(layout->total_dim());
  std::vector<int> occ(layout->mode_count(), 0);
  for (std::size_t n = 0; n < coeffs.size(); ++n) {
    occ[k] = static_cast<int>(n);
    const int idx = layout->index_of(occ);
    if (idx < 0) {
      if (coeffs[n] != cplx(0.0))
        throw TruncationError("coefficient beyond the excitation cap");
      continue;
    }
    v(idx) = coeffs[n];
  }
  return StateVector::normalized(layout, std::move(v));
}

/// Fock-basis amplitudes of the squeezed vacuum with <b†b> = N and
/// <b b> = M, for levels 0..n_levels-1. Only even levels are nonzero.
/// Not renormalized: the infinite series has unit norm.
inline std::vector<cplx> squeezed_vacuum_coefficients(double N, cplx M,
                                                      int n_levels) {
  if (N < 0.0) throw DomainError("squeezed vacuum needs N >= 0");
  const double excess = std::norm(M) - N * (N + 1.0);
  if (excess > 1e-9)
    throw DomainError("unphysical squeezing: |M|^2 - N(N+1) = " +
                      std::to_string(excess));
  if (excess < -1e-9)
    throw DomainError("(N, M) is not a pure squeezed state: |M|^2 - N(N+1) = " +
                      std::to_string(excess));
  std::vector<cplx> c(static_cast<std::size_t>(n_levels), cplx(0.0));
  if (n_levels <= 0) return c;
  const cplx phase = std::abs(M) > 0.0 ? M / std::abs(M) : cplx(1.0);
  const cplx ratio = phase * std::sqrt(N / (N + 1.0));
  double ladder = 1.0;  // sqrt((2k)!) / (2^k k!)
  cplx power = 1.0;
  const double head = std::pow(N + 1.0, -0.25);
  for (int k = 0; 2 * k < n_levels; ++k) {
    c[static_cast<std::size_t>(2 * k)] = head * power * ladder;
    power *= ratio;
    ladder *= std::sqrt((2.0 * k + 1.0) / (2.0 * k + 2.0));
  }
  return c;
}

/// Single-mode squeezed vacuum with <b†b> = N, <b b> = M, truncated to dim
/// levels and renormalized. The discarded tail must stay below 1e-6.
inline StateVector squeezed_vacuum(int dim, double N, cplx M,
                                   std::string mode_name = "b",
                                   double tail_threshold = 1e-6) {
  auto coeffs = squeezed_vacuum_coefficients(N, M, dim);
  double kept = 0.0;
  for (const auto& c : coeffs) kept += std::norm(c);
  const double tail = 1.0 - kept;
  if (tail > tail_threshold)
    throw TruncationError("squeezed vacuum tail population " +
                          std::to_string(tail) + " beyond dim " +
                          std::to_string(dim));
  auto layout = ModeLayout::make({{std::move(mode_name), dim}});
  DenseVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = coeffs[static_cast<std::size_t>(i)];
  return StateVector::normalized(layout, std::move(v));
}

inline cplx expectation(const SparseOperator& op, const StateVector& psi) {
  require_same_layout(op.layout(), psi.layout(), "expectation");
  const auto& v = psi.amplitudes();
  DenseVector av = op.matrix() * v;
  return v.dot(av);
}

/// Tr(A X) for any square matrix X on the layout.
inline cplx trace_product(const SparseMatrix& a, const DenseMatrix& x) {
  cplx acc = 0.0;
  for (Eigen::Index i = 0; i < a.outerSize(); ++i)
    for (SparseMatrix::InnerIterator it(a, i); it; ++it)
      acc += it.value() * x(it.col(), i);
  return acc;
}

inline cplx expectation(const SparseOperator& op, const DensityMatrix& rho) {
  require_same_layout(op.layout(), rho.layout(), "expectation");
  return trace_product(op.matrix(), rho.matrix());
}

/// Reduced state on the kept modes (in layout order).
inline DensityMatrix partial_trace(const DensityMatrix& rho,
                                   std::span<const std::string> keep) {
  const auto& full = *rho.layout();
  if (keep.empty()) throw LayoutError("partial trace needs at least one mode");
  std::vector<bool> kept(full.mode_count(), false);
  for (const auto& name : keep) kept[full.mode_index(name)] = true;

  std::vector<Mode> kept_modes;
  int kept_total_max = 0;
  for (std::size_t k = 0; k < full.mode_count(); ++k)
    if (kept[k]) {
      kept_modes.push_back(full.modes()[k]);
      kept_total_max += full.modes()[k].dim - 1;
    }
  std::optional<int> cap = full.max_excitations();
  if (cap && *cap >= kept_total_max) cap.reset();
  auto reduced = ModeLayout::make(kept_modes, cap);

  const int n = full.total_dim();
  std::vector<int> red_index(static_cast<std::size_t>(n));
  std::vector<long> env_key(static_cast<std::size_t>(n));
  std::vector<int> occ_kept;
  for (int i = 0; i < n; ++i) {
    auto occ = full.occupations(i);
    occ_kept.clear();
    long key = 0;
    for (std::size_t k = 0; k < occ.size(); ++k) {
      if (kept[k]) {
        occ_kept.push_back(occ[k]);
      } else {
        key = key * full.modes()[k].dim + occ[k];
      }
    }
    red_index[static_cast<std::size_t>(i)] = reduced->index_of(occ_kept);
    env_key[static_cast<std::size_t>(i)] = key;
  }
  // Bucket basis states by environment configuration.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return env_key[static_cast<std::size_t>(a)] <
           env_key[static_cast<std::size_t>(b)];
  });
  DenseMatrix out = DenseMatrix::Zero(reduced->total_dim(), reduced->total_dim());
  const auto& m = rho.matrix();
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t stop = start;
    const long key = env_key[static_cast<std::size_t>(order[start])];
    while (stop < order.size() &&
           env_key[static_cast<std::size_t>(order[stop])] == key)
      ++stop;
    for (std::size_t a = start; a < stop; ++a)
      for (std::size_t b = start; b < stop; ++b) {
        const int i = order[a], j = order[b];
        out(red_index[static_cast<std::size_t>(i)],
            red_index[static_cast<std::size_t>(j)]) += m(i, j);
      }
    start = stop;
  }
  return {reduced, std::move(out)};
}

inline DensityMatrix partial_trace(const DensityMatrix& rho,
                                   std::initializer_list<std::string> keep) {
  std::vector<std::string> k(keep);
  return partial_trace(rho, std::span<const std::string>(k));
}

/// Tensor product of two states on single layouts, modes concatenated.
inline DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  std::vector<Mode> modes = a.layout()->modes();
  for (const auto& m : b.layout()->modes()) modes.push_back(m);
  if (a.layout()->max_excitations() || b.layout()->max_excitations())
    throw LayoutError("tensor product of capped layouts is not supported");
  auto layout = ModeLayout::make(modes);
  const auto& x = a.matrix();
  const auto& y = b.matrix();
  const Eigen::Index nb = y.rows();
  DenseMatrix out(x.rows() * nb, x.cols() * nb);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      out.block(i * nb, j * nb, nb, nb) = x(i, j) * y;
  return {layout, std::move(out)};
}

/// Largest population found in the top `levels` Fock levels of each mode
/// (and in the top shells of the excitation cap, when present).
struct TruncationReport {
  std::vector<std::pair<std::string, double>> per_mode;
  double cap_shell = 0.0;
  double max() const {
    double m = cap_shell;
    for (const auto& [_, p] : per_mode) m = std::max(m, p);
    return m;
  }
};

inline TruncationReport truncation_report(const DensityMatrix& rho,
                                          int levels = 2) {
  const auto& layout = *rho.layout();
  TruncationReport rep;
  std::vector<double> pops(layout.mode_count(), 0.0);
  for (int i = 0; i < layout.total_dim(); ++i) {
    const double p = rho(i, i).real();
    auto occ = layout.occupations(i);
    int total = 0;
    for (std::size_t k = 0; k < occ.size(); ++k) {
      if (occ[k] >= layout.modes()[k].dim - levels) pops[k] += p;
      total += occ[k];
    }
    if (auto cap = layout.max_excitations(); cap && total > *cap - levels)
      rep.cap_shell += p;
  }
  for (std::size_t k = 0; k < pops.size(); ++k)
    rep.per_mode.emplace_back(layout.modes()[k].name, pops[k]);
  return rep;
}

}  // namespace qst
