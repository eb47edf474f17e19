#pragma once

// Small dense complex linear algebra for qubit and two-qubit operators.
//
// Matrices are square, row-major, and limited to dimension 16. The two
// eigensolvers return values in descending order with a fixed phase gauge
// (first non-negligible component of every eigenvector real and positive).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "tolerances.hpp"

namespace qthermo {

using Complex = std::complex<double>;
using Ket = std::vector<Complex>;

inline constexpr std::size_t kMaxDim = 16;

class ComplexMatrix {
public:
  explicit ComplexMatrix(std::size_t dim) : dim_(dim), entries_(dim * dim) {
    check_dim(dim);
  }

  ComplexMatrix(std::size_t dim, std::vector<Complex> entries)
      : dim_(dim), entries_(std::move(entries)) {
    check_dim(dim);
    if (entries_.size() != dim_ * dim_) {
      throw ValidationError("ComplexMatrix: expected " + std::to_string(dim_ * dim_) +
                            " entries, got " + std::to_string(entries_.size()));
    }
    for (const auto& z : entries_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
        throw ValidationError("ComplexMatrix: non-finite entry");
      }
    }
  }

  /// Row-major nested initializer, e.g. {{1, 0}, {0, -1}}.
  ComplexMatrix(std::initializer_list<std::initializer_list<Complex>> rows)
      : ComplexMatrix(rows.size(), flatten(rows)) {}

  static ComplexMatrix identity(std::size_t dim) {
    ComplexMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  static ComplexMatrix diagonal(std::span<const double> values) {
    ComplexMatrix m(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }

  Complex& operator()(std::size_t r, std::size_t c) noexcept { return entries_[r * dim_ + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const noexcept {
    return entries_[r * dim_ + c];
  }

  std::span<const Complex> entries() const noexcept { return entries_; }

  ComplexMatrix adjoint() const {
    ComplexMatrix out(dim_);
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = 0; c < dim_; ++c) out(c, r) = std::conj((*this)(r, c));
    return out;
  }

  Complex trace() const noexcept {
    Complex t = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (const auto& z : entries_) m = std::max(m, std::abs(z));
    return m;
  }

  /// Largest element of |m - m^dagger|.
  double hermiticity_defect() const noexcept {
    double m = 0.0;
    for (std::size_t r = 0; r < dim_; ++r)
      for (std::size_t c = r; c < dim_; ++c)
        m = std::max(m, std::abs((*this)(r, c) - std::conj((*this)(c, r))));
    return m;
  }

  bool is_hermitian(double tol) const noexcept { return hermiticity_defect() <= tol; }

  ComplexMatrix& operator+=(const ComplexMatrix& o) {
    require_same_dim(o, "+");
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] += o.entries_[i];
    return *this;
  }
  ComplexMatrix& operator-=(const ComplexMatrix& o) {
    require_same_dim(o, "-");
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i] -= o.entries_[i];
    return *this;
  }
  ComplexMatrix& operator*=(Complex s) noexcept {
    for (auto& z : entries_) z *= s;
    return *this;
  }

  friend ComplexMatrix operator+(ComplexMatrix a, const ComplexMatrix& b) { return a += b; }
  friend ComplexMatrix operator-(ComplexMatrix a, const ComplexMatrix& b) { return a -= b; }
  friend ComplexMatrix operator*(ComplexMatrix a, Complex s) { return a *= s; }
  friend ComplexMatrix operator*(Complex s, ComplexMatrix a) { return a *= s; }
  friend ComplexMatrix operator*(ComplexMatrix a, double s) { return a *= Complex(s); }
  friend ComplexMatrix operator*(double s, ComplexMatrix a) { return a *= Complex(s); }

  friend ComplexMatrix operator*(const ComplexMatrix& a, const ComplexMatrix& b) {
    a.require_same_dim(b, "*");
    const std::size_t n = a.dim_;
    ComplexMatrix out(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t k = 0; k < n; ++k) {
        const Complex ark = a(r, k);
        if (ark == Complex(0.0)) continue;
        for (std::size_t c = 0; c < n; ++c) out(r, c) += ark * b(k, c);
      }
    return out;
  }

  friend bool operator==(const ComplexMatrix&, const ComplexMatrix&) = default;

private:
  static void check_dim(std::size_t dim) {
    if (dim == 0 || dim > kMaxDim) {
      throw ValidationError("ComplexMatrix: unsupported dimension " + std::to_string(dim) +
                            " (allowed 1.." + std::to_string(kMaxDim) + ")");
    }
  }

  static std::vector<Complex> flatten(
      std::initializer_list<std::initializer_list<Complex>> rows) {
    std::vector<Complex> out;
    for (const auto& row : rows) {
      if (row.size() != rows.size()) throw ValidationError("ComplexMatrix: ragged initializer");
      out.insert(out.end(), row.begin(), row.end());
    }
    return out;
  }

  void require_same_dim(const ComplexMatrix& o, const char* op) const {
    if (o.dim_ != dim_) {
      throw ValidationError(std::string("ComplexMatrix ") + op + ": dimension mismatch " +
                            std::to_string(dim_) + " vs " + std::to_string(o.dim_));
    }
  }

  std::size_t dim_;
  std::vector<Complex> entries_;
};

/// max_ij |a_ij - b_ij|
inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a - b).max_abs();
}

// Single-qubit operators. Index 0 is the excited level |e>, index 1 the
// ground level |g>, so sigma_z = diag(+1, -1).
namespace ops {

inline ComplexMatrix sigma_x() { return {{0.0, 1.0}, {1.0, 0.0}}; }
inline ComplexMatrix sigma_y() { return {{0.0, Complex(0, -1)}, {Complex(0, 1), 0.0}}; }
inline ComplexMatrix sigma_z() { return {{1.0, 0.0}, {0.0, -1.0}}; }
/// Lowering operator |g><e|.
inline ComplexMatrix sigma_minus() { return {{0.0, 0.0}, {1.0, 0.0}}; }
/// Raising operator |e><g|.
inline ComplexMatrix sigma_plus() { return {{0.0, 1.0}, {0.0, 0.0}}; }

}  // namespace ops

enum class Subsystem { A, B };

/// Kronecker product a (x) b.
inline ComplexMatrix tensor_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  const std::size_t na = a.dim(), nb = b.dim();
  if (na * nb > kMaxDim) {
    throw ValidationError("tensor_product: result dimension " + std::to_string(na * nb) +
                          " exceeds " + std::to_string(kMaxDim));
  }
  ComplexMatrix out(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < na; ++j)
      for (std::size_t k = 0; k < nb; ++k)
        for (std::size_t l = 0; l < nb; ++l) out(i * nb + k, j * nb + l) = a(i, j) * b(k, l);
  return out;
}

/// Reduced 2x2 operator of a 4x4 two-qubit operator, keeping `keep`.
inline ComplexMatrix partial_trace(const ComplexMatrix& m, Subsystem keep) {
  if (m.dim() != 4) {
    throw ValidationError("partial_trace: expected a 4x4 two-qubit operator, got dim " +
                          std::to_string(m.dim()));
  }
  ComplexMatrix out(2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) {
        if (keep == Subsystem::A) {
          out(i, j) += m(i * 2 + k, j * 2 + k);
        } else {
          out(i, j) += m(k * 2 + i, k * 2 + j);
        }
      }
  return out;
}

struct EigenSystem {
  std::vector<double> values;  // descending
  std::vector<Ket> vectors;    // vectors[i] pairs with values[i]
};

inline Ket normalized(Ket v) {
  double n = 0.0;
  for (const auto& z : v) n += std::norm(z);
  n = std::sqrt(n);
  for (auto& z : v) z /= n;
  return v;
}

/// Fixes the phase so the first component with modulus above 1e-14 is real
/// and positive.
inline Ket fix_phase(Ket v) {
  for (const auto& z : v) {
    const double a = std::abs(z);
    if (a > 1e-14) {
      const Complex ph = std::conj(z) / a;
      for (auto& w : v) w *= ph;
      break;
    }
  }
  return v;
}

/// |v><v|
inline ComplexMatrix outer(const Ket& v) {
  ComplexMatrix m(v.size());
  for (std::size_t r = 0; r < v.size(); ++r)
    for (std::size_t c = 0; c < v.size(); ++c) m(r, c) = v[r] * std::conj(v[c]);
  return m;
}

/// sum_i values_i v_i v_i^dagger
inline ComplexMatrix reconstruct(const EigenSystem& es) {
  ComplexMatrix m(es.vectors.front().size());
  for (std::size_t i = 0; i < es.values.size(); ++i) m += outer(es.vectors[i]) * es.values[i];
  return m;
}

namespace detail {

inline void require_hermitian(const ComplexMatrix& m, const Tolerances& tol, const char* who) {
  const double defect = m.hermiticity_defect();
  if (defect > tol.hermitian) {
    throw ValidationError(std::string(who) + ": input is not Hermitian (max |m - m^dagger| = " +
                          std::to_string(defect) + ")");
  }
}

inline void sort_descending(EigenSystem& es) {
  std::vector<std::size_t> idx(es.values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return es.values[a] > es.values[b]; });
  EigenSystem sorted;
  for (auto i : idx) {
    sorted.values.push_back(es.values[i]);
    sorted.vectors.push_back(fix_phase(std::move(es.vectors[i])));
  }
  es = std::move(sorted);
}

}  // namespace detail

/// Closed-form eigendecomposition of a Hermitian 2x2 matrix.
inline EigenSystem hermitian_eig_2x2(const ComplexMatrix& m, const Tolerances& tol = {}) {
  if (m.dim() != 2) {
    throw ValidationError("hermitian_eig_2x2: expected dim 2, got " + std::to_string(m.dim()));
  }
  detail::require_hermitian(m, tol, "hermitian_eig_2x2");

  const double a = m(0, 0).real();
  const double d = m(1, 1).real();
  const Complex b = 0.5 * (m(0, 1) + std::conj(m(1, 0)));
  const double mean = 0.5 * (a + d);
  const double half = 0.5 * (a - d);
  const double rad = std::hypot(half, std::abs(b));

  EigenSystem es;
  es.values = {mean + rad, mean - rad};
  if (rad == 0.0) {
    es.vectors = {Ket{1.0, 0.0}, Ket{0.0, 1.0}};
    return es;
  }
  // Upper eigenvector from whichever row of (m - lambda) is better conditioned.
  Ket upper = half >= 0.0 ? Ket{rad + half, std::conj(b)} : Ket{b, rad - half};
  upper = normalized(std::move(upper));
  Ket lower{-std::conj(upper[1]), std::conj(upper[0])};
  es.vectors = {fix_phase(std::move(upper)), fix_phase(std::move(lower))};
  return es;
}

/// Cyclic complex Jacobi eigensolver for Hermitian matrices of any supported
/// dimension.
inline EigenSystem hermitian_eig_jacobi(const ComplexMatrix& m, const Tolerances& tol = {}) {
  detail::require_hermitian(m, tol, "hermitian_eig_jacobi");
  const std::size_t n = m.dim();

  ComplexMatrix a = (m + m.adjoint()) * 0.5;
  ComplexMatrix v = ComplexMatrix::identity(n);

  auto off_diagonal = [&] {
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = 0; q < n; ++q)
        if (p != q) s += std::norm(a(p, q));
    return std::sqrt(s);
  };
  double scale = 0.0;
  for (const auto& z : a.entries()) scale += std::norm(z);
  scale = std::sqrt(scale);
  const double target = 4.0 * std::numeric_limits<double>::epsilon() * scale;

  bool converged = off_diagonal() <= target;
  for (int sweep = 0; sweep < tol.jacobi_max_sweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double mod = std::abs(a(p, q));
        if (mod == 0.0) continue;
        const Complex phase = a(p, q) / mod;  // e^{i phi}
        const double app = a(p, p).real(), aqq = a(q, q).real();
        const double theta = (aqq - app) / (2.0 * mod);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::hypot(t, 1.0);
        const double s = t * c;
        // J restricted to (p, q): [[c, s], [-s e^{-i phi}, c e^{-i phi}]]
        const Complex jpp = c, jpq = s;
        const Complex jqp = -s * std::conj(phase), jqq = c * std::conj(phase);

        for (std::size_t k = 0; k < n; ++k) {
          const Complex akp = a(k, p), akq = a(k, q);
          a(k, p) = akp * jpp + akq * jqp;
          a(k, q) = akp * jpq + akq * jqq;
          const Complex vkp = v(k, p), vkq = v(k, q);
          v(k, p) = vkp * jpp + vkq * jqp;
          v(k, q) = vkp * jpq + vkq * jqq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const Complex apk = a(p, k), aqk = a(q, k);
          a(p, k) = std::conj(jpp) * apk + std::conj(jqp) * aqk;
          a(q, k) = std::conj(jpq) * apk + std::conj(jqq) * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
      }
    }
    converged = off_diagonal() <= target;
  }
  if (!converged) {
    throw NumericalError("hermitian_eig_jacobi: no convergence after " +
                         std::to_string(tol.jacobi_max_sweeps) + " sweeps");
  }

  EigenSystem es;
  for (std::size_t i = 0; i < n; ++i) {
    es.values.push_back(a(i, i).real());
    Ket col(n);
    for (std::size_t k = 0; k < n; ++k) col[k] = v(k, i);
    es.vectors.push_back(normalized(std::move(col)));
  }
  detail::sort_descending(es);
  return es;
}

inline EigenSystem hermitian_eig_4x4(const ComplexMatrix& m, const Tolerances& tol = {}) {
  if (m.dim() != 4) {
    throw ValidationError("hermitian_eig_4x4: expected dim 4, got " + std::to_string(m.dim()));
  }
  return hermitian_eig_jacobi(m, tol);
}

/// Closed form for 2x2, Jacobi otherwise.
inline EigenSystem hermitian_eig(const ComplexMatrix& m, const Tolerances& tol = {}) {
  return m.dim() == 2 ? hermitian_eig_2x2(m, tol) : hermitian_eig_jacobi(m, tol);
}

/// Re tr(state * observable).
inline double expectation(const ComplexMatrix& state, const ComplexMatrix& observable,
                          const Tolerances& tol = {}) {
  if (state.dim() != observable.dim()) {
    throw ValidationError("expectation: dimension mismatch " + std::to_string(state.dim()) +
                          " vs " + std::to_string(observable.dim()));
  }
  detail::require_hermitian(observable, tol, "expectation");
  Complex t = 0.0;
  for (std::size_t r = 0; r < state.dim(); ++r)
    for (std::size_t k = 0; k < state.dim(); ++k) t += state(r, k) * observable(k, r);
  if (std::abs(t.imag()) >= tol.expectation_imag) {
    throw ValidationError("expectation: trace has imaginary part " + std::to_string(t.imag()));
  }
  return t.real();
}

}  // namespace qthermo
