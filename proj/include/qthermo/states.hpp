#pragma once

// Density matrices, spectral decompositions with stable branch labels, and
// the entropy/Bloch diagnostics built on them.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "tolerances.hpp"

namespace qthermo {

enum class DensityViolation { NonHermitian, TraceNotOne, NotPositive, BadDimension };

inline const char* to_string(DensityViolation v) {
  switch (v) {
    case DensityViolation::NonHermitian: return "NonHermitian";
    case DensityViolation::TraceNotOne: return "TraceNotOne";
    case DensityViolation::NotPositive: return "NotPositive";
    case DensityViolation::BadDimension: return "BadDimension";
  }
  return "?";
}

class InvalidDensity : public ValidationError {
public:
  InvalidDensity(DensityViolation kind, double magnitude)
      : ValidationError(std::string("invalid density matrix: ") + to_string(kind) +
                        " (magnitude " + std::to_string(magnitude) + ")"),
        kind_(kind),
        magnitude_(magnitude) {}

  DensityViolation kind() const noexcept { return kind_; }
  double magnitude() const noexcept { return magnitude_; }

private:
  DensityViolation kind_;
  double magnitude_;
};

/// A Hermitian, unit-trace, positive semidefinite 2x2 or 4x4 matrix.
/// Only obtainable through validate_density().
class DensityMatrix {
public:
  const ComplexMatrix& matrix() const noexcept { return m_; }
  std::size_t dim() const noexcept { return m_.dim(); }
  const Complex& operator()(std::size_t r, std::size_t c) const noexcept { return m_(r, c); }

private:
  explicit DensityMatrix(ComplexMatrix m) : m_(std::move(m)) {}
  friend DensityMatrix validate_density(const ComplexMatrix&, const Tolerances&);

  ComplexMatrix m_;
};

inline DensityMatrix validate_density(const ComplexMatrix& m, const Tolerances& tol = {}) {
  if (m.dim() != 2 && m.dim() != 4) {
    throw InvalidDensity(DensityViolation::BadDimension, static_cast<double>(m.dim()));
  }
  if (const double d = m.hermiticity_defect(); d > tol.hermitian) {
    throw InvalidDensity(DensityViolation::NonHermitian, d);
  }
  if (const double d = std::abs(m.trace() - 1.0); d > tol.trace) {
    throw InvalidDensity(DensityViolation::TraceNotOne, d);
  }
  const auto es = hermitian_eig(m, tol);
  if (const double low = es.values.back(); low < -tol.positivity) {
    throw InvalidDensity(DensityViolation::NotPositive, -low);
  }
  return DensityMatrix(m);
}

struct Branch {
  int id = 0;
  double probability = 0.0;
  ComplexMatrix projector{2};
};

/// rho = sum_i p_i P_i, branches ordered by id.
struct SpectralDecomposition {
  std::vector<Branch> branches;

  std::size_t dim() const noexcept { return branches.front().projector.dim(); }

  ComplexMatrix reconstruct() const {
    ComplexMatrix m(dim());
    for (const auto& b : branches) m += b.projector * b.probability;
    return m;
  }

  const Branch& by_id(int id) const {
    for (const auto& b : branches)
      if (b.id == id) return b;
    throw ValidationError("SpectralDecomposition: no branch with id " + std::to_string(id));
  }
};

/// Eigenvalues clamped into [0, 1]; branch ids 0..n-1 in descending
/// probability order.
inline SpectralDecomposition spectral_decompose(const DensityMatrix& rho,
                                                const Tolerances& tol = {}) {
  const auto es = hermitian_eig(rho.matrix(), tol);
  SpectralDecomposition sd;
  for (std::size_t i = 0; i < es.values.size(); ++i) {
    const double p = std::clamp(es.values[i], 0.0, 1.0);
    sd.branches.push_back({static_cast<int>(i), p, outer(es.vectors[i])});
  }
  return sd;
}

/// Re tr(a b) for Hermitian a, b.
inline double overlap(const ComplexMatrix& a, const ComplexMatrix& b) {
  double s = 0.0;
  for (std::size_t r = 0; r < a.dim(); ++r)
    for (std::size_t k = 0; k < a.dim(); ++k) s += (a(r, k) * b(k, r)).real();
  return s;
}

/// Relabels `next` so every branch continues the `prev` branch it overlaps
/// most (maximum total overlap over all permutations). Inside a degenerate
/// cluster of `next`, projectors are taken from `prev` whenever prev's
/// branches span the same eigenspace.
inline SpectralDecomposition match_branches(const SpectralDecomposition& prev,
                                            const SpectralDecomposition& next,
                                            const Tolerances& tol = {}) {
  if (prev.branches.size() != next.branches.size() || prev.dim() != next.dim()) {
    throw ValidationError("match_branches: dimension mismatch");
  }
  const std::size_t n = next.branches.size();

  std::vector<std::size_t> perm(n), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_score = -1.0;
  do {
    double score = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      score += overlap(prev.branches[i].projector, next.branches[perm[i]].projector);
    if (score > best_score + 1e-14) {
      best_score = score;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  SpectralDecomposition out;
  for (std::size_t i = 0; i < n; ++i) {
    Branch b = next.branches[best[i]];
    b.id = prev.branches[i].id;
    out.branches.push_back(std::move(b));
  }

  // Degenerate clusters: group by probability, largest first.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return out.branches[a].probability > out.branches[b].probability;
  });
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start + 1;
    while (stop < n && out.branches[order[stop - 1]].probability -
                               out.branches[order[stop]].probability <
                           tol.degeneracy)
      ++stop;
    if (stop - start >= 2) {
      ComplexMatrix span_next(out.dim()), span_prev(out.dim());
      for (std::size_t k = start; k < stop; ++k) {
        span_next += out.branches[order[k]].projector;
        span_prev += prev.branches[order[k]].projector;
      }
      if (max_abs_diff(span_next, span_prev) <= tol.trace) {
        for (std::size_t k = start; k < stop; ++k)
          out.branches[order[k]].projector = prev.branches[order[k]].projector;
      }
    }
    start = stop;
  }
  return out;
}

/// Caller-owned accumulator that keeps branch labels continuous along a
/// trajectory.
class BranchTracker {
public:
  explicit BranchTracker(Tolerances tol = {}) : tol_(tol) {}

  const SpectralDecomposition& push(const DensityMatrix& rho) {
    auto sd = spectral_decompose(rho, tol_);
    current_ = current_ ? match_branches(*current_, sd, tol_) : std::move(sd);
    return *current_;
  }

  const std::optional<SpectralDecomposition>& current() const noexcept { return current_; }

private:
  Tolerances tol_;
  std::optional<SpectralDecomposition> current_;
};

namespace detail {
inline double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }
}  // namespace detail

inline double entropy_of(const SpectralDecomposition& sd) {
  double s = 0.0;
  for (const auto& b : sd.branches) s -= detail::plogp(b.probability);
  return std::max(0.0, s);
}

/// S = -sum p ln p in nats.
inline double von_neumann_entropy(const DensityMatrix& rho, const Tolerances& tol = {}) {
  return entropy_of(spectral_decompose(rho, tol));
}

struct BlochVector {
  double x = 0.0, y = 0.0, z = 0.0, r = 0.0;
};

/// rho = (I + x sigma_x + y sigma_y + z sigma_z) / 2.
inline BlochVector bloch_vector(const DensityMatrix& rho) {
  if (rho.dim() != 2) {
    throw ValidationError("bloch_vector: expected a qubit state, got dim " +
                          std::to_string(rho.dim()));
  }
  BlochVector b;
  b.x = 2.0 * rho(0, 1).real();
  b.y = -2.0 * rho(0, 1).imag();
  b.z = (rho(0, 0) - rho(1, 1)).real();
  b.r = std::sqrt(b.x * b.x + b.y * b.y + b.z * b.z);
  return b;
}

}  // namespace qthermo
