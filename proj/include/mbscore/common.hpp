#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mbs {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Raised when a computation produces non-finite values or a factorization
/// cannot be completed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for time arguments at which the inverse Malliavin matrix is unbounded.
class SingularTimeError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Third-order tensor T^{i,a,b} stored as slices: slice(a)(i, b) = T^{i,a,b}.
/// Contraction with a vector w on the first lower index gives sum_a w_a slice(a).
template <typename Scalar>
struct Tensor3 {
  std::vector<Matrix<Scalar>> slices;

  Tensor3() = default;
  explicit Tensor3(Eigen::Index m) : slices(static_cast<std::size_t>(m), Matrix<Scalar>::Zero(m, m)) {}

  Eigen::Index dim() const { return static_cast<Eigen::Index>(slices.size()); }
  Scalar operator()(Eigen::Index i, Eigen::Index a, Eigen::Index b) const {
    return slices[static_cast<std::size_t>(a)](i, b);
  }
  Scalar& operator()(Eigen::Index i, Eigen::Index a, Eigen::Index b) {
    return slices[static_cast<std::size_t>(a)](i, b);
  }

  /// T(w, .) = sum_a w_a T^{., a, .}
  template <typename Derived>
  Matrix<Scalar> contract(const Eigen::MatrixBase<Derived>& w) const {
    Matrix<Scalar> out = Matrix<Scalar>::Zero(dim(), dim());
    for (Eigen::Index a = 0; a < dim(); ++a) out += w(a) * slices[static_cast<std::size_t>(a)];
    return out;
  }

  Scalar max_abs() const {
    Scalar r = 0;
    for (const auto& s : slices) r = std::max(r, s.cwiseAbs().maxCoeff());
    return r;
  }
};

// ---------------------------------------------------------------------------
// Threading

namespace detail {
inline unsigned& default_threads() {
  static unsigned n = std::max(1u, std::thread::hardware_concurrency());
  return n;
}
}  // namespace detail

inline void set_default_threads(unsigned n) { detail::default_threads() = std::max(1u, n); }
inline unsigned default_threads() { return detail::default_threads(); }

/// Static-partition parallel loop. Each index is visited exactly once; results
/// written by index are therefore independent of the thread count. The first
/// exception raised by a worker is rethrown after all workers have joined.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         unsigned threads = 0) {
  if (threads == 0) threads = default_threads();
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  pool.reserve(threads);
  const std::size_t chunk = (n + threads - 1) / threads;
  for (unsigned w = 0; w < threads; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &body, &err = errors[w]] {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace mbs
