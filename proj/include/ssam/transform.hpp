#pragma once

// Orthonormal DCT-II / DCT-III pair.
//
//   X[k] = a(k) * sum_n x[n] cos((2n+1) pi k / 2N)
//   x[n] = sum_k a(k) X[k] cos((2n+1) pi k / 2N)
//
// with a(0) = sqrt(1/N), a(k>0) = sqrt(2/N). The basis matrix C has
// C(k, n) = a(k) cos((2n+1) pi k / 2N), so dct(x) = C x and idct(X) = C^T X.

#include <Eigen/Core>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "ssam/errors.hpp"
#include "ssam/tensor.hpp"

namespace ssam {

/// Lengths up to this size use a cached basis matrix; longer series are
/// transformed by direct summation.
inline constexpr Eigen::Index kMaxCachedDctLength = 4096;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
Scalar dct_scale(Eigen::Index k, Eigen::Index n) {
  using std::sqrt;
  return k == 0 ? sqrt(Scalar(1) / Scalar(n)) : sqrt(Scalar(2) / Scalar(n));
}

template <typename Scalar>
Scalar dct_cos(Eigen::Index k, Eigen::Index sample, Eigen::Index n) {
  using std::cos;
  // Reduce (2n+1)k modulo 4N first so large products keep full precision.
  const long long period = 4LL * n;
  const long long phase = ((2LL * sample + 1LL) * k) % period;
  return cos(std::numbers::pi_v<Scalar> * Scalar(phase) / Scalar(2 * n));
}

/// The N x N orthonormal DCT-II matrix. Row k is the k-th basis vector.
template <typename Scalar = double>
DenseMatrix<Scalar> dct_matrix(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("dct_matrix: N must be positive");
  DenseMatrix<Scalar> c(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const Scalar a = dct_scale<Scalar>(k, n);
    for (Eigen::Index i = 0; i < n; ++i) c(k, i) = a * dct_cos<Scalar>(k, i, n);
  }
  return c;
}

/// Shared immutable basis for length n (n <= kMaxCachedDctLength).
template <typename Scalar = double>
const DenseMatrix<Scalar>& dct_basis(Eigen::Index n) {
  static std::mutex mutex;
  static std::map<Eigen::Index, std::unique_ptr<const DenseMatrix<Scalar>>> cache;
  if (n < 1 || n > kMaxCachedDctLength)
    throw std::invalid_argument("dct_basis: length out of cached range");
  std::lock_guard lock(mutex);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<const DenseMatrix<Scalar>>(dct_matrix<Scalar>(n));
  return *slot;
}

namespace detail {

template <typename Derived>
void check_transform_input(const Eigen::MatrixBase<Derived>& x, const char* op) {
  if (x.size() == 0) throw std::invalid_argument(std::string(op) + ": empty input");
  if (!x.allFinite()) throw std::invalid_argument(std::string(op) + ": non-finite input");
}

template <typename Scalar, typename Derived>
DenseVector<Scalar> dct_by_summation(const Eigen::MatrixBase<Derived>& x, bool inverse) {
  const Eigen::Index n = x.size();
  DenseVector<Scalar> out = DenseVector<Scalar>::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      // forward: out[k=i] += C(i, j) x[j]; inverse: out[n=i] += C(j, i) X[j]
      const Eigen::Index k = inverse ? j : i;
      const Eigen::Index s = inverse ? i : j;
      out[i] += dct_scale<Scalar>(k, n) * dct_cos<Scalar>(k, s, n) * x[j];
    }
  return out;
}

}  // namespace detail

/// Forward orthonormal DCT-II of a real series.
template <typename Derived>
DenseVector<typename Derived::Scalar> dct(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  detail::check_transform_input(x, "dct");
  if (x.size() > kMaxCachedDctLength) return detail::dct_by_summation<Scalar>(x, false);
  return dct_basis<Scalar>(x.size()) * x.derived();
}

/// Inverse (DCT-III) of `dct`; idct(dct(x)) == x up to rounding.
template <typename Derived>
DenseVector<typename Derived::Scalar> idct(const Eigen::MatrixBase<Derived>& spectrum) {
  using Scalar = typename Derived::Scalar;
  detail::check_transform_input(spectrum, "idct");
  if (spectrum.size() > kMaxCachedDctLength)
    return detail::dct_by_summation<Scalar>(spectrum, true);
  return dct_basis<Scalar>(spectrum.size()).transpose() * spectrum.derived();
}

/// Applies dct along the last axis of a [B, C, T] tensor. Each slice goes
/// through the unbatched path, so results match `dct` bit-for-bit.
inline Tensor dct_batch(const Tensor& x) {
  if (x.length() < 1) throw std::invalid_argument("dct_batch: empty time axis");
  Tensor out(x.batch(), x.channels(), x.length());
  for (Index b = 0; b < x.batch(); ++b)
    for (Index c = 0; c < x.channels(); ++c) out.series(b, c) = dct(x.series(b, c));
  return out;
}

/// Applies idct along the last axis of a [B, C, T] tensor.
inline Tensor idct_batch(const Tensor& spectra) {
  if (spectra.length() < 1) throw std::invalid_argument("idct_batch: empty time axis");
  Tensor out(spectra.batch(), spectra.channels(), spectra.length());
  for (Index b = 0; b < spectra.batch(); ++b)
    for (Index c = 0; c < spectra.channels(); ++c) out.series(b, c) = idct(spectra.series(b, c));
  return out;
}

}  // namespace ssam
