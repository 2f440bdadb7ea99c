#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "potapprox/rng.hpp"
#include "potapprox/tensor.hpp"

namespace potapprox {

struct SvdResult {
  Eigen::MatrixXd u;                // n x m, orthonormal columns
  Eigen::VectorXd singular_values;  // length m, nonincreasing, >= 0
  Eigen::MatrixXd v;                // m x m, orthogonal
};

struct PolarResult {
  Eigen::MatrixXd orthonormal_factor;  // n x m
  Eigen::MatrixXd psd_factor;          // m x m, symmetric PSD
};

// One-sided Jacobi SVD for n >= m (callers transpose otherwise). Fixed
// column-pair sweep order and a 1e-14 relative off-diagonal threshold make it
// deterministic; the sign convention (largest-magnitude entry of each right
// singular vector positive) pins down the remaining freedom. Chosen for
// reproducibility over speed.
inline SvdResult svd(const Eigen::MatrixXd& input) {
  if (!input.allFinite()) throw ArgumentError("svd: non-finite input");
  const Eigen::Index n = input.rows(), m = input.cols();
  if (n < m) throw ArgumentError("svd: expects n >= m; transpose the input");
  if (m == 0) throw ArgumentError("svd: empty matrix");

  Eigen::MatrixXd A = input;
  Eigen::MatrixXd V = Eigen::MatrixXd::Identity(m, m);
  const double tol = 1e-14;
  const int max_sweeps = 128;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (Eigen::Index p = 0; p + 1 < m; ++p) {
      for (Eigen::Index q = p + 1; q < m; ++q) {
        const double app = A.col(p).squaredNorm();
        const double aqq = A.col(q).squaredNorm();
        const double apq = A.col(p).dot(A.col(q));
        const double denom = std::sqrt(app * aqq);
        if (denom == 0.0 || std::abs(apq) <= tol * denom) continue;
        rotated = true;
        // Jacobi rotation zeroing the (p,q) entry of the implicit Gram matrix.
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        const Eigen::VectorXd tmpA = A.col(p);
        A.col(p) = c * tmpA - s * A.col(q);
        A.col(q) = s * tmpA + c * A.col(q);
        const Eigen::VectorXd tmpV = V.col(p);
        V.col(p) = c * tmpV - s * V.col(q);
        V.col(q) = s * tmpV + c * V.col(q);
      }
    }
    if (!rotated) break;
  }

  Eigen::VectorXd sigma(m);
  for (Eigen::Index j = 0; j < m; ++j) sigma[j] = A.col(j).norm();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&sigma](Eigen::Index a, Eigen::Index b) { return sigma[a] > sigma[b]; });

  SvdResult out;
  out.u.resize(n, m);
  out.v.resize(m, m);
  out.singular_values.resize(m);
  Eigen::MatrixXd As(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.singular_values[j] = sigma[src];
    out.v.col(j) = V.col(src);
    As.col(j) = A.col(src);
  }

  // Sign convention: largest-magnitude entry (first on ties) of each right
  // singular vector made positive.
  for (Eigen::Index j = 0; j < m; ++j) {
    Eigen::Index imax = 0;
    for (Eigen::Index i = 1; i < m; ++i)
      if (std::abs(out.v(i, j)) > std::abs(out.v(imax, j))) imax = i;
    if (out.v(imax, j) < 0.0) {
      out.v.col(j) = -out.v.col(j);
      As.col(j) = -As.col(j);
    }
  }

  // Left vectors: normalized rotated columns; zero singular values get a
  // deterministic orthonormal completion from the standard basis.
  for (Eigen::Index j = 0; j < m; ++j) {
    if (out.singular_values[j] > 0.0) {
      out.u.col(j) = As.col(j) / out.singular_values[j];
    } else {
      Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
      for (Eigen::Index e = 0; e < n; ++e) {
        w = Eigen::VectorXd::Zero(n);
        w[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
          for (Eigen::Index c = 0; c < j; ++c) w -= out.u.col(c).dot(w) * out.u.col(c);
        if (w.norm() > 0.5) break;
      }
      out.u.col(j) = w / w.norm();
    }
  }
  return out;
}

// Smallest singular value; same n >= m precondition as svd.
inline double sigma_min(const Eigen::MatrixXd& m) {
  return svd(m).singular_values[m.cols() - 1];
}

// Polar decomposition via SVD: for X = G S H^T, the orthonormal factor is
// G H^T and the PSD factor H S H^T. The orthonormal factor maximizes <Q, X>
// over orthonormal Q; unique when X has full rank, convention-fixed otherwise.
inline PolarResult polar(const Eigen::MatrixXd& m) {
  SvdResult r = svd(m);
  PolarResult out;
  out.orthonormal_factor = r.u * r.v.transpose();
  Eigen::MatrixXd h = r.v * r.singular_values.asDiagonal() * r.v.transpose();
  out.psd_factor = 0.5 * (h + h.transpose());  // exact symmetry
  return out;
}

namespace detail {
inline void require_orthonormal(const Eigen::MatrixXd& q, const char* who) {
  Eigen::MatrixXd g = q.transpose() * q;
  g.diagonal().array() -= 1.0;
  if (g.norm() > 1e-8) throw ArgumentError(std::string(who) + ": input is not orthonormal (deviation > 1e-8)");
}
}  // namespace detail

// Slack of the polar global error bound: with W the polar orthonormal factor
// of B C^T, returns (|B-QC|_F^2 - |B-WC|_F^2) - sigma_min(B C^T) |W-Q|_F^2,
// which is nonnegative up to roundoff for any orthonormal Q.
inline double polar_error_bound_gap(const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                                    const Eigen::MatrixXd& q) {
  if (b.cols() != c.cols()) throw DimensionError("polar_error_bound_gap: B and C need equal column counts");
  if (q.rows() != b.rows() || q.cols() != c.rows())
    throw DimensionError("polar_error_bound_gap: Q must be rows(B) x rows(C)");
  if (q.rows() < q.cols()) throw DimensionError("polar_error_bound_gap: Q must be tall");
  detail::require_orthonormal(q, "polar_error_bound_gap");

  const Eigen::MatrixXd bct = b * c.transpose();
  const Eigen::MatrixXd w = polar(bct).orthonormal_factor;
  const double smin = sigma_min(bct);
  const double gap = ((b - q * c).squaredNorm() - (b - w * c).squaredNorm()) - smin * (w - q).squaredNorm();
  return gap;
}

// Slack of |U-V|_F^2 >= |U^T V - I|_F^2 for orthonormal U, V.
inline double orthonormal_distance_gap(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (u.rows() != v.rows() || u.cols() != v.cols())
    throw DimensionError("orthonormal_distance_gap: shape mismatch");
  detail::require_orthonormal(u, "orthonormal_distance_gap");
  detail::require_orthonormal(v, "orthonormal_distance_gap");
  Eigen::MatrixXd g = u.transpose() * v;
  g.diagonal().array() -= 1.0;
  return (u - v).squaredNorm() - g.squaredNorm();
}

// Deterministic random orthonormal n x m matrix: QR of a seeded Gaussian
// matrix with the positive-diagonal sign convention.
inline Eigen::MatrixXd random_orthonormal(int n, int m, std::uint64_t seed) {
  if (m > n || n < 1 || m < 1) throw ArgumentError("random_orthonormal: need n >= m >= 1");
  Rng rng(seed);
  Eigen::MatrixXd g(n, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i < n; ++i) g(i, j) = rng.gaussian();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace potapprox
