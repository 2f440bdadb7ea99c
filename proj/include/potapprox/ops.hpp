#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "potapprox/tensor.hpp"

namespace potapprox {

// Hilbert-Schmidt inner product: sum of elementwise products.
inline double inner(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("inner: shape mismatch");
  Eigen::Map<const Eigen::VectorXd> ma(a.data().data(), static_cast<Eigen::Index>(a.size()));
  Eigen::Map<const Eigen::VectorXd> mb(b.data().data(), static_cast<Eigen::Index>(b.size()));
  return ma.dot(mb);
}

inline double hs_norm(const DenseTensor& a) {
  Eigen::Map<const Eigen::VectorXd> ma(a.data().data(), static_cast<Eigen::Index>(a.size()));
  return ma.norm();
}

// Contracts tensor `a` with `b` over the given (strictly increasing) modes of
// `a`; b's order must equal the number of contracted modes, with matching
// dims in order. The result lives on the complementary modes of `a`; an
// order-0 tensor when everything is contracted.
inline DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                            const std::vector<int>& modes_of_a) {
  const int k = a.order();
  if (modes_of_a.empty()) throw ArgumentError("contract: needs at least one mode");
  for (std::size_t t = 0; t < modes_of_a.size(); ++t) {
    if (modes_of_a[t] < 0 || modes_of_a[t] >= k) throw ArgumentError("contract: invalid mode index");
    if (t > 0 && modes_of_a[t] <= modes_of_a[t - 1])
      throw ArgumentError("contract: modes must be strictly increasing");
  }
  if (b.order() != static_cast<int>(modes_of_a.size()))
    throw DimensionError("contract: b's order must equal the number of contracted modes");
  for (std::size_t t = 0; t < modes_of_a.size(); ++t) {
    if (a.shape().dim(modes_of_a[t]) != b.shape().dim(static_cast<int>(t)))
      throw DimensionError("contract: dim mismatch at contracted mode");
  }

  std::vector<int> free_modes;
  {
    std::size_t t = 0;
    for (int i = 0; i < k; ++i) {
      if (t < modes_of_a.size() && modes_of_a[t] == i) {
        ++t;
      } else {
        free_modes.push_back(i);
      }
    }
  }

  std::vector<std::int64_t> out_dims;
  for (int m : free_modes) out_dims.push_back(a.shape().dim(m));
  DenseTensor out{Shape(out_dims)};

  const std::vector<std::int64_t> sa = a.shape().strides();
  const int nf = static_cast<int>(free_modes.size());
  const int nc = static_cast<int>(modes_of_a.size());

  std::vector<std::int64_t> fidx(static_cast<std::size_t>(nf), 0);
  for (std::int64_t of = 0; of < out.size(); ++of) {
    std::int64_t base = 0;
    for (int t = 0; t < nf; ++t) base += fidx[static_cast<std::size_t>(t)] * sa[static_cast<std::size_t>(free_modes[static_cast<std::size_t>(t)])];

    double acc = 0.0;
    std::vector<std::int64_t> cidx(static_cast<std::size_t>(nc), 0);
    for (std::int64_t ob = 0; ob < b.size(); ++ob) {
      std::int64_t off = base;
      for (int t = 0; t < nc; ++t) off += cidx[static_cast<std::size_t>(t)] * sa[static_cast<std::size_t>(modes_of_a[static_cast<std::size_t>(t)])];
      acc += a[off] * b[ob];
      for (int t = nc - 1; t >= 0; --t) {  // odometer over b's indices
        if (++cidx[static_cast<std::size_t>(t)] < b.shape().dim(t)) break;
        cidx[static_cast<std::size_t>(t)] = 0;
      }
    }
    out[of] = acc;

    for (int t = nf - 1; t >= 0; --t) {
      if (++fidx[static_cast<std::size_t>(t)] < out.shape().dim(t)) break;
      fidx[static_cast<std::size_t>(t)] = 0;
    }
  }
  return out;
}

// Contracts one mode of `a` against a vector; the workhorse behind A_tau and
// A_tau_i. out[p, s] = sum_i a[p, i, s] * v[i] with p/s the flattened
// prefix/suffix index blocks.
inline DenseTensor contract_mode(const DenseTensor& a, int mode, const Eigen::VectorXd& v) {
  const int k = a.order();
  if (mode < 0 || mode >= k) throw ArgumentError("contract_mode: invalid mode index");
  if (v.size() != a.shape().dim(mode)) throw DimensionError("contract_mode: vector length mismatch");

  std::int64_t pre = 1, suf = 1;
  for (int i = 0; i < mode; ++i) pre *= a.shape().dim(i);
  for (int i = mode + 1; i < k; ++i) suf *= a.shape().dim(i);
  const std::int64_t n = a.shape().dim(mode);

  std::vector<std::int64_t> out_dims;
  for (int i = 0; i < k; ++i)
    if (i != mode) out_dims.push_back(a.shape().dim(i));
  DenseTensor out{Shape(out_dims)};

  const double* src = a.data().data();
  double* dst = out.data().data();
  for (std::int64_t p = 0; p < pre; ++p) {
    for (std::int64_t i = 0; i < n; ++i) {
      const double w = v[static_cast<Eigen::Index>(i)];
      if (w == 0.0) continue;
      const double* row = src + (p * n + i) * suf;
      double* o = dst + p * suf;
      for (std::int64_t s = 0; s < suf; ++s) o[s] += w * row[s];
    }
  }
  return out;
}

// Applies B to one mode: out[p, j, s] = sum_i B(j, i) t[p, i, s].
inline DenseTensor apply_mode(const DenseTensor& t, int mode, const Eigen::MatrixXd& B) {
  const int k = t.order();
  if (mode < 0 || mode >= k) throw ArgumentError("apply_mode: invalid mode index");
  if (B.cols() != t.shape().dim(mode)) throw DimensionError("apply_mode: column count mismatch");

  std::int64_t pre = 1, suf = 1;
  for (int i = 0; i < mode; ++i) pre *= t.shape().dim(i);
  for (int i = mode + 1; i < k; ++i) suf *= t.shape().dim(i);
  const std::int64_t n = t.shape().dim(mode);
  const std::int64_t m = B.rows();

  std::vector<std::int64_t> out_dims = t.shape().dims();
  out_dims[static_cast<std::size_t>(mode)] = m;
  DenseTensor out{Shape(out_dims)};

  const double* src = t.data().data();
  double* dst = out.data().data();
  for (std::int64_t p = 0; p < pre; ++p) {
    for (std::int64_t j = 0; j < m; ++j) {
      double* o = dst + (p * m + j) * suf;
      for (std::int64_t i = 0; i < n; ++i) {
        const double w = B(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i));
        if (w == 0.0) continue;
        const double* row = src + (p * n + i) * suf;
        for (std::int64_t s = 0; s < suf; ++s) o[s] += w * row[s];
      }
    }
  }
  return out;
}

// Matrix-tensor product (B1,...,Bk) . a with Bi of size m_i x n_i.
inline DenseTensor mat_tensor_product(const std::vector<Eigen::MatrixXd>& matrices,
                                      const DenseTensor& a) {
  if (static_cast<int>(matrices.size()) != a.order())
    throw DimensionError("mat_tensor_product: need one matrix per mode");
  DenseTensor t = a;
  for (int i = 0; i < a.order(); ++i) t = apply_mode(t, i, matrices[static_cast<std::size_t>(i)]);
  return t;
}

// diag_k: vector (l1,...,lr) -> k-way tensor of shape (r,...,r) with l_j at
// position (j,...,j) and zeros elsewhere.
inline DenseTensor diag_k(const Eigen::VectorXd& lambda, int k) {
  if (k < 1) throw ArgumentError("diag_k: order must be >= 1");
  const std::int64_t r = lambda.size();
  if (r < 1) throw ArgumentError("diag_k: need at least one entry");
  DenseTensor out{Shape(std::vector<std::int64_t>(static_cast<std::size_t>(k), r))};
  std::int64_t step = 0;  // flat distance between consecutive diagonal entries
  for (int i = 0; i < k; ++i) step = step * r + 1;
  for (std::int64_t j = 0; j < r; ++j) out[j * step] = lambda[static_cast<Eigen::Index>(j)];
  return out;
}

// Diag_k: super-diagonal of a cubical tensor; the left inverse of diag_k.
inline Eigen::VectorXd Diag_k(const DenseTensor& a) {
  if (a.order() < 1) throw DimensionError("Diag_k: needs order >= 1");
  const std::int64_t r = a.shape().dim(0);
  for (int i = 1; i < a.order(); ++i)
    if (a.shape().dim(i) != r) throw DimensionError("Diag_k: tensor must be cubical");
  std::int64_t step = 0;
  for (int i = 0; i < a.order(); ++i) step = step * r + 1;
  Eigen::VectorXd out(r);
  for (std::int64_t j = 0; j < r; ++j) out[static_cast<Eigen::Index>(j)] = a[j * step];
  return out;
}

// Rank-one tensor u1 (x) ... (x) uk; relaxed variant, vectors need not be
// unit. Row-major layout makes this a chain of Kronecker products.
inline DenseTensor tau(const std::vector<Eigen::VectorXd>& vectors) {
  if (vectors.empty()) throw ArgumentError("tau: needs at least one vector");
  std::vector<std::int64_t> dims;
  for (const auto& v : vectors) {
    if (v.size() == 0) throw ArgumentError("tau: empty vector");
    dims.push_back(v.size());
  }
  DenseTensor out{Shape(dims)};
  std::vector<double>& d = out.data();
  d[0] = 1.0;
  std::int64_t cur = 1;
  for (const auto& v : vectors) {
    const std::int64_t n = v.size();
    for (std::int64_t p = cur - 1; p >= 0; --p) {
      const double base = d[static_cast<std::size_t>(p)];
      for (std::int64_t i = n - 1; i >= 0; --i)
        d[static_cast<std::size_t>(p * n + i)] = base * v[static_cast<Eigen::Index>(i)];
    }
    cur *= n;
  }
  return out;
}

inline DenseTensor tau(const UnitVectorTuple& u) { return tau(u.vectors()); }

// A tau(u1,...,uk) = <a, tau(u)>, evaluated by sequential mode contraction.
inline double A_tau(const DenseTensor& a, const std::vector<Eigen::VectorXd>& vectors) {
  if (static_cast<int>(vectors.size()) != a.order())
    throw DimensionError("A_tau: need one vector per mode");
  for (int i = 0; i < a.order(); ++i)
    if (vectors[static_cast<std::size_t>(i)].size() != a.shape().dim(i))
      throw DimensionError("A_tau: vector length mismatch at mode " + std::to_string(i));
  DenseTensor t = a;
  for (int m = a.order() - 1; m >= 0; --m) t = contract_mode(t, m, vectors[static_cast<std::size_t>(m)]);
  return t.scalar();
}

inline double A_tau(const DenseTensor& a, const UnitVectorTuple& u) { return A_tau(a, u.vectors()); }

// A tau_i: contraction over all modes except `mode`; vector `mode` of the
// tuple is ignored. Satisfies <A_tau_i(a,u,i), u_i> = A_tau(a,u).
inline Eigen::VectorXd A_tau_i(const DenseTensor& a, const std::vector<Eigen::VectorXd>& vectors,
                               int mode) {
  if (mode < 0 || mode >= a.order()) throw ArgumentError("A_tau_i: invalid mode index");
  if (static_cast<int>(vectors.size()) != a.order())
    throw DimensionError("A_tau_i: need one vector per mode");
  for (int i = 0; i < a.order(); ++i) {
    if (i == mode) continue;
    if (vectors[static_cast<std::size_t>(i)].size() != a.shape().dim(i))
      throw DimensionError("A_tau_i: vector length mismatch at mode " + std::to_string(i));
  }
  DenseTensor t = a;
  for (int m = a.order() - 1; m >= 0; --m) {
    if (m == mode) continue;
    t = contract_mode(t, m, vectors[static_cast<std::size_t>(m)]);
  }
  Eigen::VectorXd out(t.size());
  for (std::int64_t i = 0; i < t.size(); ++i) out[static_cast<Eigen::Index>(i)] = t[i];
  return out;
}

inline Eigen::VectorXd A_tau_i(const DenseTensor& a, const UnitVectorTuple& u, int mode) {
  return A_tau_i(a, u.vectors(), mode);
}

}  // namespace potapprox
