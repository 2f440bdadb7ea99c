#pragma once

// Independent reference implementations for checking the library: plain
// nested-loop tensor arithmetic and Eigen decompositions. Nothing here may
// call the library's own contraction or SVD code paths.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "potapprox/tensor.hpp"

namespace oracle {

using potapprox::DenseTensor;
using potapprox::Shape;

// Odometer over a multi-index; use as do { ... } while (advance(idx, dims))
// so that the empty index (order-0) still visits its single element.
inline bool advance(std::vector<std::int64_t>& idx, const std::vector<std::int64_t>& dims) {
  for (int i = static_cast<int>(idx.size()) - 1; i >= 0; --i) {
    if (++idx[static_cast<std::size_t>(i)] < dims[static_cast<std::size_t>(i)]) return true;
    idx[static_cast<std::size_t>(i)] = 0;
  }
  return false;
}

inline double inner(const DenseTensor& a, const DenseTensor& b) {
  double sum = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double a_tau(const DenseTensor& a, const std::vector<Eigen::VectorXd>& u) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(a.order()), 0);
  double sum = 0.0;
  do {
    double p = a.at(idx);
    for (int i = 0; i < a.order(); ++i) p *= u[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    sum += p;
  } while (advance(idx, a.shape().dims()));
  return sum;
}

inline Eigen::VectorXd a_tau_i(const DenseTensor& a, const std::vector<Eigen::VectorXd>& u,
                               int mode) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(a.shape().dim(mode));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(a.order()), 0);
  do {
    double p = a.at(idx);
    for (int i = 0; i < a.order(); ++i)
      if (i != mode) p *= u[static_cast<std::size_t>(i)][idx[static_cast<std::size_t>(i)]];
    out[idx[static_cast<std::size_t>(mode)]] += p;
  } while (advance(idx, a.shape().dims()));
  return out;
}

inline DenseTensor tau(const std::vector<Eigen::VectorXd>& u) {
  std::vector<std::int64_t> dims;
  for (const auto& v : u) dims.push_back(v.size());
  DenseTensor out{Shape(dims)};
  std::vector<std::int64_t> idx(u.size(), 0);
  do {
    double p = 1.0;
    for (std::size_t i = 0; i < u.size(); ++i) p *= u[i][idx[i]];
    out.at(idx) = p;
  } while (advance(idx, dims));
  return out;
}

inline DenseTensor contract(const DenseTensor& a, const DenseTensor& b,
                            const std::vector<int>& modes_of_a) {
  std::vector<bool> contracted(static_cast<std::size_t>(a.order()), false);
  for (int m : modes_of_a) contracted[static_cast<std::size_t>(m)] = true;
  std::vector<std::int64_t> free_dims;
  std::vector<int> free_modes;
  for (int i = 0; i < a.order(); ++i) {
    if (!contracted[static_cast<std::size_t>(i)]) {
      free_dims.push_back(a.shape().dim(i));
      free_modes.push_back(i);
    }
  }
  DenseTensor out{Shape(free_dims)};
  std::vector<std::int64_t> fidx(free_dims.size(), 0);
  do {
    std::vector<std::int64_t> bidx(static_cast<std::size_t>(b.order()), 0);
    double sum = 0.0;
    do {
      std::vector<std::int64_t> aidx(static_cast<std::size_t>(a.order()), 0);
      for (std::size_t t = 0; t < free_modes.size(); ++t)
        aidx[static_cast<std::size_t>(free_modes[t])] = fidx[t];
      for (std::size_t t = 0; t < modes_of_a.size(); ++t)
        aidx[static_cast<std::size_t>(modes_of_a[t])] = bidx[t];
      sum += a.at(aidx) * b.at(bidx);
    } while (advance(bidx, b.shape().dims()));
    out.at(fidx) = sum;
  } while (advance(fidx, free_dims));
  return out;
}

inline DenseTensor mat_tensor_product(const std::vector<Eigen::MatrixXd>& mats,
                                      const DenseTensor& a) {
  std::vector<std::int64_t> out_dims;
  for (const auto& m : mats) out_dims.push_back(m.rows());
  DenseTensor out{Shape(out_dims)};
  std::vector<std::int64_t> oidx(out_dims.size(), 0);
  do {
    std::vector<std::int64_t> iidx(static_cast<std::size_t>(a.order()), 0);
    double sum = 0.0;
    do {
      double p = a.at(iidx);
      for (std::size_t m = 0; m < mats.size(); ++m)
        p *= mats[m](oidx[m], iidx[m]);
      sum += p;
    } while (advance(iidx, a.shape().dims()));
    out.at(oidx) = sum;
  } while (advance(oidx, out_dims));
  return out;
}

inline Eigen::VectorXd singular_values(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> s(m);
  return s.singularValues();
}

// PSD square root via eigendecomposition (negative roundoff eigenvalues clamped).
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& sym) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  Eigen::VectorXd d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

struct PolarOracle {
  Eigen::MatrixXd u;
  Eigen::MatrixXd h;
};

inline PolarOracle polar(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> s(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  PolarOracle out;
  out.u = s.matrixU() * s.matrixV().transpose();
  out.h = s.matrixV() * s.singularValues().asDiagonal() * s.matrixV().transpose();
  return out;
}

}  // namespace oracle
