#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "potapprox/linalg.hpp"
#include "potapprox/ops.hpp"
#include "potapprox/rng.hpp"
#include "potapprox/solver.hpp"
#include "potapprox/tensor.hpp"

namespace potapprox {

struct PlantedInstance {
  DenseTensor tensor;
  FactorSet true_factors;
  Eigen::VectorXd true_sigmas;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
};

// Builds sum_j sigma_j u^(1)_j x ... x u^(k)_j with the first s factors
// random-orthonormal and the rest unit Gaussian columns resampled until
// sigma_min >= 0.1 (a quantitative full-column-rank margin), then adds
// Gaussian noise scaled to |noise| = noise_level |signal|.
inline PlantedInstance plant(const std::vector<std::int64_t>& n_dims, int r, int s,
                             const Eigen::VectorXd& sigmas, double noise_level,
                             std::uint64_t seed) {
  const int k = static_cast<int>(n_dims.size());
  if (k < 1) throw ArgumentError("plant: need at least one mode");
  if (s < 1 || s > k) throw ArgumentError("plant: s must be in [1, k]");
  if (r < 1) throw ArgumentError("plant: r must be >= 1");
  if (sigmas.size() != r) throw ArgumentError("plant: sigmas length must equal r");
  for (Eigen::Index j = 0; j < sigmas.size(); ++j)
    if (!(sigmas[j] > 0.0)) throw ArgumentError("plant: sigmas must be positive");
  if (!(noise_level >= 0.0)) throw ArgumentError("plant: noise_level must be >= 0");
  for (int i = 0; i < k; ++i)
    if (r > n_dims[static_cast<std::size_t>(i)])
      throw ArgumentError("plant: r exceeds dim of mode " + std::to_string(i) +
                          " (independence needs r <= min dim)");

  PlantedInstance out;
  out.noise_level = noise_level;
  out.seed = seed;
  out.true_sigmas = sigmas;
  out.true_factors.s = s;
  out.true_factors.factors.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto n = static_cast<int>(n_dims[static_cast<std::size_t>(i)]);
    const std::uint64_t mode_seed = derive_seed(seed, 1 + static_cast<std::uint64_t>(i));
    if (i < s) {
      out.true_factors.factors.push_back(random_orthonormal(n, r, mode_seed));
      continue;
    }
    Eigen::MatrixXd m(n, r);
    bool ok = false;
    for (std::uint64_t attempt = 0; attempt < 256 && !ok; ++attempt) {
      Rng rng(derive_seed(mode_seed, attempt));
      for (int j = 0; j < r; ++j) {
        double nv = 0.0;
        do {
          for (int t = 0; t < n; ++t) m(t, j) = rng.gaussian();
          nv = m.col(j).norm();
        } while (nv == 0.0);
        m.col(j) /= nv;
      }
      ok = sigma_min(m) >= 0.1;
    }
    if (!ok) throw InternalError("plant: could not reach sigma_min >= 0.1 in 256 attempts");
    out.true_factors.factors.push_back(std::move(m));
  }

  DiagonalCore core;
  core.lambdas = sigmas;
  DenseTensor signal = reconstruct(out.true_factors, core);
  if (noise_level > 0.0) {
    Rng rng(derive_seed(seed, 777));
    DenseTensor noise(signal.shape());
    double sq = 0.0;
    for (std::int64_t p = 0; p < noise.size(); ++p) {
      noise[p] = rng.gaussian();
      sq += noise[p] * noise[p];
    }
    if (sq > 0.0) {
      const double scale = noise_level * hs_norm(signal) / std::sqrt(sq);
      for (std::int64_t p = 0; p < noise.size(); ++p) signal[p] += scale * noise[p];
    }
  }
  out.tensor = std::move(signal);
  return out;
}

// Number of sigmas above tol; equals the tensor rank of the planted instance
// when at least two factor matrices are orthonormal (s >= 2).
inline int rank_from_sigmas(const Eigen::VectorXd& sigmas, double tol = 1e-8) {
  int count = 0;
  for (Eigen::Index j = 0; j < sigmas.size(); ++j)
    if (std::abs(sigmas[j]) > tol) ++count;
  return count;
}

// Numerical rank of the mode-0 flattening (n_0 x prod of the rest); agrees
// with the tensor rank for partially orthogonal tensors but is only a
// heuristic off that set or under noise.
inline int rank_via_flattening(const DenseTensor& t, double tol = 1e-8) {
  const std::int64_t rows64 = t.order() >= 1 ? t.shape().dim(0) : 1;
  const std::int64_t cols64 = t.size() / rows64;
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> flat(
      t.data().data(), rows64, cols64);
  Eigen::MatrixXd tall = rows64 >= cols64 ? Eigen::MatrixXd(flat) : Eigen::MatrixXd(flat.transpose());
  const Eigen::VectorXd sv = svd(tall).singular_values;
  const double top = sv.size() > 0 ? sv[0] : 0.0;
  if (top <= 0.0) return 0;
  int count = 0;
  for (Eigen::Index j = 0; j < sv.size(); ++j)
    if (sv[j] > tol * top) ++count;
  return count;
}

// dim = r (sum n_i - s(r-1)/2 - k + 1), the dimension of the stratum of
// rank-r partially orthogonal tensors with s orthonormal modes.
inline std::int64_t manifold_dimension(const std::vector<std::int64_t>& n_dims, int r, int s) {
  const int k = static_cast<int>(n_dims.size());
  if (k < 1) throw ArgumentError("manifold_dimension: need at least one mode");
  if (s < 0 || s > k) throw ArgumentError("manifold_dimension: s must be in [0, k]");
  if (r < 0) throw ArgumentError("manifold_dimension: r must be >= 0");
  std::int64_t dim_sum = 0;
  for (std::size_t i = 0; i < n_dims.size(); ++i) {
    const std::int64_t n = n_dims[i];
    if (n < 1) throw ArgumentError("manifold_dimension: dims must be >= 1");
    if (static_cast<int>(i) < s && r > n)
      throw ArgumentError("manifold_dimension: r exceeds an orthonormal mode dimension");
    dim_sum += n;
  }
  const std::int64_t twice =
      static_cast<std::int64_t>(r) * (2 * dim_sum - static_cast<std::int64_t>(s) * (r - 1) - 2 * (k - 1));
  if (twice % 2 != 0) throw InternalError("manifold_dimension: non-integer result");
  return twice / 2;
}

struct FactorMatch {
  double score = 0.0;
  bool partial = false;  // rank mismatch: unmatched ground-truth columns score 0
};

// Greedy column matching between a computed decomposition and the planted
// truth, scored by sigma-weighted mean absolute cosine across modes. A
// matched pair whose sign pattern is not realizable by admissible flips
// (product of mode flips absorbing sgn(lambda) must be +1) pays by flipping
// its weakest cosine.
inline FactorMatch factor_match(const FactorSet& u, const DiagonalCore& core,
                                const PlantedInstance& truth) {
  const int k = u.order();
  if (truth.true_factors.order() != k) throw DimensionError("factor_match: order mismatch");
  for (int i = 0; i < k; ++i)
    if (u.factors[static_cast<std::size_t>(i)].rows() !=
        truth.true_factors.factors[static_cast<std::size_t>(i)].rows())
      throw DimensionError("factor_match: factor rows mismatch");
  if (core.lambdas.size() != u.r_active()) throw DimensionError("factor_match: core length mismatch");

  const int ru = u.r_active();
  const int rt = truth.true_factors.r_active();
  FactorMatch out;
  out.partial = ru != rt;

  // Pairwise per-mode cosines; base score is the sign-insensitive mean.
  std::vector<std::vector<Eigen::VectorXd>> cos(static_cast<std::size_t>(ru));
  Eigen::MatrixXd base(ru, rt);
  for (int j = 0; j < ru; ++j) {
    cos[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(rt));
    for (int l = 0; l < rt; ++l) {
      Eigen::VectorXd c(k);
      for (int i = 0; i < k; ++i) {
        const auto& uc = u.factors[static_cast<std::size_t>(i)].col(j);
        const auto& tc = truth.true_factors.factors[static_cast<std::size_t>(i)].col(l);
        c[i] = std::clamp(uc.dot(tc), -1.0, 1.0);
      }
      cos[static_cast<std::size_t>(j)][static_cast<std::size_t>(l)] = c;
      base(j, l) = c.cwiseAbs().mean();
    }
  }

  std::vector<bool> used_u(static_cast<std::size_t>(ru), false);
  std::vector<bool> used_t(static_cast<std::size_t>(rt), false);
  double weighted = 0.0;
  double weight_sum = truth.true_sigmas.sum();
  const int n_pairs = std::min(ru, rt);
  for (int it = 0; it < n_pairs; ++it) {
    int bj = -1, bl = -1;
    double best = -1.0;
    for (int j = 0; j < ru; ++j) {
      if (used_u[static_cast<std::size_t>(j)]) continue;
      for (int l = 0; l < rt; ++l) {
        if (used_t[static_cast<std::size_t>(l)]) continue;
        if (base(j, l) > best) { best = base(j, l); bj = j; bl = l; }
      }
    }
    used_u[static_cast<std::size_t>(bj)] = true;
    used_t[static_cast<std::size_t>(bl)] = true;
    const Eigen::VectorXd& c = cos[static_cast<std::size_t>(bj)][static_cast<std::size_t>(bl)];
    double sign_prod = core.lambdas[bj] < 0.0 ? -1.0 : 1.0;
    double abs_sum = 0.0;
    double abs_min = 1.0;
    for (int i = 0; i < k; ++i) {
      sign_prod *= c[i] < 0.0 ? -1.0 : 1.0;
      abs_sum += std::abs(c[i]);
      abs_min = std::min(abs_min, std::abs(c[i]));
    }
    const double pair_score = (abs_sum - (sign_prod < 0.0 ? 2.0 * abs_min : 0.0)) / k;
    weighted += truth.true_sigmas[bl] * pair_score;
  }
  out.score = weight_sum > 0.0 ? std::clamp(weighted / weight_sum, 0.0, 1.0) : 0.0;
  return out;
}

inline double factor_match_score(const FactorSet& u, const DiagonalCore& core,
                                 const PlantedInstance& truth) {
  return factor_match(u, core, truth).score;
}

}  // namespace potapprox
