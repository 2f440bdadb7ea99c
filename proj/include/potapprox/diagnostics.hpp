#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "potapprox/ops.hpp"
#include "potapprox/solver.hpp"
#include "potapprox/tensor.hpp"

namespace potapprox {

// Riemannian gradient components of the Lagrangian-form objective
// g(U, x) = |A|^2/2 - sum_j x_j A tau(u_j) + |x|^2/2 at a feasible point.
struct GradComponents {
  std::vector<Eigen::MatrixXd> factor_grads;
  Eigen::VectorXd x_grad;
};

// i < s: -(I - U U^T/2)(V G - U (V G)^T U); i >= s: -(V G - U ddiag(U^T V G));
// x component: x - lambda(U). G = diag(x). The Stiefel form (canonical
// metric) coincides with the Euclidean tangent projection at feasible U.
inline GradComponents riemannian_grad_components(const DenseTensor& a, const FactorSet& u,
                                                 const DiagonalCore& x) {
  const int k = u.order();
  if (a.order() != k) throw DimensionError("riemannian_grad_components: order mismatch");
  if (x.lambdas.size() != u.r_active())
    throw DimensionError("riemannian_grad_components: core length mismatch");
  for (int i = 0; i < k; ++i)
    if (u.factors[static_cast<std::size_t>(i)].rows() != a.shape().dim(i))
      throw DimensionError("riemannian_grad_components: factor rows mismatch tensor dims");

  GradComponents out;
  out.factor_grads.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    const Eigen::MatrixXd& uu = u.factors[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd m = detail::compute_V(a, u, i) * x.lambdas.asDiagonal();
    if (i < u.s) {
      const Eigen::MatrixXd t = m - uu * (m.transpose() * uu);
      out.factor_grads.push_back(-(t - 0.5 * uu * (uu.transpose() * t)));
    } else {
      const Eigen::VectorXd d = (uu.transpose() * m).diagonal();
      out.factor_grads.push_back(-(m - uu * d.asDiagonal()));
    }
  }
  out.x_grad = x.lambdas - lambda_of(a, u);
  return out;
}

struct KktResidual {
  std::vector<double> per_mode_stiefel;
  std::vector<double> per_mode_oblique;
  double lambda_residual = 0.0;
  double total = 0.0;
  double total_normalized = 0.0;  // total / (|A| * max(1, |lambda|))
};

// First-order criticality at (U, lambda(U)). Stiefel residual per mode:
// |V L - U sym(U^T V L)|_F (the symmetric part is the unique admissible
// multiplier); Oblique residual: |V L - U diag(lambda^2)|_F. The lambda
// residual is zero by construction since lambda is computed from U.
inline KktResidual kkt_residual(const DenseTensor& a, const FactorSet& u) {
  const int k = u.order();
  if (a.order() != k) throw DimensionError("kkt_residual: order mismatch");
  const Eigen::VectorXd lam = lambda_of(a, u);

  KktResidual out;
  double sq = 0.0;
  for (int i = 0; i < k; ++i) {
    const Eigen::MatrixXd& uu = u.factors[static_cast<std::size_t>(i)];
    const Eigen::MatrixXd m = detail::compute_V(a, u, i) * lam.asDiagonal();
    double res = 0.0;
    if (i < u.s) {
      const Eigen::MatrixXd b = uu.transpose() * m;
      const Eigen::MatrixXd sym = 0.5 * (b + b.transpose());
      res = (m - uu * sym).norm();
      out.per_mode_stiefel.push_back(res);
    } else {
      const Eigen::VectorXd lam2 = lam.array().square();
      res = (m - uu * lam2.asDiagonal()).norm();
      out.per_mode_oblique.push_back(res);
    }
    sq += res * res;
  }
  out.lambda_residual = 0.0;
  out.total = std::sqrt(sq + out.lambda_residual * out.lambda_residual);
  const double denom = hs_norm(a) * std::max(1.0, lam.norm());
  out.total_normalized = denom > 0.0 ? out.total / denom : 0.0;
  return out;
}

struct SweepIncreaseCheck {
  int sweep = 0;
  bool exempt = false;  // truncation sweeps are not covered by the inequality
  bool pass = true;
  double gain = 0.0;      // f_p - f_{p-1}
  double required = 0.0;  // min(eps, 2 kappa^2)/2 * step^2, before slack
};

struct IncreaseReport {
  bool all_pass = true;
  std::vector<SweepIncreaseCheck> checks;
};

// Per-sweep sufficient increase: in every non-truncation sweep,
// f_p - f_{p-1} >= min(eps, 2 kappa^2)/2 * step_norm^2, with floating-point
// slack 1e-10 |A|^2.
inline IncreaseReport assert_sufficient_increase(const std::vector<IterationRecord>& records,
                                                 double epsilon, double kappa,
                                                 double a_hs_norm) {
  IncreaseReport out;
  const double c = 0.5 * std::min(epsilon, 2.0 * kappa * kappa);
  const double slack = 1e-10 * a_hs_norm * a_hs_norm;
  for (std::size_t p = 1; p < records.size(); ++p) {
    SweepIncreaseCheck ck;
    ck.sweep = records[p].sweep;
    if (!records[p].truncated_indices.empty()) {
      ck.exempt = true;
    } else {
      ck.gain = records[p].objective_f - records[p - 1].objective_f;
      ck.required = c * records[p].step_norm * records[p].step_norm;
      ck.pass = ck.gain >= ck.required - slack;
    }
    out.all_pass = out.all_pass && ck.pass;
    out.checks.push_back(ck);
  }
  return out;
}

struct ChainCheck {
  int sweep = 0;
  bool sign_ok = true;
  bool monotone_ok = true;
  bool identity_ok = true;
  bool pass = true;
  double worst_monotone_gap = 0.0;  // max_j |lam^i_j| - |lam^{i+1}_j|
  double worst_identity_err = 0.0;
};

struct ChainReport {
  bool all_pass = true;
  std::vector<ChainCheck> checks;
};

// ALS-segment checks per sweep trace (i = s..k-1): sign coherence
// sgn(lam^{i+1}) = sgn(lam^i), monotone growth |lam^{i+1}| >= |lam^i| - 1e-12,
// and the per-update identity
// lam^{i+1}_j - lam^i_j = sgn(lam^i_j) |lam^{i+1}_j|/2 |u_new_j - u_old_j|^2
// within 1e-10.
inline ChainReport assert_lambda_chain(const std::vector<InnerSweepTrace>& traces) {
  ChainReport out;
  for (const auto& tr : traces) {
    if (tr.lambdas_by_mode.empty()) throw ArgumentError("assert_lambda_chain: empty trace");
    const int k = static_cast<int>(tr.lambdas_by_mode.size()) - 1;
    const int s = tr.s;
    if (s < 0 || s > k || static_cast<int>(tr.als_col_steps.size()) != k - s)
      throw ArgumentError("assert_lambda_chain: trace shape mismatch");
    ChainCheck ck;
    ck.sweep = tr.sweep;
    for (int i = s; i < k; ++i) {
      const Eigen::VectorXd& lo = tr.lambdas_by_mode[static_cast<std::size_t>(i)];
      const Eigen::VectorXd& hi = tr.lambdas_by_mode[static_cast<std::size_t>(i) + 1];
      const Eigen::VectorXd& d = tr.als_col_steps[static_cast<std::size_t>(i - s)];
      if (lo.size() != hi.size() || d.size() != hi.size())
        throw ArgumentError("assert_lambda_chain: trace shape mismatch");
      for (Eigen::Index j = 0; j < lo.size(); ++j) {
        const double slo = detail::sgn(lo[j]);
        if (detail::sgn(hi[j]) != slo) ck.sign_ok = false;
        ck.worst_monotone_gap = std::max(ck.worst_monotone_gap, std::abs(lo[j]) - std::abs(hi[j]));
        const double predicted = slo * 0.5 * std::abs(hi[j]) * d[j] * d[j];
        ck.worst_identity_err = std::max(ck.worst_identity_err, std::abs((hi[j] - lo[j]) - predicted));
      }
    }
    ck.monotone_ok = ck.worst_monotone_gap <= 1e-12;
    ck.identity_ok = ck.worst_identity_err <= 1e-10;
    ck.pass = ck.sign_ok && ck.monotone_ok && ck.identity_ok;
    out.all_pass = out.all_pass && ck.pass;
    out.checks.push_back(ck);
  }
  return out;
}

// The subgradient witness constant 2 sqrt(k) (2 r sqrt(k) |A|^2 + epsilon):
// after sweep p+1 a witness W with |2 W| <= const * |U_[p+1] - U_[p]|_F can
// be assembled from the per-mode update quantities.
inline double subdiff_bound_constant(const DenseTensor& a, int r, int k, double epsilon) {
  if (r < 1 || k < 1) throw ArgumentError("subdiff_bound_constant: r and k must be >= 1");
  if (epsilon < 0.0) throw ArgumentError("subdiff_bound_constant: epsilon must be >= 0");
  const double nrm = hs_norm(a);
  const double sk = std::sqrt(static_cast<double>(k));
  return 2.0 * sk * (2.0 * static_cast<double>(r) * sk * nrm * nrm + epsilon);
}

// zeta = 1 - 1/(2k (6k-3)^(N-1)). For realistic N the power overflows and
// the result saturates at 1.0 in double precision; the exact value is below
// but astronomically close to 1.
inline double lojasiewicz_exponent_from_N(int k, std::int64_t n_vars) {
  if (k < 1) throw ArgumentError("lojasiewicz_exponent: k must be >= 1");
  if (n_vars < 1) throw ArgumentError("lojasiewicz_exponent: N must be >= 1");
  const double p = std::pow(6.0 * k - 3.0, static_cast<double>(n_vars - 1));
  return 1.0 - 1.0 / (2.0 * k * p);
}

// N = (1 + sum_{i<=s} n_i) r + s (r+1) r / 2: the variable count of the
// polynomial (Lagrangian in the Stiefel blocks and their multipliers) whose
// degree-2k Lojasiewicz bound gives zeta.
inline double lojasiewicz_exponent(int k, const std::vector<std::int64_t>& n_dims, int r, int s) {
  if (static_cast<int>(n_dims.size()) != k) throw ArgumentError("lojasiewicz_exponent: k mismatch");
  if (s < 1 || s > k) throw ArgumentError("lojasiewicz_exponent: s must be in [1, k]");
  if (r < 1) throw ArgumentError("lojasiewicz_exponent: r must be >= 1");
  std::int64_t dim_sum = 0;
  for (int i = 0; i < s; ++i) {
    if (n_dims[static_cast<std::size_t>(i)] < 1) throw ArgumentError("lojasiewicz_exponent: dims must be >= 1");
    dim_sum += n_dims[static_cast<std::size_t>(i)];
  }
  const std::int64_t n_vars =
      (1 + dim_sum) * r + static_cast<std::int64_t>(s) * (r + 1) * r / 2;
  return lojasiewicz_exponent_from_N(k, n_vars);
}

struct RateEstimate {
  std::string model = "undecided";  // "linear", "sublinear", or "undecided"
  double linear_factor = 0.0;       // in (0,1) when model == "linear"
  double sublinear_exponent = 0.0;  // slope of log e vs log p when sublinear
  double fit_r2 = 0.0;
  int tail_start = -1;              // sweep index of the first tail point
};

namespace detail {
struct OlsFit {
  bool ok = false;
  double slope = 0.0;
  double r2 = 0.0;
};

inline OlsFit ols(const std::vector<double>& xs, const std::vector<double>& ys) {
  OlsFit out;
  const std::size_t n = xs.size();
  if (n < 2 || ys.size() != n) return out;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) { mx += xs[i]; my += ys[i]; }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0 || syy <= 1e-24) return out;  // degenerate or flat data
  out.slope = sxy / sxx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ys[i] - (my + out.slope * (xs[i] - mx));
    ss_res += e * e;
  }
  out.r2 = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  out.ok = true;
  return out;
}
}  // namespace detail

// Fits the error e_p = f* - f_p over the post-truncation tail against a
// geometric model (log e vs p) and a power-law model (log e vs log p) and
// reports the better fit. f* defaults to the final objective plus a machine
// slack; sweeps with e_p below 1e3 eps |A|^2 (roundoff plateau) are excluded.
inline RateEstimate estimate_rate(const std::vector<IterationRecord>& records,
                                  std::optional<double> f_star_hint, double a_hs_norm) {
  if (!(a_hs_norm > 0.0)) throw ArgumentError("estimate_rate: tensor norm must be positive");
  std::size_t start = 0;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (!records[i].truncated_indices.empty()) start = i + 1;
  if (records.size() - start < 20)
    throw ArgumentError("estimate_rate: need at least 20 post-truncation records");

  const double a2 = a_hs_norm * a_hs_norm;
  const double eps_mach = std::numeric_limits<double>::epsilon();
  const double f_star = f_star_hint ? *f_star_hint : records.back().objective_f + eps_mach * a2;
  const double floor_e = 1e3 * eps_mach * a2;

  std::vector<std::pair<int, double>> pts;  // (sweep, e)
  for (std::size_t i = start; i < records.size(); ++i) {
    const double e = f_star - records[i].objective_f;
    if (e >= floor_e) pts.emplace_back(records[i].sweep, e);
  }

  RateEstimate out;
  if (pts.size() < 5) return out;
  std::size_t tail_n = std::max<std::size_t>(10, pts.size() / 2);
  tail_n = std::min(tail_n, pts.size());
  const std::size_t t0 = pts.size() - tail_n;
  out.tail_start = pts[t0].first;

  std::vector<double> xs_lin, ys_lin, xs_sub, ys_sub;
  for (std::size_t i = t0; i < pts.size(); ++i) {
    const double y = std::log(pts[i].second);
    xs_lin.push_back(static_cast<double>(pts[i].first));
    ys_lin.push_back(y);
    if (pts[i].first >= 1) {
      xs_sub.push_back(std::log(static_cast<double>(pts[i].first)));
      ys_sub.push_back(y);
    }
  }
  const detail::OlsFit lin = detail::ols(xs_lin, ys_lin);
  const detail::OlsFit sub = detail::ols(xs_sub, ys_sub);
  const double factor = lin.ok ? std::exp(lin.slope) : 0.0;
  const double r2_lin = (lin.ok && factor > 0.0 && factor < 1.0) ? lin.r2 : -1.0;
  const double r2_sub = sub.ok ? sub.r2 : -1.0;

  if (r2_lin >= r2_sub && r2_lin >= 0.9) {
    out.model = "linear";
    out.linear_factor = factor;
    out.fit_r2 = r2_lin;
  } else if (r2_sub > r2_lin && r2_sub >= 0.9) {
    out.model = "sublinear";
    out.sublinear_exponent = sub.slope;
    out.fit_r2 = r2_sub;
  } else {
    out.fit_r2 = std::clamp(std::max(r2_lin, r2_sub), 0.0, 1.0);
  }
  return out;
}

}  // namespace potapprox
