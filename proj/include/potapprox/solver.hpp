#pragma once

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "potapprox/linalg.hpp"
#include "potapprox/ops.hpp"
#include "potapprox/rng.hpp"
#include "potapprox/tensor.hpp"

namespace potapprox {

// The point U: k factor matrices, the first s with orthonormal columns
// (Stiefel), the rest with unit columns (Oblique). All matrices share the
// active column count.
struct FactorSet {
  std::vector<Eigen::MatrixXd> factors;
  int s = 0;

  int order() const { return static_cast<int>(factors.size()); }
  int r_active() const { return factors.empty() ? 0 : static_cast<int>(factors[0].cols()); }

  // Largest constraint violation: |U^T U - I|_max on Stiefel modes, column
  // norm deviation on Oblique modes.
  double feasibility_error() const {
    double worst = 0.0;
    for (int i = 0; i < order(); ++i) {
      const Eigen::MatrixXd& u = factors[static_cast<std::size_t>(i)];
      if (i < s) {
        Eigen::MatrixXd g = u.transpose() * u;
        g.diagonal().array() -= 1.0;
        worst = std::max(worst, g.cwiseAbs().maxCoeff());
      } else {
        for (Eigen::Index j = 0; j < u.cols(); ++j)
          worst = std::max(worst, std::abs(u.col(j).norm() - 1.0));
      }
    }
    return worst;
  }

  void validate(double tol = 1e-8) const {
    if (factors.empty()) throw ArgumentError("FactorSet: no factors");
    if (s < 0 || s > order()) throw ArgumentError("FactorSet: s out of range");
    const int r = r_active();
    for (const auto& u : factors)
      if (u.cols() != r) throw DimensionError("FactorSet: inconsistent column counts");
    if (feasibility_error() > tol) throw ArgumentError("FactorSet: infeasible beyond tolerance");
  }
};

struct DiagonalCore {
  Eigen::VectorXd lambdas;
};

struct SolverConfig {
  std::optional<double> epsilon;   // proximal parameter; default 1e-3 * |A|
  std::optional<double> kappa;     // truncation parameter; default 0.5 * sqrt(f(U_0)/r)
  int max_sweeps = 10000;
  std::optional<double> stop_tol;  // on step norm; default 1e-10 * sqrt(sum(n_i) * r)
  std::uint64_t seed = 0;
  bool record_inner = false;       // keep per-mode lambda traces
};

struct IterationRecord {
  int sweep = 0;
  double objective_f = 0.0;
  double step_norm = 0.0;
  std::vector<int> truncated_indices;
  std::vector<int> proximal_modes;
  std::optional<double> kkt_residual;  // filled by diagnostics, not the solver
  double wall_time_ms = 0.0;
  int active_rank = 0;
  double truncation_drop = 0.0;        // sum of removed lambda^2, exact at removal
  std::vector<int> degenerate_indices; // ALS columns that hit a zero denominator
};

// Per-sweep lambda telemetry. lambdas_by_mode[t] is the lambda vector after t
// mode updates of the sweep; entry 0 is the carry from the previous sweep.
// When a truncation occurred, entries 0..s-1 keep their pre-truncation length.
struct InnerSweepTrace {
  int sweep = 0;
  int s = 0;
  std::vector<Eigen::VectorXd> lambdas_by_mode;
  std::vector<Eigen::VectorXd> als_col_steps;  // per ALS mode: |u_new_j - u_old_j| by column
};

// Mutable iteration state. lambdas_by_mode holds the lambda chain of the
// sweep in progress (or, between sweeps, of the last one); the carry
// invariant is lambdas_by_mode[0] of sweep p == lambdas_by_mode[k] of sweep
// p-1, bit-exact.
struct SweepState {
  FactorSet u;
  std::vector<Eigen::VectorXd> lambdas_by_mode;  // k+1 entries
  int sweep_index = 0;
  double epsilon = 0.0;  // resolved at initialization
  double kappa = 0.0;    // resolved at initialization
  int initial_rank = 0;
};

// lambda_j(U) = [(U1^T,...,Uk^T) . A]_{j,...,j}.
inline Eigen::VectorXd lambda_of(const DenseTensor& a, const FactorSet& u) {
  std::vector<Eigen::MatrixXd> transposes;
  transposes.reserve(u.factors.size());
  for (const auto& m : u.factors) transposes.push_back(m.transpose());
  return Diag_k(mat_tensor_product(transposes, a));
}

// f(U) = sum_j lambda_j(U)^2, the objective of the maximization form.
inline double objective_f(const DenseTensor& a, const FactorSet& u) {
  return lambda_of(a, u).squaredNorm();
}

// (U1,...,Uk) . diag_k(lambda).
inline DenseTensor reconstruct(const FactorSet& u, const DiagonalCore& core) {
  if (core.lambdas.size() != u.r_active())
    throw DimensionError("reconstruct: core length does not match active rank");
  if (u.r_active() < 1) throw ArgumentError("reconstruct: empty factor set");
  return mat_tensor_product(u.factors, diag_k(core.lambdas, u.order()));
}

// A convenience for building a consistent state at a given point: the lambda
// chain of a "sweep that changed nothing" is constant at lambda(U).
inline SweepState state_from_factors(const DenseTensor& a, FactorSet u, double epsilon,
                                     double kappa) {
  SweepState st;
  st.u = std::move(u);
  const Eigen::VectorXd lam = lambda_of(a, st.u);
  st.lambdas_by_mode.assign(static_cast<std::size_t>(st.u.order()) + 1, lam);
  st.epsilon = epsilon;
  st.kappa = kappa;
  st.initial_rank = st.u.r_active();
  return st;
}

// Lambda and V for the mode-i update, computed from the current factor
// columns: v_j = A tau_i(x_j) and lambda_j = <v_j, u_j> = A tau(x_j). During
// a sweep the stored columns are exactly the mixed chain x^i_j (modes < i
// already updated, modes >= i from the previous sweep).
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> compute_lambda_V(const DenseTensor& a,
                                                                    const SweepState& state,
                                                                    int mode) {
  const int k = state.u.order();
  if (mode < 0 || mode >= k) throw ArgumentError("compute_lambda_V: invalid mode");
  if (k != a.order()) throw InternalError("compute_lambda_V: state/tensor order mismatch");
  const int r = state.u.r_active();
  Eigen::MatrixXd V(a.shape().dim(mode), r);
  Eigen::VectorXd lam(r);
  std::vector<Eigen::VectorXd> cols(static_cast<std::size_t>(k));
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < k; ++i) cols[static_cast<std::size_t>(i)] = state.u.factors[static_cast<std::size_t>(i)].col(j);
    V.col(j) = A_tau_i(a, cols, mode);
    lam[j] = V.col(j).dot(state.u.factors[static_cast<std::size_t>(mode)].col(j));
  }
  return {lam, V};
}

namespace detail {
// V columns v_j = A tau_mode(u_j) over the tuple's current columns.
inline Eigen::MatrixXd compute_V(const DenseTensor& a, const FactorSet& u, int mode) {
  const int k = u.order();
  const int r = u.r_active();
  Eigen::MatrixXd V(a.shape().dim(mode), r);
  std::vector<Eigen::VectorXd> cols(static_cast<std::size_t>(k));
  for (int j = 0; j < r; ++j) {
    for (int i = 0; i < k; ++i) cols[static_cast<std::size_t>(i)] = u.factors[static_cast<std::size_t>(i)].col(j);
    V.col(j) = A_tau_i(a, cols, mode);
  }
  return V;
}

inline double sgn(double x) { return x < 0.0 ? -1.0 : 1.0; }  // sgn(0) := +1
}  // namespace detail

struct PolarUpdateResult {
  Eigen::MatrixXd u_new;
  bool proximal_applied = false;
  Eigen::MatrixXd S;           // symmetric factor of the (possibly corrected) polar step
  Eigen::VectorXd lambda_out;  // diag(u_new^T V): the next chain entry
  Eigen::MatrixXd V;
};

// Mode-i update for i < s. U_new in Polar(V Lambda) when the smallest
// singular value of V Lambda (which equals lambda_min(S)) clears epsilon;
// otherwise the proximal correction Polar(V Lambda + epsilon U_prev) anchors
// the step to the previous iterate.
inline PolarUpdateResult polar_update(const DenseTensor& a, const SweepState& state, int mode,
                                      const SolverConfig& config) {
  if (mode < 0 || mode >= state.u.s) throw ArgumentError("polar_update: mode must be a Stiefel mode");
  const double eps = config.epsilon ? *config.epsilon : state.epsilon;
  if (!(eps > 0.0)) throw ArgumentError("polar_update: epsilon must be positive");
  const Eigen::VectorXd& lam = state.lambdas_by_mode[static_cast<std::size_t>(mode)];
  if (lam.size() != state.u.r_active()) throw InternalError("polar_update: lambda chain out of sync");

  PolarUpdateResult out;
  out.V = detail::compute_V(a, state.u, mode);
  const Eigen::MatrixXd M = out.V * lam.asDiagonal();
  const SvdResult sv = svd(M);
  if (sv.singular_values[sv.singular_values.size() - 1] >= eps) {
    out.u_new = sv.u * sv.v.transpose();
    Eigen::MatrixXd h = sv.v * sv.singular_values.asDiagonal() * sv.v.transpose();
    out.S = 0.5 * (h + h.transpose());
  } else {
    const PolarResult pr = polar(M + eps * state.u.factors[static_cast<std::size_t>(mode)]);
    out.u_new = pr.orthonormal_factor;
    out.S = pr.psd_factor;
    out.proximal_applied = true;
  }
  out.lambda_out = (out.u_new.transpose() * out.V).diagonal();
  return out;
}

struct AlsUpdateResult {
  Eigen::MatrixXd u_new;
  Eigen::VectorXd lambda_out;   // sgn(lambda_in) * |v_j|
  std::vector<int> degenerate;  // columns with |v_j| = 0, kept in place with lambda 0
  Eigen::MatrixXd V;
};

// Mode-i update for i >= s: u_j = sgn(lambda_j) v_j / |v_j|, the normalized
// least-squares step. |lambda| can only grow within the sweep.
inline AlsUpdateResult als_update(const DenseTensor& a, const SweepState& state, int mode) {
  if (mode < state.u.s || mode >= state.u.order())
    throw ArgumentError("als_update: mode must be an Oblique mode");
  const Eigen::VectorXd& lam = state.lambdas_by_mode[static_cast<std::size_t>(mode)];
  if (lam.size() != state.u.r_active()) throw InternalError("als_update: lambda chain out of sync");

  AlsUpdateResult out;
  out.V = detail::compute_V(a, state.u, mode);
  const int r = state.u.r_active();
  out.u_new.resize(out.V.rows(), r);
  out.lambda_out.resize(r);
  for (int j = 0; j < r; ++j) {
    const double nv = out.V.col(j).norm();
    if (nv == 0.0) {
      out.u_new.col(j) = state.u.factors[static_cast<std::size_t>(mode)].col(j);
      out.lambda_out[j] = 0.0;
      out.degenerate.push_back(j);
    } else {
      const double sg = detail::sgn(lam[j]);
      out.u_new.col(j) = (sg / nv) * out.V.col(j);
      out.lambda_out[j] = sg * nv;
    }
  }
  return out;
}

struct TruncationResult {
  std::vector<int> removed;
  double objective_drop = 0.0;  // sum of removed lambda^2
};

// Removes every column j with |lambda^s_j| < kappa from all factor matrices
// (executed once per sweep, right after the i = s polar update, so Stiefel
// modes lose sweep-p columns and Oblique modes sweep-(p-1) columns). The
// drop in f per removal is the removed lambda^2 < kappa^2.
inline TruncationResult truncate(SweepState& state, double kappa) {
  const int s = state.u.s;
  const int r = state.u.r_active();
  if (static_cast<int>(state.lambdas_by_mode.size()) != state.u.order() + 1)
    throw InternalError("truncate: lambda chain missing");
  const Eigen::VectorXd lam_s = state.lambdas_by_mode[static_cast<std::size_t>(s)];
  if (lam_s.size() != r) throw InternalError("truncate: lambda chain out of sync");

  TruncationResult out;
  std::vector<int> keep;
  for (int j = 0; j < r; ++j) {
    if (std::abs(lam_s[j]) < kappa) {
      out.removed.push_back(j);
      out.objective_drop += lam_s[j] * lam_s[j];
    } else {
      keep.push_back(j);
    }
  }
  if (out.removed.empty()) return out;
  if (keep.empty()) throw InternalError("truncate: would remove every column");

  const auto nk = static_cast<int>(keep.size());
  for (auto& f : state.u.factors) {
    Eigen::MatrixXd g(f.rows(), nk);
    for (int j = 0; j < nk; ++j) g.col(j) = f.col(keep[static_cast<std::size_t>(j)]);
    f = std::move(g);
  }
  for (auto& lam : state.lambdas_by_mode) {
    if (lam.size() != r) continue;  // stale entry from before an earlier truncation
    Eigen::VectorXd g(nk);
    for (int j = 0; j < nk; ++j) g[j] = lam[keep[static_cast<std::size_t>(j)]];
    lam = std::move(g);
  }
  return out;
}

struct SweepOutcome {
  IterationRecord record;
  std::optional<InnerSweepTrace> trace;
};

// One full sweep: polar updates on modes 0..s-1, the truncation test, ALS
// updates on modes s..k-1. Advances the sweep index and the lambda chain.
inline SweepOutcome sweep(const DenseTensor& a, SweepState& state, const SolverConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int k = state.u.order();
  const int s = state.u.s;

  std::vector<Eigen::MatrixXd> u_prev = state.u.factors;

  // Start a fresh chain; the carry lambda^0_[p] = lambda^k_[p-1] is bit-exact.
  Eigen::VectorXd carry = state.lambdas_by_mode[static_cast<std::size_t>(k)];
  state.lambdas_by_mode.assign(static_cast<std::size_t>(k) + 1, Eigen::VectorXd());
  state.lambdas_by_mode[0] = std::move(carry);

  SweepOutcome out;
  IterationRecord& rec = out.record;
  rec.sweep = state.sweep_index + 1;

  if (config.record_inner) {
    out.trace.emplace();
    out.trace->sweep = rec.sweep;
    out.trace->s = s;
  }

  for (int i = 0; i < s; ++i) {
    PolarUpdateResult pu = polar_update(a, state, i, config);
    state.u.factors[static_cast<std::size_t>(i)] = std::move(pu.u_new);
    state.lambdas_by_mode[static_cast<std::size_t>(i) + 1] = std::move(pu.lambda_out);
    if (pu.proximal_applied) rec.proximal_modes.push_back(i);
  }

  TruncationResult tr = truncate(state, state.kappa);
  rec.truncated_indices = tr.removed;
  rec.truncation_drop = tr.objective_drop;
  if (!tr.removed.empty()) {
    std::vector<int> keep;
    for (int j = 0, r = static_cast<int>(u_prev[0].cols()); j < r; ++j) {
      bool gone = false;
      for (int g : tr.removed) gone = gone || (g == j);
      if (!gone) keep.push_back(j);
    }
    for (auto& f : u_prev) {
      Eigen::MatrixXd g(f.rows(), static_cast<Eigen::Index>(keep.size()));
      for (std::size_t j = 0; j < keep.size(); ++j) g.col(static_cast<Eigen::Index>(j)) = f.col(keep[j]);
      f = std::move(g);
    }
  }

  for (int i = s; i < k; ++i) {
    AlsUpdateResult au = als_update(a, state, i);
    if (out.trace) {
      const Eigen::MatrixXd& old_u = state.u.factors[static_cast<std::size_t>(i)];
      Eigen::VectorXd steps(au.u_new.cols());
      for (Eigen::Index j = 0; j < au.u_new.cols(); ++j) steps[j] = (au.u_new.col(j) - old_u.col(j)).norm();
      out.trace->als_col_steps.push_back(std::move(steps));
    }
    state.u.factors[static_cast<std::size_t>(i)] = std::move(au.u_new);
    state.lambdas_by_mode[static_cast<std::size_t>(i) + 1] = std::move(au.lambda_out);
    for (int j : au.degenerate) rec.degenerate_indices.push_back(j);
  }

  state.sweep_index += 1;
  rec.objective_f = state.lambdas_by_mode[static_cast<std::size_t>(k)].squaredNorm();
  double sq = 0.0;
  for (int i = 0; i < k; ++i)
    sq += (state.u.factors[static_cast<std::size_t>(i)] - u_prev[static_cast<std::size_t>(i)]).squaredNorm();
  rec.step_norm = std::sqrt(sq);
  rec.active_rank = state.u.r_active();
  if (out.trace) out.trace->lambdas_by_mode = state.lambdas_by_mode;
  rec.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Seeds modes < s with random orthonormal matrices and modes >= s with
// normalized Gaussian columns, retrying with derived seeds until
// f(U_0) > 0 (at most 16 attempts). Resolves epsilon/kappa defaults.
inline SweepState initialize(const DenseTensor& a, int r, int s, const SolverConfig& config) {
  const int k = a.order();
  if (k < 1) throw ArgumentError("initialize: tensor must have order >= 1");
  if (hs_norm(a) == 0.0) throw ArgumentError("initialize: zero tensor");
  if (s < 1 || s > k) throw ArgumentError("initialize: s must be in [1, k]");
  if (r < 1) throw ArgumentError("initialize: r must be >= 1");
  for (int i = 0; i < s; ++i)
    if (r > a.shape().dim(i))
      throw ArgumentError("initialize: r exceeds dim of orthonormal mode " + std::to_string(i));
  if (config.max_sweeps < 1) throw ArgumentError("initialize: max_sweeps must be >= 1");
  if (config.epsilon && !(*config.epsilon > 0.0)) throw ArgumentError("initialize: epsilon must be positive");

  FactorSet u;
  u.s = s;
  Eigen::VectorXd lam0;
  double f0 = 0.0;
  bool ok = false;
  for (std::uint64_t attempt = 0; attempt < 16 && !ok; ++attempt) {
    const std::uint64_t att_seed = derive_seed(config.seed, attempt);
    u.factors.assign(static_cast<std::size_t>(k), Eigen::MatrixXd());
    for (int i = 0; i < k; ++i) {
      const Eigen::Index n = a.shape().dim(i);
      if (i < s) {
        u.factors[static_cast<std::size_t>(i)] =
            random_orthonormal(static_cast<int>(n), r, derive_seed(att_seed, 101 + static_cast<std::uint64_t>(i)));
      } else {
        Rng rng(derive_seed(att_seed, 201 + static_cast<std::uint64_t>(i)));
        Eigen::MatrixXd m(n, r);
        for (int j = 0; j < r; ++j) {
          double nv = 0.0;
          do {
            for (Eigen::Index t = 0; t < n; ++t) m(t, j) = rng.gaussian();
            nv = m.col(j).norm();
          } while (nv == 0.0);
          m.col(j) /= nv;
        }
        u.factors[static_cast<std::size_t>(i)] = std::move(m);
      }
    }
    lam0 = lambda_of(a, u);
    f0 = lam0.squaredNorm();
    ok = f0 > 0.0;
  }
  if (!ok) throw InitializationError("initialize: f(U_0) = 0 after 16 seeded attempts");

  SweepState st;
  st.u = std::move(u);
  st.lambdas_by_mode.assign(static_cast<std::size_t>(k) + 1, lam0);
  st.sweep_index = 0;
  st.initial_rank = r;
  st.epsilon = config.epsilon ? *config.epsilon : 1e-3 * hs_norm(a);
  const double kappa_sup = std::sqrt(f0 / r);
  if (config.kappa) {
    if (!(*config.kappa > 0.0) || !(*config.kappa < kappa_sup))
      throw ArgumentError("initialize: kappa must lie in (0, sqrt(f(U_0)/r))");
    st.kappa = *config.kappa;
  } else {
    st.kappa = 0.5 * kappa_sup;
  }
  return st;
}

struct SolveResult {
  FactorSet factors;
  DiagonalCore core;
  std::vector<IterationRecord> records;      // includes a sweep-0 record for f(U_0)
  std::vector<InnerSweepTrace> inner_traces; // when config.record_inner
  std::string status;                        // "converged" or "cap"
  int initial_rank = 0;
  double epsilon = 0.0;
  double kappa = 0.0;
  double stop_tol = 0.0;
};

using SweepCallback = std::function<void(const SweepState&, IterationRecord&)>;

// Runs sweeps until the step norm falls to stop_tol or the sweep cap is hit
// (the latter is a status, not an error). The optional callback sees the
// state after every recorded sweep, e.g. to fill IterationRecord.kkt_residual.
inline SolveResult solve(const DenseTensor& a, int r, int s, const SolverConfig& config,
                         const SweepCallback& on_sweep = {}) {
  SweepState state = initialize(a, r, s, config);
  double stop_tol = 0.0;
  if (config.stop_tol) {
    if (!(*config.stop_tol > 0.0)) throw ArgumentError("solve: stop_tol must be positive");
    stop_tol = *config.stop_tol;
  } else {
    std::int64_t dim_sum = 0;
    for (std::int64_t d : a.shape().dims()) dim_sum += d;
    stop_tol = 1e-10 * std::sqrt(static_cast<double>(dim_sum) * static_cast<double>(r));
  }

  SolveResult out;
  out.initial_rank = r;
  out.epsilon = state.epsilon;
  out.kappa = state.kappa;
  out.stop_tol = stop_tol;

  IterationRecord rec0;
  rec0.sweep = 0;
  rec0.objective_f = state.lambdas_by_mode[static_cast<std::size_t>(a.order())].squaredNorm();
  rec0.active_rank = state.u.r_active();
  if (on_sweep) on_sweep(state, rec0);
  out.records.push_back(std::move(rec0));

  out.status = "cap";
  for (int p = 1; p <= config.max_sweeps; ++p) {
    SweepOutcome so = sweep(a, state, config);
    if (on_sweep) on_sweep(state, so.record);
    const double step = so.record.step_norm;
    out.records.push_back(std::move(so.record));
    if (so.trace) out.inner_traces.push_back(std::move(*so.trace));
    if (step <= stop_tol) {
      out.status = "converged";
      break;
    }
  }

  out.core.lambdas = lambda_of(a, state.u);
  out.factors = std::move(state.u);
  return out;
}

}  // namespace potapprox
