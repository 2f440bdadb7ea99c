#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>

#include "oracles.hpp"
#include "potapprox/linalg.hpp"
#include "potapprox/rng.hpp"

using namespace potapprox;

namespace {

Eigen::MatrixXd rand_mat(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd a(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = rng.gaussian();
  return a;
}

}  // namespace

TEST_CASE("svd: frozen examples") {
  SvdResult id3 = svd(Eigen::MatrixXd::Identity(3, 3));
  for (int i = 0; i < 3; ++i) CHECK(id3.singular_values[i] == Catch::Approx(1.0).margin(1e-14));

  Eigen::MatrixXd d(2, 2);
  d << 3, 0, 0, 4;
  SvdResult ds = svd(d);
  CHECK(ds.singular_values[0] == Catch::Approx(4.0).margin(1e-13));
  CHECK(ds.singular_values[1] == Catch::Approx(3.0).margin(1e-13));

  Eigen::MatrixXd m(2, 2);
  m << 0, -2, 3, 0;
  SvdResult ms = svd(m);
  // independent oracle: eigenvalues of M^T M from the characteristic polynomial
  Eigen::MatrixXd g = m.transpose() * m;
  const double tr = g(0, 0) + g(1, 1);
  const double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
  const double disc = std::sqrt(tr * tr - 4.0 * det);
  CHECK(ms.singular_values[0] == Catch::Approx(std::sqrt(0.5 * (tr + disc))).margin(1e-13));
  CHECK(ms.singular_values[1] == Catch::Approx(std::sqrt(0.5 * (tr - disc))).margin(1e-13));
  CHECK(ms.singular_values[0] == Catch::Approx(3.0).margin(1e-13));
  CHECK(ms.singular_values[1] == Catch::Approx(2.0).margin(1e-13));
}

TEST_CASE("svd: invariants on 200 seeded matrices") {
  for (std::uint64_t t = 0; t < 200; ++t) {
    Rng pick(derive_seed(1234, t));
    const auto m = static_cast<Eigen::Index>(1 + static_cast<Eigen::Index>(pick.uniform() * 6));  // 1..6
    const Eigen::Index n = m + static_cast<Eigen::Index>(pick.uniform() * 3);                     // m..m+2
    Eigen::MatrixXd a = rand_mat(n, m, derive_seed(999, t));
    SvdResult r = svd(a);

    const Eigen::Index cols = a.cols();
    CHECK((r.u.transpose() * r.u - Eigen::MatrixXd::Identity(cols, cols)).norm() <= 1e-10);
    CHECK((r.v.transpose() * r.v - Eigen::MatrixXd::Identity(cols, cols)).norm() <= 1e-10);
    for (Eigen::Index j = 0; j + 1 < cols; ++j)
      CHECK(r.singular_values[j] >= r.singular_values[j + 1]);
    CHECK(r.singular_values[cols - 1] >= 0.0);
    const double scale = std::max(1.0, a.norm());
    CHECK((r.u * r.singular_values.asDiagonal() * r.v.transpose() - a).norm() <= 1e-10 * scale);

    // cross-check singular values against Eigen's implementation
    Eigen::VectorXd ref = oracle::singular_values(a);
    CHECK((r.singular_values - ref).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, ref[0]));

    // sign convention: the largest-magnitude entry of each right singular
    // vector is positive
    for (Eigen::Index j = 0; j < cols; ++j) {
      Eigen::Index at = 0;
      r.v.col(j).cwiseAbs().maxCoeff(&at);
      CHECK(r.v(at, j) >= 0.0);
    }
  }
}

TEST_CASE("svd: determinism and degenerate inputs") {
  Eigen::MatrixXd a = rand_mat(5, 4, 42);
  SvdResult r1 = svd(a);
  SvdResult r2 = svd(a);
  CHECK((r1.u.array() == r2.u.array()).all());
  CHECK((r1.v.array() == r2.v.array()).all());
  CHECK((r1.singular_values.array() == r2.singular_values.array()).all());

  SvdResult z = svd(Eigen::MatrixXd::Zero(4, 3));
  CHECK(z.singular_values.norm() == 0.0);
  CHECK((z.u.transpose() * z.u - Eigen::MatrixXd::Identity(3, 3)).norm() <= 1e-12);

  // rank-1 via duplicated columns
  Eigen::MatrixXd dup(3, 2);
  dup << 1, 1, 2, 2, 2, 2;
  SvdResult rd = svd(dup);
  CHECK(rd.singular_values[0] == Catch::Approx(std::sqrt(18.0)).margin(1e-12));
  CHECK(rd.singular_values[1] <= 1e-12);
  CHECK((rd.u.transpose() * rd.u - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-10);
  CHECK((rd.u * rd.singular_values.asDiagonal() * rd.v.transpose() - dup).norm() <= 1e-10 * dup.norm());

  Eigen::MatrixXd bad(2, 2);
  bad << 1, 2, 3, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(svd(bad), ArgumentError);
  CHECK_THROWS_AS(svd(rand_mat(2, 3, 7)), ArgumentError);
  CHECK_THROWS_AS(svd(Eigen::MatrixXd(2, 0)), ArgumentError);
}

TEST_CASE("polar: frozen examples") {
  PolarResult id = polar(Eigen::MatrixXd::Identity(2, 2));
  CHECK((id.orthonormal_factor - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-14);
  CHECK((id.psd_factor - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-14);

  Eigen::MatrixXd rot(2, 2);
  rot << 0, -1, 1, 0;
  PolarResult pr = polar(rot);
  CHECK((pr.orthonormal_factor - rot).norm() <= 1e-13);
  CHECK((pr.psd_factor - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-13);

  Eigen::MatrixXd sh(2, 2);
  sh << 1, 1, 0, 1;
  PolarResult ps = polar(sh);
  Eigen::MatrixXd h_ref = oracle::psd_sqrt(sh.transpose() * sh);
  CHECK((ps.psd_factor - h_ref).norm() <= 1e-12);
  CHECK((ps.orthonormal_factor * ps.psd_factor - sh).norm() <= 1e-13);
}

TEST_CASE("polar: invariants, dual route, optimality") {
  for (std::uint64_t t = 0; t < 50; ++t) {
    const Eigen::Index m = 2 + static_cast<Eigen::Index>(t % 4);  // 2..5
    const Eigen::Index n = m + static_cast<Eigen::Index>(t % 3);  // m..m+2
    Eigen::MatrixXd a = rand_mat(n, m, derive_seed(5555, t));
    PolarResult p = polar(a);

    CHECK((p.orthonormal_factor.transpose() * p.orthonormal_factor -
           Eigen::MatrixXd::Identity(m, m)).norm() <= 1e-10);
    CHECK((p.psd_factor - p.psd_factor.transpose()).norm() <= 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.psd_factor);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    CHECK((p.orthonormal_factor * p.psd_factor - a).norm() <= 1e-10 * std::max(1.0, a.norm()));

    // independent route: H = sqrt(A^T A), U = A H^{-1} (full rank w.h.p.)
    Eigen::MatrixXd h2 = oracle::psd_sqrt(a.transpose() * a);
    Eigen::MatrixXd u2 = a * h2.inverse();
    CHECK((p.orthonormal_factor - u2).norm() <= 1e-8);
    CHECK((p.psd_factor - h2).norm() <= 1e-8 * std::max(1.0, h2.norm()));

    // optimality of the polar factor over orthonormal matrices
    const double best = (p.orthonormal_factor.transpose() * a).trace();
    for (std::uint64_t q = 0; q < 20; ++q) {
      Eigen::MatrixXd qq = random_orthonormal(static_cast<int>(n), static_cast<int>(m),
                                              derive_seed(derive_seed(31, t), q));
      CHECK(best >= (qq.transpose() * a).trace() - 1e-10);
    }
  }
}

TEST_CASE("sigma_min") {
  CHECK(sigma_min(Eigen::MatrixXd::Identity(3, 3)) == Catch::Approx(1.0).margin(1e-14));
  Eigen::MatrixXd ones(2, 2);
  ones << 1, 1, 1, 1;
  CHECK(sigma_min(ones) <= 1e-10);
  Eigen::MatrixXd d(2, 2);
  d << 3, 0, 0, 4;
  CHECK(sigma_min(d) == Catch::Approx(3.0).margin(1e-13));
}

TEST_CASE("polar_error_bound_gap") {
  Eigen::MatrixXd b = rand_mat(4, 3, 81);
  Eigen::MatrixXd c = rand_mat(2, 3, 82);
  Eigen::MatrixXd w = polar(b * c.transpose()).orthonormal_factor;
  CHECK(std::abs(polar_error_bound_gap(b, c, w)) <= 1e-12);

  Eigen::MatrixXd q0 = random_orthonormal(4, 2, 83);
  CHECK(polar_error_bound_gap(b, Eigen::MatrixXd::Zero(2, 3), q0) == Catch::Approx(0.0).margin(1e-12));

  for (std::uint64_t t = 0; t < 100; ++t) {
    Eigen::MatrixXd bb = rand_mat(4, 3, derive_seed(700, t));
    Eigen::MatrixXd cc = rand_mat(2, 3, derive_seed(800, t));
    Eigen::MatrixXd qq = random_orthonormal(4, 2, derive_seed(900, t));
    CHECK(polar_error_bound_gap(bb, cc, qq) >= -1e-8 * bb.squaredNorm());
  }

  CHECK_THROWS_AS(polar_error_bound_gap(b, rand_mat(2, 4, 84), q0), DimensionError);
  CHECK_THROWS_AS(polar_error_bound_gap(b, c, rand_mat(4, 2, 85)), ArgumentError);
  CHECK_THROWS_AS(polar_error_bound_gap(b, c, random_orthonormal(3, 2, 86)), DimensionError);
}

TEST_CASE("orthonormal_distance_gap") {
  Eigen::MatrixXd u = random_orthonormal(4, 2, 51);
  CHECK(orthonormal_distance_gap(u, u) == Catch::Approx(0.0).margin(1e-14));

  Eigen::MatrixXd i2 = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd neg = -i2;  // rotation by pi
  // direct evaluation: |U-V|^2 = 8 and |U^T V - I|^2 = 8
  CHECK((i2 - neg).squaredNorm() == 8.0);
  CHECK(orthonormal_distance_gap(i2, neg) == Catch::Approx(0.0).margin(1e-14));

  for (std::uint64_t t = 0; t < 100; ++t) {
    Eigen::MatrixXd a = random_orthonormal(5, 3, derive_seed(61, t));
    Eigen::MatrixXd b = random_orthonormal(5, 3, derive_seed(62, t));
    CHECK(orthonormal_distance_gap(a, b) >= -1e-10);
  }

  CHECK_THROWS_AS(orthonormal_distance_gap(rand_mat(4, 2, 63), u), ArgumentError);
  CHECK_THROWS_AS(orthonormal_distance_gap(u, random_orthonormal(4, 3, 64)), DimensionError);
}

TEST_CASE("random_orthonormal") {
  Eigen::MatrixXd one = random_orthonormal(1, 1, 7);
  CHECK(one(0, 0) == 1.0);

  Eigen::MatrixXd a = random_orthonormal(4, 2, 99);
  Eigen::MatrixXd b = random_orthonormal(4, 2, 99);
  CHECK((a.array() == b.array()).all());  // bit-identical for a fixed seed
  CHECK((a.transpose() * a - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-10);
  CHECK((a - random_orthonormal(4, 2, 100)).norm() > 0.0);

  CHECK_THROWS_AS(random_orthonormal(2, 3, 1), ArgumentError);
  CHECK_THROWS_AS(random_orthonormal(0, 0, 1), ArgumentError);
}
