#include "catch_amalgamated.hpp"

#include "qbdtail/matcore.hpp"

#include <complex>
#include <random>

using namespace qbdtail;
using Catch::Approx;

namespace {

Matrix random_positive(std::mt19937_64& rng, Index n, double lo = 0.01, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) m(i, j) = u(rng);
  return m;
}

// Largest real root of det(lambda I - T) for 3x3 T, from the characteristic
// polynomial coefficients and Durand-Kerner root finding.
double cubic_oracle(const Matrix& t) {
  const double c2 = -t.trace();
  const double c1 = t(0, 0) * t(1, 1) - t(0, 1) * t(1, 0) + t(0, 0) * t(2, 2) - t(0, 2) * t(2, 0) +
                    t(1, 1) * t(2, 2) - t(1, 2) * t(2, 1);
  const double c0 = -t.determinant();
  using C = std::complex<double>;
  auto p = [&](C z) { return ((z + c2) * z + c1) * z + c0; };
  C r[3] = {C(0.4, 0.9), C(0.4, 0.9) * C(0.4, 0.9), C(0.4, 0.9) * C(0.4, 0.9) * C(0.4, 0.9)};
  for (int it = 0; it < 500; ++it)
    for (int i = 0; i < 3; ++i) {
      C d = 1.0;
      for (int j = 0; j < 3; ++j)
        if (j != i) d *= r[i] - r[j];
      r[i] -= p(r[i]) / d;
    }
  double best = -1e300;
  for (const C& z : r)
    if (std::abs(z.imag()) < 1e-9) best = std::max(best, z.real());
  return best;
}

}  // namespace

TEST_CASE("pf_eigen of a stochastic matrix", "[matcore][pf]") {
  Matrix p(3, 3);
  p << 0.2, 0.5, 0.3, 0.1, 0.1, 0.8, 0.6, 0.3, 0.1;
  const PerronResult r = pf_eigen(p);
  CHECK(r.value == Approx(1.0).margin(1e-12));
  for (Index i = 0; i < 3; ++i) CHECK(r.right(i) == Approx(1.0 / 3.0).margin(1e-12));
  CHECK(r.right.sum() == Approx(1.0));
  CHECK(r.left.sum() == Approx(1.0));
  CHECK((r.left.transpose() * p - r.left.transpose()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("pf_eigen of a periodic 2x2 matrix", "[matcore][pf]") {
  Matrix t(2, 2);
  t << 0.0, 2.0, 0.5, 0.0;
  const PerronResult r = pf_eigen(t);
  CHECK(r.value == Approx(1.0).margin(1e-12));
  t << 0.0, 3.0, 7.0, 0.0;
  CHECK(pf_eigen(t).value == Approx(std::sqrt(21.0)).epsilon(1e-12));
}

TEST_CASE("pf_eigen matches the characteristic polynomial", "[matcore][pf][property]") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix t = random_positive(rng, 3);
    CHECK(std::abs(pf_eigen(t).value - cubic_oracle(t)) < 1e-10);
  }
}

TEST_CASE("pf_eigen rejects reducible input", "[matcore][pf]") {
  Matrix t(2, 2);
  t << 0.5, 0.1, 0.0, 0.3;
  CHECK_THROWS_AS(pf_eigen(t), Error);
  try {
    pf_eigen(t);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotIrreducible);
  }
  CHECK(spectral_radius(t) == Approx(0.5));
}

TEST_CASE("pf_eigen is invariant under similarity and transposition", "[matcore][pf][property]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 4;
    Matrix t = random_positive(rng, n, 0.0, 1.0);
    Vector d(n);
    for (Index i = 0; i < n; ++i) d(i) = u(rng);
    const PerronResult a = pf_eigen(t);
    const PerronResult b = pf_eigen(DiagScale(d).apply(t));
    const PerronResult c = pf_eigen(t.transpose());
    CHECK(std::abs(a.value - b.value) < 1e-10);
    CHECK(std::abs(a.value - c.value) < 1e-10);
    CHECK((a.left - c.right).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(a.residual < 1e-10);
  }
}

TEST_CASE("pf_metzler of a generator", "[matcore][pf]") {
  Matrix q(2, 2);
  q << -1.0, 1.0, 2.0, -2.0;
  const PerronResult r = pf_metzler(q);
  CHECK(r.value == Approx(0.0).margin(1e-12));
  CHECK(r.left(0) == Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("kron_prod and kron_sum", "[matcore][kron]") {
  CHECK(kron_sum(Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0))(0, 0) == 3.0);
  Matrix b(2, 2);
  b << 1, 2, 3, 4;
  const Matrix k = kron_prod(identity(2), b);
  CHECK(k.block(0, 0, 2, 2) == b);
  CHECK(k.block(2, 2, 2, 2) == b);
  CHECK(k.block(0, 2, 2, 2).isZero());
  Matrix a(2, 2), c(2, 2);
  a << 0, 1, 1, 0;
  c << 0, 2, 2, 0;
  CHECK(pf_metzler(kron_sum(a, c)).value == Approx(3.0).epsilon(1e-12));
  CHECK_THROWS_AS(kron_sum(Matrix::Zero(2, 3), a), Error);
  const Matrix k3 = kron_sum({a, c, b});
  CHECK(k3.rows() == 8);
  CHECK((k3 - kron_sum(kron_sum(a, c), b)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kron_sum adds Perron values", "[matcore][kron][property]") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix a = random_positive(rng, 2 + trial % 2);
    const Matrix b = random_positive(rng, 2 + (trial / 2) % 2);
    const PerronResult pa = pf_eigen(a), pb = pf_eigen(b);
    const Matrix s = kron_sum(a, b);
    CHECK(std::abs(pf_eigen(s).value - (pa.value + pb.value)) < 1e-10);
    const Vector h = kron_prod(Matrix(pa.right), Matrix(pb.right));
    CHECK((s * h - (pa.value + pb.value) * h).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("neumann_inverse", "[matcore][neumann]") {
  CHECK(neumann_inverse(Matrix::Zero(3, 3)) == identity(3));
  CHECK(neumann_inverse(Matrix::Constant(1, 1, 0.5))(0, 0) == Approx(2.0));
  Matrix t(2, 2);
  t << 0.2, 0.3, 0.1, 0.4;
  const Matrix direct = (identity(2) - t).fullPivLu().solve(identity(2));
  CHECK((neumann_inverse(t) - direct).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(neumann_inverse(Matrix::Constant(1, 1, 1.0)), Error);
}

TEST_CASE("neumann_inverse equals the truncated power series", "[matcore][neumann][property]") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix t = random_positive(rng, 3, 0.0, 1.0);
    t *= 0.8 / pf_eigen(t).value;
    // ||T^N|| (I-T)^{-1} bounds the tail; 0.8^200 is far below 1e-8.
    Matrix sum = identity(3), pow = identity(3);
    for (int n = 1; n <= 200; ++n) {
      pow = pow * t;
      sum += pow;
    }
    const Matrix inv = neumann_inverse(t);
    CHECK(is_nonnegative(inv));
    CHECK((inv - sum).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("twist", "[matcore][twist]") {
  const std::vector<Matrix> blocks{Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.2),
                                   Matrix::Constant(1, 1, 0.1)};
  const auto same = twist(blocks, ones(1), 0.0, {-1, 0, 1});
  for (std::size_t i = 0; i < 3; ++i) CHECK(same[i] == blocks[i]);
  // 0.1 x^2 - 0.8 x + 0.5 = 0
  const double x = (0.8 - std::sqrt(0.64 - 0.2)) / 0.2;
  const auto tw = twist(blocks, ones(1), std::log(x), {-1, 0, 1});
  CHECK(tw[0](0, 0) + tw[1](0, 0) + tw[2](0, 0) == Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(twist(blocks, Vector::Constant(1, -1.0), 0.0, {-1, 0, 1}), Error);
}

TEST_CASE("twisted blocks sum to gamma times one", "[matcore][twist][property]") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> th(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Matrix> blocks{random_positive(rng, 3), random_positive(rng, 3), random_positive(rng, 3)};
    const double theta = th(rng);
    const Matrix a = std::exp(-theta) * blocks[0] + blocks[1] + std::exp(theta) * blocks[2];
    const PerronResult pf = pf_eigen(a);
    const auto tw = twist(blocks, pf.right, theta, {-1, 0, 1});
    const Vector rows = (tw[0] + tw[1] + tw[2]).rowwise().sum();
    CHECK((rows.array() - pf.value).abs().maxCoeff() < 1e-10 * pf.value);
  }
}
