#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "varcon/grad.hpp"

using namespace varcon;

namespace {

// Central differences of the literal composition oracle, independent of the
// library's loss kernel.
std::vector<double> composition_fd(std::span<const double> z, const Matrix& w, std::size_t anchor,
                                   double tau1, double eps, double h = 1e-4) {
  return finite_diff_oracle(
      [&](std::span<const long double> x) {
        return oracle::compose({x.begin(), x.end()}, w, anchor, tau1, eps).total();
      },
      z, h);
}

double scaled_error(const std::vector<double>& a, const std::vector<double>& b) {
  double scale = 1.0, err = 0.0;
  for (double v : b) scale = std::max(scale, std::abs(v));
  for (std::size_t j = 0; j < a.size(); ++j) err = std::max(err, std::abs(a[j] - b[j]));
  return err / scale;
}

Matrix identity_centroids(std::size_t c) {
  Matrix w(c, c);
  for (std::size_t k = 0; k < c; ++k) w(k, k) = 1.0;
  return w;
}

// Unit z tilted toward the anchor axis; a larger margin means a more confident posterior.
std::vector<double> leaning(std::size_t c, std::size_t anchor, double margin) {
  std::vector<double> z(c, 1.0);
  z[anchor] += margin;
  const double n = norm2(z);
  for (double& v : z) v /= n;
  return z;
}

// Sum over non-anchor log(q/p) minus (C-1) log(q_r/p_r), from the oracle.
long double aggregate_log_ratio(const oracle::Composition& c, std::size_t anchor) {
  long double s = 0;
  for (std::size_t k = 0; k < c.p.size(); ++k) {
    const long double r = std::log(c.q[k] / c.p[k]);
    s += k == anchor ? -static_cast<long double>(c.p.size() - 1) * r : r;
  }
  return s;
}

int sign(long double v) { return (v > 0) - (v < 0); }

}  // namespace

TEST_CASE("finite-difference oracle on a quadratic") {
  const double x[] = {1.0, 2.0};
  const auto g = finite_diff_oracle(
      [](std::span<const long double> v) { return v[0] * v[0] + v[1] * v[1]; }, x);
  CHECK(std::abs(g[0] - 2.0) < 1e-8);
  CHECK(std::abs(g[1] - 4.0) < 1e-8);
  CHECK_THROWS_AS(finite_diff_oracle([](auto) { return 0.0L; }, x, 0.0), InvalidArgument);
}

TEST_CASE("analytic z gradient matches composition finite differences") {
  for (std::uint64_t seed = 500; seed < 560; ++seed) {
    const auto inst = make_grad_instance(seed);
    const auto table = compute_centroids(inst.batch);
    for (std::size_t i = 0; i < inst.batch.size(); i += 3) {
      const std::size_t anchor = table.index_of(inst.batch.labels[i]);
      const auto analytic = grad_z_analytic(inst.batch, inst.temps, i);
      const auto fd = composition_fd(inst.batch.vectors.row(i), table.centroids, anchor,
                                     inst.temps.tau1, inst.temps.epsilon);
      CHECK(scaled_error(analytic, fd) < 1e-5);
    }
  }
}

TEST_CASE("batch loss gradient is the per-sample gradient over N") {
  const auto inst = make_grad_instance(77);
  const auto report = varcon_loss(inst.batch, inst.temps);
  const double n = static_cast<double>(inst.batch.size());
  for (std::size_t i = 0; i < inst.batch.size(); ++i) {
    const auto g = grad_z_analytic(inst.batch, inst.temps, i);
    for (std::size_t j = 0; j < g.size(); ++j) CHECK(std::abs(report.grad_z(i, j) * n - g[j]) < 1e-12);
  }
  CHECK(std::abs(report.grad_epsilon - grad_epsilon_analytic(inst.batch, inst.temps)) < 1e-14);
  CHECK_THROWS_AS(grad_z_analytic(inst.batch, inst.temps, inst.batch.size()), InvalidArgument);
}

TEST_CASE("zero epsilon reduces to the fixed-temperature softmax gradient") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + trial % 7, d = 3 + trial % 11;
    const Matrix w = oracle::random_unit_rows(c, d, rng);
    const Matrix z = oracle::random_unit_rows(1, d, rng);
    const std::size_t anchor = trial % c;
    const double tau1 = 0.05 + 0.0015 * trial;
    const auto g = sample_gradient(z.row(0), w, anchor, TemperatureState{tau1, 0.0, 0.0, 0.0});
    const auto ref = oracle::fixed_temperature_gradient(oracle::widen(z.row(0)), w, anchor, tau1);
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(g.grad_z[j] - static_cast<double>(ref[j])) < 1e-9 * (1 + std::abs(ref[j])));
  }
}

TEST_CASE("post-cancellation form equals the form with the +1 retained") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + trial % 9, d = 4 + trial % 13;
    const Matrix w = oracle::random_unit_rows(c, d, rng);
    const Matrix z = oracle::random_unit_rows(1, d, rng);
    const std::size_t anchor = trial % c;
    const TemperatureState temps{0.2, 0.05, 0.0, 0.05};
    const auto g = sample_gradient(z.row(0), w, anchor, temps);
    const auto ref = oracle::pre_cancellation_gradient(oracle::widen(z.row(0)), w, anchor, 0.2L, 0.05L);
    for (std::size_t j = 0; j < d; ++j)
      CHECK(std::abs(g.grad_z[j] - static_cast<double>(ref[j])) < 1e-9 * (1 + std::abs(ref[j])));
  }
}

TEST_CASE("symmetric two-class embedding with positive epsilon") {
  const Matrix w = identity_centroids(2);
  const double z[] = {std::sqrt(0.5), std::sqrt(0.5)};
  const TemperatureState temps{0.1, 0.03, 0.0, 0.08};
  const auto g = sample_gradient(z, w, 0, temps);
  CHECK(std::abs(g.p_anchor - 0.5) < 1e-15);
  CHECK(g.tau2 == doctest::Approx(0.1));
  const auto fd = composition_fd(z, w, 0, 0.1, 0.03);
  CHECK(scaled_error(g.grad_z, fd) < 1e-7);
  const auto ref = oracle::pre_cancellation_gradient(oracle::widen(z), w, 0, 0.1L, 0.03L);
  for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(g.grad_z[j] - static_cast<double>(ref[j])) < 1e-9);
}

TEST_CASE("epsilon gradient") {
  SUBCASE("vanishes at p = 0.5") {
    const Matrix w = identity_centroids(2);
    const double z[] = {std::sqrt(0.5), std::sqrt(0.5)};
    for (double eps : {0.0, 0.01, 0.05, 0.08}) {
      const auto g = sample_gradient(z, w, 1, TemperatureState{0.1, eps, 0.0, 0.08});
      CHECK(std::abs(g.grad_epsilon) < 1e-10);
    }
  }

  SUBCASE("matches finite differences in epsilon") {
    for (std::uint64_t seed = 900; seed < 940; ++seed) {
      const auto inst = make_grad_instance(seed);
      const auto table = compute_centroids(inst.batch);
      const double point[] = {inst.temps.epsilon};
      const auto fd = finite_diff_oracle(
          [&](std::span<const long double> e) {
            long double total = 0;
            for (std::size_t i = 0; i < inst.batch.size(); ++i)
              total += oracle::compose(oracle::widen(inst.batch.vectors.row(i)), table.centroids,
                                       table.index_of(inst.batch.labels[i]), inst.temps.tau1, e[0])
                           .total();
            return total / inst.batch.size();
          },
          point);
      const double analytic = grad_epsilon_analytic(inst.batch, inst.temps);
      CHECK(std::abs(analytic - fd[0]) / std::max(1.0, std::abs(fd[0])) < 1e-5);
    }
  }

  SUBCASE("confident anchor with a softer target is positive") {
    const Matrix w = identity_centroids(3);
    const auto z = leaning(3, 0, 20.0);
    const TemperatureState temps{0.1, 0.02, 0.0, 0.08};
    const auto c = oracle::compose(oracle::widen(z), w, 0, 0.1L, 0.02L);
    REQUIRE(c.p[0] > 0.5);
    REQUIRE(c.q[0] < c.p[0]);
    const auto g = sample_gradient(z, w, 0, temps);
    CHECK(g.grad_epsilon > 0);
    CHECK(sign(g.grad_epsilon) == sign(2 * c.p[0] - 1) * sign(aggregate_log_ratio(c, 0)));
  }

  SUBCASE("moderately confident anchor with a sharper target is negative") {
    const Matrix w = identity_centroids(3);
    const auto z = leaning(3, 0, 0.2);
    const auto c = oracle::compose(oracle::widen(z), w, 0, 0.1L, 0.02L);
    REQUIRE(c.p[0] > 0.5);
    REQUIRE(c.q[0] > c.p[0]);
    const auto g = sample_gradient(z, w, 0, TemperatureState{0.1, 0.02, 0.0, 0.08});
    CHECK(g.grad_epsilon < 0);
    CHECK(sign(g.grad_epsilon) == sign(2 * c.p[0] - 1) * sign(aggregate_log_ratio(c, 0)));
  }

  SUBCASE("sign law on random instances") {
    std::mt19937_64 rng(47);
    int positive = 0, negative = 0;
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t c = 2 + trial % 9, d = 4 + trial % 8;
      const Matrix w = oracle::random_unit_rows(c, d, rng);
      const Matrix z = oracle::random_unit_rows(1, d, rng);
      const std::size_t anchor = trial % c;
      const double tau1 = 0.05 + 0.0005 * (trial % 300) + (trial % 5 == 0 ? 1.0 : 0.0);
      const auto comp = oracle::compose(oracle::widen(z.row(0)), w, anchor, tau1, 0.04L);
      const auto g = sample_gradient(z.row(0), w, anchor, TemperatureState{tau1, 0.04, 0.0, 0.05});
      const long double agg = aggregate_log_ratio(comp, anchor);
      if (std::abs(agg) < 1e-9 || std::abs(2 * comp.p[anchor] - 1) < 1e-9) continue;
      const int expected = sign(2 * comp.p[anchor] - 1) * sign(agg);
      CHECK(sign(g.grad_epsilon) == expected);
      (expected > 0 ? positive : negative) += 1;
    }
    CHECK(positive > 0);
    CHECK(negative > 0);
  }
}

TEST_CASE("tangent projection") {
  const double z[] = {0.6, 0.8};
  const double along[] = {1.2, 1.6};
  for (double v : project_tangent(along, z)) CHECK(std::abs(v) < 1e-15);
  const double across[] = {-0.8, 0.6};
  const auto same = project_tangent(across, z);
  CHECK(same[0] == doctest::Approx(-0.8));
  CHECK(same[1] == doctest::Approx(0.6));

  std::mt19937_64 rng(53);
  std::normal_distribution<double> normal(0.0, 10.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + trial % 30;
    const Matrix u = oracle::random_unit_rows(1, d, rng);
    std::vector<double> g(d);
    for (double& v : g) v = normal(rng);
    const auto once = project_tangent(g, u.row(0));
    const auto twice = project_tangent(once, u.row(0));
    CHECK(std::abs(dot(once, u.row(0))) < 1e-10);
    for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(once[j] - twice[j]) < 1e-12);
  }
  const double short_z[] = {1.0};
  CHECK_THROWS_AS(project_tangent(across, short_z), ShapeMismatch);
}

TEST_CASE("gradient checker") {
  SUBCASE("passes on the correct gradient") {
    const auto r = run_grad_check(GradCheckOptions{});
    CHECK(r.num_probes == 100);
    CHECK(r.max_rel_error < 1e-5);
    CHECK(r.max_rel_error == std::max(r.max_rel_error_z, r.max_rel_error_eps));
    CHECK(r.max_rel_error >= 0.0);
  }
  SUBCASE("detects a 1% error in the attraction term") {
    GradCheckOptions opts;
    opts.corruption = GradCorruption::scale_attraction;
    CHECK(run_grad_check(opts).max_rel_error > 1e-5);
  }
  SUBCASE("detects a dropped target chain") {
    GradCheckOptions opts;
    opts.corruption = GradCorruption::drop_target_chain;
    CHECK(run_grad_check(opts).max_rel_error_z > 1e-5);
  }
  SUBCASE("instances are reproducible and inside the family") {
    for (std::uint64_t seed = 1; seed < 200; ++seed) {
      const auto a = make_grad_instance(seed), b = make_grad_instance(seed);
      CHECK(a.batch.vectors == b.batch.vectors);
      CHECK(a.batch.labels == b.batch.labels);
      const auto c = a.batch.num_classes_present();
      CHECK(c >= 2);
      CHECK(c <= 10);
      CHECK(a.batch.dim() >= 4);
      CHECK(a.batch.dim() <= 32);
      CHECK(a.temps.tau1 >= 0.05);
      CHECK(a.temps.tau1 <= 0.2);
      CHECK(a.temps.epsilon >= 0.0);
      CHECK(a.temps.epsilon <= 0.05);
      CHECK_NOTHROW(a.batch.validate());
    }
  }
  SUBCASE("zero probes") {
    GradCheckOptions opts;
    opts.probes = 0;
    CHECK_THROWS_AS(run_grad_check(opts), InvalidArgument);
  }
}
