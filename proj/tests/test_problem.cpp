#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "mfvi/problem.hpp"

using namespace mfvi;

namespace {

// Power-style oracle: rho(A) = lim_k ||A^k||_F^(1/k), valid for complex
// eigenvalue pairs too. Independent of the closed-form implementation.
double spectral_radius_oracle(const Mat2& m) {
  double p[4] = {1.0, 0.0, 0.0, 1.0};
  const double a[4] = {m.a, m.b, m.c, m.d};
  const int k = 200;
  double logscale = 0.0;
  for (int i = 0; i < k; ++i) {
    double q[4] = {p[0] * a[0] + p[1] * a[2], p[0] * a[1] + p[1] * a[3],
                   p[2] * a[0] + p[3] * a[2], p[2] * a[1] + p[3] * a[3]};
    double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (norm == 0.0) return 0.0;
    for (int j = 0; j < 4; ++j) p[j] = q[j] / norm;
    logscale += std::log(norm);
  }
  return std::exp(logscale / k);
}

}  // namespace

TEST_CASE("rosenbrock density") {
  SECTION("pinned values") {
    CHECK(rosenbrock_logpdf({0.0, 0.0}) == 0.0);
    CHECK(rosenbrock_logpdf({1.0, 1.0}) == -0.5);
    CHECK(rosenbrock_logpdf({0.0, 2.0}) == -4.0);
  }

  SECTION("gradient matches central finite differences") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 1.5);
    const double h = 1e-6;
    for (int t = 0; t < 50; ++t) {
      Vec2 x{nd(rng), nd(rng)};
      Vec2 g = rosenbrock_grad(x);
      for (int i = 0; i < 2; ++i) {
        Vec2 xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd =
            (rosenbrock_logpdf(xp) - rosenbrock_logpdf(xm)) / (2.0 * h);
        REQUIRE(std::abs(g[i] - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }

  SECTION("exact sampler reproduces the analytic moments") {
    // x1 ~ N(0,1); x2 | x1 ~ N(x1^2, 1/2) so E[x2]=1, Var[x2]=Var[x1^2]+1/2.
    std::mt19937_64 rng(21);
    auto xs = rosenbrock_sample(rng, 1'000'000);
    double m1 = 0, m2 = 0, v1 = 0, v2 = 0;
    for (const auto& x : xs) {
      m1 += x[0];
      m2 += x[1];
    }
    m1 /= xs.size();
    m2 /= xs.size();
    for (const auto& x : xs) {
      v1 += (x[0] - m1) * (x[0] - m1);
      v2 += (x[1] - m2) * (x[1] - m2);
    }
    v1 /= xs.size() - 1;
    v2 /= xs.size() - 1;
    CHECK(m1 == Catch::Approx(0.0).margin(0.01));
    CHECK(m2 == Catch::Approx(1.0).margin(0.01));
    CHECK(v1 == Catch::Approx(1.0).margin(0.01));
    CHECK(v2 == Catch::Approx(2.5).margin(0.03));
  }
}

TEST_CASE("spectral radius") {
  SECTION("matrices with known eigenvalues") {
    CHECK(spectral_radius({2.0, 0.0, 0.0, -3.0}) == 3.0);
    CHECK(spectral_radius({1.0, 5.0, 0.0, 1.0}) == 1.0);
    CHECK(spectral_radius({0.0, 1.0, -1.0, 0.0}) == 1.0);  // complex pair
    CHECK(spectral_radius({0.0, 2.0, 0.0, 0.0}) == 0.0);   // nilpotent
  }

  SECTION("matches the power-iteration oracle on random matrices") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int t = 0; t < 50; ++t) {
      Mat2 m{nd(rng), nd(rng), nd(rng), nd(rng)};
      const double want = spectral_radius_oracle(m);
      if (want < 0.1) continue;  // oracle loses accuracy near defectiveness
      REQUIRE(spectral_radius(m) == Catch::Approx(want).epsilon(0.05));
    }
  }
}

TEST_CASE("forward matrix construction") {
  SECTION("unit spectral radius for every gamma and seed") {
    std::mt19937_64 rng(41);
    for (double gamma : {0.0, 1.0, 2.0, 3.0, 10.0}) {
      for (int t = 0; t < 40; ++t) {
        Mat2 a = build_forward_matrix(gamma, rng);
        REQUIRE(spectral_radius(a) == Catch::Approx(1.0).margin(1e-12));
      }
    }
  }

  SECTION("mean distance to the identity decreases as gamma grows") {
    double prev = 1e300;
    for (double gamma : {0.0, 1.0, 2.0, 3.0}) {
      std::mt19937_64 rng(43);
      double acc = 0.0;
      const int n = 4000;
      for (int t = 0; t < n; ++t)
        acc += build_forward_matrix(gamma, rng).frobenius_dist_to_identity();
      acc /= n;
      CHECK(acc < prev);
      prev = acc;
    }
  }

  SECTION("large gamma yields nearly the identity") {
    std::mt19937_64 rng(47);
    Mat2 a = build_forward_matrix(1e6, rng);
    CHECK(a.frobenius_dist_to_identity() < 1e-4);
  }

  SECTION("negative gamma rejected; draws are reproducible") {
    std::mt19937_64 rng(49);
    CHECK_THROWS_AS(build_forward_matrix(-1.0, rng), std::invalid_argument);
    std::mt19937_64 r1(7), r2(7);
    Mat2 a = build_forward_matrix(2.0, r1);
    Mat2 b = build_forward_matrix(2.0, r2);
    CHECK(a.a == b.a);
    CHECK(a.b == b.b);
    CHECK(a.c == b.c);
    CHECK(a.d == b.d);
  }
}

TEST_CASE("pair generation") {
  SECTION("noiseless identity operator copies x into y") {
    std::mt19937_64 rng(51);
    ForwardOperator op{Mat2::identity(), 0.0, true};
    Dataset ds = generate_pairs(
        [](std::mt19937_64& r) { return rosenbrock_draw(r); }, op, 100, rng);
    REQUIRE(ds.size() == 100);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      CHECK(ds.y[i][0] == ds.x[i][0]);
      CHECK(ds.y[i][1] == ds.x[i][1]);
    }
  }

  SECTION("noise has the requested scale and zero mean") {
    std::mt19937_64 rng(53);
    ForwardOperator op{Mat2::identity(), 0.4, true};
    Dataset ds = generate_pairs(
        [](std::mt19937_64&) { return Vec2{0.0, 0.0}; }, op, 200'000, rng);
    double m = 0, v = 0;
    for (const auto& y : ds.y) m += y[0] + y[1];
    m /= 2.0 * ds.size();
    for (const auto& y : ds.y)
      v += (y[0] - m) * (y[0] - m) + (y[1] - m) * (y[1] - m);
    v /= 2.0 * ds.size() - 1;
    CHECK(m == Catch::Approx(0.0).margin(0.005));
    CHECK(v == Catch::Approx(0.16).margin(0.002));
  }

  SECTION("general operator applies the matrix before the noise") {
    std::mt19937_64 rng(57);
    Mat2 a{0.0, 1.0, -1.0, 0.0};  // rotation, easy to invert by eye
    ForwardOperator op{a, 0.0, false};
    Dataset ds = generate_pairs(
        [](std::mt19937_64&) { return Vec2{2.0, 3.0}; }, op, 1, rng);
    CHECK(ds.y[0][0] == 3.0);
    CHECK(ds.y[0][1] == -2.0);
  }

  SECTION("empty request rejected") {
    std::mt19937_64 rng(59);
    ForwardOperator op{Mat2::identity(), 0.4, true};
    CHECK_THROWS_AS(
        generate_pairs([](std::mt19937_64& r) { return rosenbrock_draw(r); },
                       op, 0, rng),
        std::invalid_argument);
  }

  SECTION("identical seeds give identical datasets") {
    ForwardOperator op{Mat2::identity(), 0.4, true};
    std::mt19937_64 r1(61), r2(61);
    Dataset d1 = generate_pairs(
        [](std::mt19937_64& r) { return rosenbrock_draw(r); }, op, 500, r1);
    Dataset d2 = generate_pairs(
        [](std::mt19937_64& r) { return rosenbrock_draw(r); }, op, 500, r2);
    CHECK(d1.x == d2.x);
    CHECK(d1.y == d2.y);
  }
}

TEST_CASE("dataset csv") {
  std::mt19937_64 rng(63);
  ForwardOperator op{Mat2::identity(), 0.4, true};
  Dataset ds = generate_pairs(
      [](std::mt19937_64& r) { return rosenbrock_draw(r); }, op, 10, rng,
      {0.0, 0.4, 63, "identity"});
  const std::string path = "test_problem_pairs.csv";
  dataset_to_csv(ds, path);

  std::ifstream f(path);
  REQUIRE(f.good());
  std::string line;
  std::getline(f, line);
  CHECK(line.find("operator=identity") != std::string::npos);
  CHECK(line.find("sigma=0.4") != std::string::npos);
  std::getline(f, line);
  CHECK(line == "y1,y2,x1,x2");
  int rows = 0;
  while (std::getline(f, line)) {
    double y1, y2, x1, x2;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &y1, &y2, &x1, &x2) == 4);
    CHECK(y1 == ds.y[rows][0]);  // %.17g round-trips doubles exactly
    CHECK(x2 == ds.x[rows][1]);
    ++rows;
  }
  CHECK(rows == 10);
  std::remove(path.c_str());
}
