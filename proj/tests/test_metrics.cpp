#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "mfvi/metrics.hpp"
#include "mfvi/samplers.hpp"

using namespace mfvi;

namespace {

void perturb(const std::vector<Tensor>& params, std::mt19937_64& rng,
             double sd) {
  std::normal_distribution<double> nd(0.0, sd);
  for (auto p : params) {
    std::vector<double> v(p.size());
    for (auto& x : v) x = nd(rng);
    p.update_values(v);
  }
}

double standard_normal_logpdf(const Vec2& x) {
  return -std::log(2.0 * M_PI) - 0.5 * (x[0] * x[0] + x[1] * x[1]);
}

}  // namespace

TEST_CASE("kl proxy") {
  std::mt19937_64 init_rng(3);
  FlowConfig cfg{4, 16, 5.0};
  ConditionalFlow g(2, 2, cfg, init_rng);
  const Mat2 eye = Mat2::identity();

  SECTION("identity flow, unit noise, y = 0: value is 2 + log 2pi") {
    std::mt19937_64 rng(5);
    const double v =
        kl_proxy(g, eye, {0, 0}, standard_normal_prior(), {1.0}, 100'000, rng);
    CHECK(v == Catch::Approx(2.0 + std::log(2.0 * M_PI)).margin(0.02));
  }

  SECTION("sample size below 10^4 rejected") {
    std::mt19937_64 rng(5);
    CHECK_THROWS_AS(
        kl_proxy(g, eye, {0, 0}, standard_normal_prior(), {1.0}, 100, rng),
        std::invalid_argument);
  }

  SECTION("bit-identical under the same evaluation seed") {
    std::mt19937_64 r1(7), r2(7);
    const double a =
        kl_proxy(g, eye, {0, 0}, rosenbrock_prior(), {0.4}, 10'000, r1);
    const double b =
        kl_proxy(g, eye, {0, 0}, rosenbrock_prior(), {0.4}, 10'000, r2);
    CHECK(a == b);
  }

  SECTION("never below the analytic optimum for the Gaussian problem") {
    // KL >= 0 gives kl_proxy >= -log Z + H(z) = log 2 + 1 + log 2pi.
    const double floor = std::log(2.0) + 1.0 + std::log(2.0 * M_PI);
    std::mt19937_64 rng(11);
    for (int t = 0; t < 3; ++t) {
      ConditionalFlow f(2, 2, cfg, rng);
      perturb(f.params(), rng, 0.15);
      std::mt19937_64 erng(100 + t);
      const double v = kl_proxy(f, eye, {0, 0}, standard_normal_prior(), {1.0},
                                50'000, erng);
      REQUIRE(v > floor - 0.03);  // slack for Monte Carlo error
    }
  }

  SECTION("a constant prior offset shifts every flow's value equally") {
    const double c = 2.5;
    PriorLogProb base = [](const Tensor& x) {
      return rosenbrock_logpdf_tensor(x);
    };
    PriorLogProb shifted = [c](const Tensor& x) {
      Tensor cterm(x.rows(), 1, std::vector<double>(x.rows(), c));
      return add(rosenbrock_logpdf_tensor(x), cterm);
    };
    std::mt19937_64 rng(13);
    ConditionalFlow f(2, 2, cfg, rng);
    perturb(f.params(), rng, 0.1);
    for (const ConditionalFlow* flow : {&g, &f}) {
      std::mt19937_64 r1(17), r2(17);
      const double v0 =
          kl_proxy(*flow, eye, {0.2, 0.1}, base, {0.4}, 10'000, r1);
      const double v1 =
          kl_proxy(*flow, eye, {0.2, 0.1}, shifted, {0.4}, 10'000, r2);
      CHECK(v0 - v1 == Catch::Approx(c).epsilon(1e-10));
    }
  }
}

TEST_CASE("moment report") {
  SECTION("exact on a tiny hand-computed sample") {
    MomentReport r = moment_report({{0.0, 0.0}, {2.0, 2.0}});
    CHECK(r.mean[0] == 1.0);
    CHECK(r.mean[1] == 1.0);
    CHECK(r.cov[0][0] == 2.0);
    CHECK(r.cov[0][1] == 2.0);
    CHECK(r.cov[1][0] == 2.0);
    CHECK(r.cov[1][1] == 2.0);
  }

  SECTION("constant samples give zero covariance") {
    MomentReport r = moment_report({{1.5, -2.0}, {1.5, -2.0}, {1.5, -2.0}});
    CHECK(r.cov[0][0] == 0.0);
    CHECK(r.cov[1][1] == 0.0);
    CHECK(r.cov[0][1] == 0.0);
  }

  SECTION("recovers N(0, I) from a large sample") {
    std::mt19937_64 rng(19);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<Vec2> xs(1'000'000);
    for (auto& x : xs) x = {nd(rng), nd(rng)};
    MomentReport r = moment_report(xs);
    CHECK(r.mean[0] == Catch::Approx(0.0).margin(0.005));
    CHECK(r.mean[1] == Catch::Approx(0.0).margin(0.005));
    CHECK(r.cov[0][0] == Catch::Approx(1.0).margin(0.01));
    CHECK(r.cov[1][1] == Catch::Approx(1.0).margin(0.01));
    CHECK(r.cov[0][1] == Catch::Approx(0.0).margin(0.005));
  }

  SECTION("fewer than two samples rejected") {
    CHECK_THROWS_AS(moment_report({{1.0, 1.0}}), std::invalid_argument);
  }
}

TEST_CASE("density grids and quadrature") {
  SECTION("standard normal integrates to 1 on the default grid") {
    DensityGrid g = density_grid(standard_normal_logpdf, {});
    CHECK(g.integral() == Catch::Approx(1.0).margin(0.005));
  }

  SECTION("quadrature moments of the standard normal") {
    MomentReport r = grid_quadrature_moments(standard_normal_logpdf, {});
    CHECK(r.mean[0] == Catch::Approx(0.0).margin(1e-10));
    CHECK(r.mean[1] == Catch::Approx(0.0).margin(1e-10));
    CHECK(r.cov[0][0] == Catch::Approx(1.0).margin(1e-4));
    CHECK(r.cov[1][1] == Catch::Approx(1.0).margin(1e-4));
    CHECK(r.cov[0][1] == Catch::Approx(0.0).margin(1e-10));
  }

  SECTION("quadrature moments of the banana prior match the factorization") {
    // x1 ~ N(0,1), x2 | x1 ~ N(x1^2, 1/2): mean (0,1), var (1, 2.5), cov 0.
    GridSpec wide{-5.0, 5.0, -4.0, 20.0, 500, 600};
    MomentReport r = grid_quadrature_moments(
        [](const Vec2& x) { return rosenbrock_logpdf(x); }, wide);
    CHECK(r.mean[0] == Catch::Approx(0.0).margin(1e-6));
    CHECK(r.mean[1] == Catch::Approx(1.0).margin(1e-3));
    CHECK(r.cov[0][0] == Catch::Approx(1.0).margin(1e-3));
    CHECK(r.cov[1][1] == Catch::Approx(2.5).margin(5e-3));
    CHECK(r.cov[0][1] == Catch::Approx(0.0).margin(1e-6));
  }
}

TEST_CASE("flow log density") {
  std::mt19937_64 init_rng(23);
  FlowConfig cfg{4, 16, 5.0};

  SECTION("identity flow reproduces the standard normal exactly") {
    ConditionalFlow g(2, 2, cfg, init_rng);
    auto lp = flow_logpdf(g, {0.7, -0.3});
    CHECK(lp({0.0, 0.0}) == Catch::Approx(-std::log(2.0 * M_PI)).epsilon(1e-14));
    CHECK(lp({1.0, 2.0}) ==
          Catch::Approx(standard_normal_logpdf({1.0, 2.0})).epsilon(1e-12));
  }

  SECTION("density, quadrature, and sampling agree for a perturbed flow") {
    ConditionalFlow g(2, 2, cfg, init_rng);
    perturb(g.params(), init_rng, 0.1);
    const Vec2 y{0.4, -0.2};
    auto lp = flow_logpdf(g, y);

    GridSpec spec{-6.0, 6.0, -6.0, 6.0, 150, 150};
    DensityGrid grid = density_grid(lp, spec);
    CHECK(grid.integral() == Catch::Approx(1.0).margin(0.01));

    MomentReport quad = grid_quadrature_moments(lp, spec);
    std::mt19937_64 srng(29);
    MomentReport mc = moment_report(flow_samples(g, y, 200'000, srng));
    CHECK(mc.mean[0] == Catch::Approx(quad.mean[0]).margin(0.02));
    CHECK(mc.mean[1] == Catch::Approx(quad.mean[1]).margin(0.02));
    CHECK(mc.cov[0][0] == Catch::Approx(quad.cov[0][0]).margin(0.03));
    CHECK(mc.cov[1][1] == Catch::Approx(quad.cov[1][1]).margin(0.03));
    CHECK(mc.cov[0][1] == Catch::Approx(quad.cov[0][1]).margin(0.03));
  }
}

TEST_CASE("report csv writers") {
  SECTION("kl table") {
    std::vector<KlReport> rows{{3.0, 1.2345678, 0.98765, 0.54321, 10000, 42}};
    const std::string path = "test_metrics_kl.csv";
    kl_table_to_csv(rows, path, "run=unit");
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "# run=unit");
    std::getline(f, line);
    CHECK(line == "gamma,kl_low,kl_scratch,kl_precond,n_eval,seed");
    std::getline(f, line);
    CHECK(line == "3,1.235,0.9877,0.5432,10000,42");
    std::remove(path.c_str());
  }

  SECTION("density grid") {
    GridSpec spec{0.0, 1.0, 0.0, 1.0, 2, 2};
    DensityGrid g = density_grid([](const Vec2&) { return 0.25; }, spec);
    const std::string path = "test_metrics_grid.csv";
    density_grid_to_csv(g, path);
    std::ifstream f(path);
    std::string line;
    std::getline(f, line);
    CHECK(line == "x1,x2,logp");
    int rows = 0;
    while (std::getline(f, line)) ++rows;
    CHECK(rows == 4);
    std::remove(path.c_str());
  }
}
