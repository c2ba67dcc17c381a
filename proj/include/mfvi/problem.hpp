#ifndef MFVI_PROBLEM_HPP
#define MFVI_PROBLEM_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfvi/checkpoint.hpp"  // io_error

namespace mfvi {

using Vec2 = std::array<double, 2>;

struct Mat2 {
  // Row-major: [a b; c d].
  double a = 1.0, b = 0.0, c = 0.0, d = 1.0;

  Vec2 apply(const Vec2& x) const {
    return {a * x[0] + b * x[1], c * x[0] + d * x[1]};
  }
  Vec2 apply_transpose(const Vec2& x) const {
    return {a * x[0] + c * x[1], b * x[0] + d * x[1]};
  }
  static Mat2 identity() { return {}; }
  double frobenius_dist_to_identity() const {
    const double da = a - 1.0, dd = d - 1.0;
    return std::sqrt(da * da + b * b + c * c + dd * dd);
  }
};

/// Largest eigenvalue modulus from the closed-form 2x2 characteristic
/// polynomial; complex conjugate roots have modulus sqrt(det).
inline double spectral_radius(const Mat2& m) {
  const double tr = m.a + m.d;
  const double det = m.a * m.d - m.b * m.c;
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double s = std::sqrt(disc);
    return std::max(std::abs((tr + s) / 2.0), std::abs((tr - s) / 2.0));
  }
  return std::sqrt(det);
}

/// Unnormalized log density -x1^2/2 - (x2 - x1^2)^2.
inline double rosenbrock_logpdf(const Vec2& x) {
  const double r = x[1] - x[0] * x[0];
  return -0.5 * x[0] * x[0] - r * r;
}

inline Vec2 rosenbrock_grad(const Vec2& x) {
  const double r = x[1] - x[0] * x[0];
  return {-x[0] + 4.0 * r * x[0], -2.0 * r};
}

/// Exact draw via the factorization x1 ~ N(0,1), x2 | x1 ~ N(x1^2, 1/2).
inline Vec2 rosenbrock_draw(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  const double x1 = nd(rng);
  const double x2 = x1 * x1 + std::sqrt(0.5) * nd(rng);
  return {x1, x2};
}

inline std::vector<Vec2> rosenbrock_sample(std::mt19937_64& rng, std::size_t n) {
  std::vector<Vec2> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(rosenbrock_draw(rng));
  return out;
}

/// A = (Gamma + gamma*I) / rho(Gamma + gamma*I), Gamma with iid N(0,1)
/// entries. The result always has unit spectral radius.
inline Mat2 build_forward_matrix(double gamma, std::mt19937_64& rng) {
  if (gamma < 0.0) throw std::invalid_argument("build_forward_matrix: gamma < 0");
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat2 abar{nd(rng) + gamma, nd(rng), nd(rng), nd(rng) + gamma};
  const double rho = spectral_radius(abar);
  if (rho == 0.0)
    throw numeric_error("build_forward_matrix: zero spectral radius");
  return {abar.a / rho, abar.b / rho, abar.c / rho, abar.d / rho};
}

struct ForwardOperator {
  Mat2 matrix;
  double sigma = 0.4;
  bool is_identity = false;
};

struct DatasetProvenance {
  double gamma = 0.0;
  double sigma = 0.4;
  std::uint64_t seed = 0;
  std::string operator_kind;  // "identity" or "gamma"
};

struct Dataset {
  std::vector<Vec2> y;
  std::vector<Vec2> x;
  DatasetProvenance provenance;
  std::size_t size() const { return x.size(); }
};

/// y = A x + sigma * N(0, I), x from the prior sampler.
template <typename PriorSampler>
Dataset generate_pairs(PriorSampler&& prior_draw, const ForwardOperator& op,
                       std::size_t n, std::mt19937_64& rng,
                       DatasetProvenance provenance = {}) {
  if (n == 0) throw std::invalid_argument("generate_pairs: n must be >= 1");
  std::normal_distribution<double> nd(0.0, 1.0);
  Dataset ds;
  ds.x.reserve(n);
  ds.y.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vec2 x = prior_draw(rng);
    Vec2 fx = op.matrix.apply(x);
    ds.x.push_back(x);
    ds.y.push_back({fx[0] + op.sigma * nd(rng), fx[1] + op.sigma * nd(rng)});
  }
  ds.provenance = std::move(provenance);
  return ds;
}

/// Single high-fidelity observation for the inference phase.
inline Vec2 observed_data(const Vec2& x_true, const ForwardOperator& op,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Vec2 fx = op.matrix.apply(x_true);
  return {fx[0] + op.sigma * nd(rng), fx[1] + op.sigma * nd(rng)};
}

inline void dataset_to_csv(const Dataset& ds, const std::string& path,
                           const std::string& extra_header = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("dataset_to_csv: cannot open " + path);
  f << "# operator=" << ds.provenance.operator_kind
    << " gamma=" << ds.provenance.gamma << " sigma=" << ds.provenance.sigma
    << " seed=" << ds.provenance.seed;
  if (!extra_header.empty()) f << " " << extra_header;
  f << "\ny1,y2,x1,x2\n";
  char buf[160];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", ds.y[i][0],
                  ds.y[i][1], ds.x[i][0], ds.x[i][1]);
    f << buf;
  }
}

}  // namespace mfvi

#endif  // MFVI_PROBLEM_HPP
