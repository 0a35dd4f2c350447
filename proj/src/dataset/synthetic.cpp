#include "fairdemand/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "fairdemand/error.hpp"

namespace fairdemand::data {

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

std::vector<std::vector<double>> cholesky(const std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s <= 0.0) throw ValidationError("latent correlation matrix is not positive definite");
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return l;
}

void standardize(std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0, ss = 0.0;
  for (const double x : v) mean += x;
  mean /= n;
  for (const double x : v) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / n);
  for (auto& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
}

}  // namespace

const std::vector<std::vector<double>>& synthetic_omega() {
  static const std::vector<std::vector<double>> omega = {{1.0, 0.62, 0.504, -0.748},
                                                          {0.62, 1.0, 0.682, -0.61},
                                                          {0.504, 0.682, 1.0, -0.403},
                                                          {-0.748, -0.61, -0.403, 1.0}};
  return omega;
}

void SyntheticSpec::validate() const {
  if (nodes < 5) throw ValidationError("synthetic data needs at least 5 nodes");
  if (steps < 10) throw ValidationError("synthetic data needs at least 10 steps");
  if (grid_cols == 0) throw ValidationError("grid_cols must be positive");
  if (weights.size() != kDefaultAttributes.size()) {
    throw ValidationError("synthetic weights need one entry per attribute");
  }
  if (noise_weights.size() != kDefaultAttributes.size()) {
    throw ValidationError("synthetic noise weights need one entry per attribute");
  }
  if (!(pmax >= 0.0 && pmax < 1.0)) throw ValidationError("pmax must lie in [0,1)");
  if (!(mu0 > 0.0) || !(sigma0 >= 0.0) || !(spacing > 0.0)) {
    throw ValidationError("mu0 and spacing must be positive, sigma0 non-negative");
  }
}

nlohmann::json to_json(const SyntheticSpec& s) {
  return {{"nodes", s.nodes},   {"steps", s.steps},     {"grid_cols", s.grid_cols},
          {"spacing", s.spacing}, {"mu0", s.mu0},       {"beta", s.beta},
          {"sigma0", s.sigma0}, {"pmax", s.pmax},       {"daily", s.daily},
          {"weekly", s.weekly}, {"weights", s.weights}, {"noise_weights", s.noise_weights},
          {"noise_gain", s.noise_gain}, {"seed", s.seed},
          {"t0", s.t0}};
}

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  try {
    s.nodes = j.value("nodes", s.nodes);
    s.steps = j.value("steps", s.steps);
    s.grid_cols = j.value("grid_cols", s.grid_cols);
    s.spacing = j.value("spacing", s.spacing);
    s.mu0 = j.value("mu0", s.mu0);
    s.beta = j.value("beta", s.beta);
    s.sigma0 = j.value("sigma0", s.sigma0);
    s.pmax = j.value("pmax", s.pmax);
    s.daily = j.value("daily", s.daily);
    s.weekly = j.value("weekly", s.weekly);
    s.weights = j.value("weights", s.weights);
    s.noise_weights = j.value("noise_weights", s.noise_weights);
    s.noise_gain = j.value("noise_gain", s.noise_gain);
    s.seed = j.value("seed", s.seed);
    s.t0 = j.value("t0", s.t0);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t n = spec.nodes;
  const std::size_t q = kDefaultAttributes.size();
  const auto l = cholesky(synthetic_omega());
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SyntheticData out;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("Z" + std::to_string(1000 + i));
  out.attributes.node_ids = ids;
  out.attributes.names = kDefaultAttributes;
  for (const auto& a : kDefaultAttributes) out.attributes.directions.push_back(default_direction(a));
  out.attributes.z = Tensor(n, q);

  std::vector<double> d(n, 0.0), noise(n, 0.0);
  std::vector<double> u(q);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : u) v = normal(rng);
    for (std::size_t j = 0; j < q; ++j) {
      double g = 0.0;
      for (std::size_t k = 0; k <= j; ++k) g += l[j][k] * u[k];
      out.attributes.z(i, j) = phi(g);
      const double dir = out.attributes.directions[j] == Direction::high ? 1.0 : -1.0;
      d[i] -= spec.weights[j] * dir * g;
      noise[i] -= spec.noise_weights[j] * dir * g;
    }
  }
  standardize(d);
  standardize(noise);
  out.disadvantage = d;
  out.noise = noise;

  std::vector<double> phase(n);
  for (auto& p : phase) p = unif(rng) * 2.0 * std::numbers::pi;

  out.demand = DemandTensor(ids, parse_iso8601(spec.t0), std::chrono::hours(1), spec.steps);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = spec.mu0 * std::exp(-spec.beta * d[i]);
    const double dt = phi(d[i]);
    const double p_zero = spec.pmax * dt * dt;
    const double s0 = spec.sigma0 * std::exp(spec.noise_gain * noise[i]);
    for (std::size_t t = 0; t < spec.steps; ++t) {
      const double td = static_cast<double>(t);
      const double season = 1.0 + spec.daily * std::sin(2.0 * std::numbers::pi * td / 24.0 + phase[i]) +
                            spec.weekly * std::sin(2.0 * std::numbers::pi * td / 168.0);
      const double xi = normal(rng);
      const double drop = unif(rng);
      double y = mu * season * std::exp(s0 * xi - 0.5 * s0 * s0);
      if (drop < p_zero) y = 0.0;
      out.demand.at(i, t) = static_cast<std::int64_t>(std::llround(std::max(y, 0.0)));
    }
  }

  out.distances = Tensor(n, n);
  const auto col = [&](std::size_t i) { return static_cast<double>(i % spec.grid_cols); };
  const auto row = [&](std::size_t i) { return static_cast<double>(i / spec.grid_cols); };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out.distances(i, j) = spec.spacing * std::hypot(col(i) - col(j), row(i) - row(j));
    }
    if ((i + 1) % spec.grid_cols != 0 && i + 1 < n) out.neighbours.emplace_back(i, i + 1);
    if (i + spec.grid_cols < n) out.neighbours.emplace_back(i, i + spec.grid_cols);
  }
  return out;
}

SyntheticSpec opposing_bias_spec(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  s.weights = {1.0, 0.0, 0.0, 0.0};
  s.noise_weights = {0.0, -1.0, 0.0, 0.0};
  s.noise_gain = 0.8;
  return s;
}

}  // namespace fairdemand::data
