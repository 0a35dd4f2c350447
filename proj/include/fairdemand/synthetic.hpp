#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fairdemand/dataset.hpp"
#include "json.hpp"

namespace fairdemand::data {

// Demand with a planted accuracy bias. Each node draws latent attribute
// scores g ~ N(0, omega) (omega close to the Chicago census correlations),
// published as z = Phi(g). A disadvantage score d = -sum_j w_j dir_j g_j,
// standardized, lowers the mean demand and raises the chance that an hour
// records zero trips. Zero hours are excluded from APE, so forecasters that
// shrink towards the zero-inflated mean underpredict the remaining hours of
// disadvantaged nodes.
struct SyntheticSpec {
  std::size_t nodes = 60;
  std::size_t steps = 2000;
  std::size_t grid_cols = 10;  // nodes sit on a grid for the spatial graph
  double spacing = 50.0;       // distance between grid neighbours
  double mu0 = 20.0;
  double beta = 0.8;    // demand level falls as exp(-beta d)
  double sigma0 = 0.1;  // lognormal noise
  double pmax = 0.5;    // zero-hour probability pmax * Phi(d)^2
  double daily = 0.5;
  double weekly = 0.2;
  std::vector<double> weights{0.25, 0.25, 0.25, 0.25};
  std::vector<double> noise_weights{0.0, 0.0, 0.0, 0.0};
  double noise_gain = 0.0;
  std::uint64_t seed = 0;
  std::string t0 = "2021-01-01T00:00:00Z";

  void validate() const;
};

nlohmann::json to_json(const SyntheticSpec& s);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j);

// Correlations the latent scores are drawn with, in kDefaultAttributes order.
const std::vector<std::vector<double>>& synthetic_omega();

struct SyntheticData {
  DemandTensor demand;
  ProtectedAttributeTable attributes;
  std::vector<double> disadvantage;  // standardized d per node
  std::vector<double> noise;         // standardized s per node
  Tensor distances;                  // N x N
  std::vector<std::pair<std::size_t, std::size_t>> neighbours;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Two planted biases from separate mechanisms: zero hours at the first
// attribute's disadvantaged end and extra noise at the second attribute's
// advantaged end.
SyntheticSpec opposing_bias_spec(std::uint64_t seed);

}  // namespace fairdemand::data
