#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "fairdemand/tensor.hpp"

namespace fairdemand::graph {

using diff::Tensor;

struct GaussianParams {
  double sigma2 = 1e4;
  double alpha = 0.5;
  // Multiplies raw distances before the kernel is applied, so the distance
  // unit is a setting. At scale 1 the default cutoff is d = 83.26.
  double distance_scale = 1.0;
};

struct WeightedAdjacency {
  Tensor w;  // N x N
  GaussianParams params;

  std::size_t nonzeros() const;
};

// w_ij = exp(-(s d_ij)^2 / sigma2) when i != j and the value is >= alpha.
WeightedAdjacency gaussian_adjacency(const Tensor& distances, const GaussianParams& params = {});

struct BinaryAdjacency {
  Tensor a;  // N x N, entries 0 or 1
  std::size_t self_pairs_ignored = 0;
};

BinaryAdjacency binary_adjacency(std::size_t n,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs);

// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
Tensor propagation_matrix(const BinaryAdjacency& adjacency);

// Square distance matrix with a header row of zone ids. Rows must follow
// the header order.
struct DistanceMatrix {
  std::vector<std::string> node_ids;
  Tensor d;
};
DistanceMatrix read_distance_csv(std::istream& in);

// `zone_a,zone_b` pairs, resolved against `node_ids`. Pairs naming an
// unknown zone are skipped and counted.
BinaryAdjacency read_neighbor_csv(std::istream& in, const std::vector<std::string>& node_ids,
                                  std::size_t* unknown = nullptr);

// Keeps the listed rows and columns.
Tensor select_square(const Tensor& m, const std::vector<std::size_t>& keep);

}  // namespace fairdemand::graph
