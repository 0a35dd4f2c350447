#include "fairdemand/graph.hpp"

#include <cmath>
#include <iostream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"

namespace fairdemand::graph {

std::size_t WeightedAdjacency::nonzeros() const {
  std::size_t n = 0;
  for (const double v : w.values()) n += v != 0.0;
  return n;
}

WeightedAdjacency gaussian_adjacency(const Tensor& distances, const GaussianParams& params) {
  if (distances.rows() != distances.cols()) throw ValidationError("distance matrix must be square");
  if (!(params.sigma2 > 0.0)) throw ValidationError("sigma2 must be positive");
  if (!(params.alpha >= 0.0 && params.alpha < 1.0)) throw ValidationError("alpha must lie in [0,1)");
  if (!(params.distance_scale > 0.0)) throw ValidationError("distance scale must be positive");
  const std::size_t n = distances.rows();
  WeightedAdjacency out{Tensor(n, n), params};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = distances(i, j);
      if (!(d >= 0.0) || !std::isfinite(d)) {
        throw ValidationError("negative or non-finite distance at (" + std::to_string(i) + "," +
                              std::to_string(j) + ")");
      }
      if (i == j) continue;
      const double sd = d * params.distance_scale;
      const double v = std::exp(-(sd * sd) / params.sigma2);
      if (v >= params.alpha) out.w(i, j) = v;
    }
  }
  return out;
}

BinaryAdjacency binary_adjacency(std::size_t n,
                                 const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  BinaryAdjacency out{Tensor(n, n), 0};
  for (const auto& [i, j] : pairs) {
    if (i >= n || j >= n) {
      throw ValidationError("neighbor pair (" + std::to_string(i) + "," + std::to_string(j) +
                            ") out of range for N=" + std::to_string(n));
    }
    if (i == j) {
      spdlog::warn("ignoring self-pair on node {}", i);
      ++out.self_pairs_ignored;
      continue;
    }
    out.a(i, j) = 1.0;
    out.a(j, i) = 1.0;
  }
  return out;
}

Tensor propagation_matrix(const BinaryAdjacency& adjacency) {
  const Tensor& a = adjacency.a;
  const std::size_t n = a.rows();
  std::vector<double> deg(n, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) deg[i] += a(i, j);
  Tensor p(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double aij = i == j ? 1.0 : a(i, j);
      if (aij != 0.0) p(i, j) = aij / std::sqrt(deg[i] * deg[j]);
    }
  }
  return p;
}

DistanceMatrix read_distance_csv(std::istream& in) {
  const csv::Table table = csv::read(in);
  DistanceMatrix out;
  std::size_t first = 0;
  if (!table.header.empty() && (table.header[0].empty() || table.header[0] == "zone")) first = 1;
  out.node_ids.assign(table.header.begin() + static_cast<std::ptrdiff_t>(first), table.header.end());
  const std::size_t n = out.node_ids.size();
  if (n == 0) throw ValidationError("distance CSV: empty header");
  if (table.rows.size() != n) {
    throw ValidationError("distance CSV: expected " + std::to_string(n) + " rows, got " +
                          std::to_string(table.rows.size()));
  }
  out.d = Tensor(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    if (row.size() != n + first) {
      throw ValidationError("distance CSV line " + std::to_string(i + 2) + ": expected " +
                            std::to_string(n + first) + " fields");
    }
    if (first == 1 && csv::trim(row[0]) != out.node_ids[i]) {
      throw ValidationError("distance CSV line " + std::to_string(i + 2) +
                            ": row zone does not match header order");
    }
    for (std::size_t j = 0; j < n; ++j) out.d(i, j) = csv::parse_double(row[j + first]);
  }
  return out;
}

BinaryAdjacency read_neighbor_csv(std::istream& in, const std::vector<std::string>& node_ids,
                                  std::size_t* unknown) {
  const csv::Table table = csv::read(in);
  if (table.header.size() != 2) throw ValidationError("neighbor CSV: expected header zone_a,zone_b");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < node_ids.size(); ++i) index.emplace(node_ids[i], i);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t missing = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != 2) {
      throw ValidationError("neighbor CSV line " + std::to_string(r + 2) + ": expected 2 fields");
    }
    const auto a = index.find(csv::trim(row[0]));
    const auto b = index.find(csv::trim(row[1]));
    if (a == index.end() || b == index.end()) {
      ++missing;
      continue;
    }
    pairs.emplace_back(a->second, b->second);
  }
  if (unknown) *unknown = missing;
  return binary_adjacency(node_ids.size(), pairs);
}

Tensor select_square(const Tensor& m, const std::vector<std::size_t>& keep) {
  Tensor out(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i)
    for (std::size_t j = 0; j < keep.size(); ++j) out(i, j) = m(keep[i], keep[j]);
  return out;
}

}  // namespace fairdemand::graph
