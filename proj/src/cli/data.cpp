#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fairdemand/cli.hpp"
#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"
#include "fairdemand/fairness.hpp"

namespace fairdemand::cli {

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  return in;
}

std::size_t find_node(const std::vector<std::string>& ids, const std::string& id,
                      const std::string& what) {
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ValidationError(what + " has no zone '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

Tensor distances_for(const graph::DistanceMatrix& dm, const std::vector<std::string>& ids,
                     const std::string& path) {
  std::vector<std::size_t> keep;
  for (const auto& id : ids) keep.push_back(find_node(dm.node_ids, id, "distance file '" + path + "'"));
  return graph::select_square(dm.d, keep);
}

std::vector<std::pair<std::size_t, std::size_t>> pairs_of(const Tensor& a) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j)
      if (a(i, j) != 0.0) out.emplace_back(i, j);
  return out;
}

void load_files(const ExperimentSpec& spec, Dataset& d) {
  const auto& src = spec.data;
  std::vector<std::string> dropped;
  auto in_attr = open_in(src.attributes);
  const auto attrs = data::read_attribute_csv(in_attr, {}, &dropped);
  for (const auto& z : dropped) d.warnings.push_back("attribute row for zone '" + z + "' dropped");

  auto in_scan = open_in(src.trips);
  const auto trip_zones = data::scan_trip_zones(in_scan);
  const std::set<std::string> in_trips(trip_zones.begin(), trip_zones.end());
  const std::set<std::string> in_attrs(attrs.node_ids.begin(), attrs.node_ids.end());
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < attrs.nodes(); ++i) {
    if (in_trips.count(attrs.node_ids[i])) {
      keep.push_back(i);
    } else {
      d.warnings.push_back("zone '" + attrs.node_ids[i] + "' has attributes but no trips; dropped");
    }
  }
  for (const auto& z : trip_zones) {
    if (!in_attrs.count(z)) d.warnings.push_back("zone '" + z + "' has trips but no attributes; dropped");
  }
  if (keep.empty()) throw ValidationError("no zone has both trips and attributes");
  d.attributes = attrs.select_nodes(keep);

  auto in_trips_file = open_in(src.trips);
  d.demand = data::read_trip_csv(in_trips_file, d.attributes.node_ids,
                                 std::chrono::seconds(src.interval_seconds), std::nullopt,
                                 &d.aggregation);
  for (const auto& msg : d.aggregation.messages) d.warnings.push_back(src.trips + ": " + msg);

  if (!src.distances.empty()) {
    auto in = open_in(src.distances);
    d.distances = distances_for(graph::read_distance_csv(in), d.attributes.node_ids, src.distances);
  }
  if (!src.neighbours.empty()) {
    auto in = open_in(src.neighbours);
    std::size_t unknown = 0;
    const auto a = graph::read_neighbor_csv(in, d.attributes.node_ids, &unknown);
    if (unknown > 0) {
      d.warnings.push_back(std::to_string(unknown) + " neighbour pairs name unknown zones");
    }
    d.neighbours = pairs_of(a.a);
    d.has_neighbours = true;
  }
}

void load_bundle(const ExperimentSpec& spec, Dataset& d) {
  const fs::path dir(spec.data.bundle);
  std::unordered_map<std::string, data::Direction> directions;
  {
    auto in = open_in((dir / "summary.json").string());
    nlohmann::json s;
    try {
      in >> s;
      for (const auto& [name, dir_name] : s.at("directions").items()) {
        directions[name] = data::parse_direction(dir_name.get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("bundle summary.json: " + std::string(e.what()));
    }
  }
  {
    auto in = open_in((dir / "demand.csv").string());
    d.demand = data::read_demand_csv(in);
  }
  {
    auto in = open_in((dir / "attributes.csv").string());
    std::vector<std::string> dropped;
    d.attributes = data::read_attribute_csv(in, directions, &dropped);
    if (!dropped.empty()) throw ValidationError("bundle attributes.csv has incomplete rows");
  }
  if (d.attributes.node_ids != d.demand.node_ids()) {
    throw ValidationError("bundle demand and attribute zones differ");
  }
  if (fs::exists(dir / "distances.csv")) {
    auto in = open_in((dir / "distances.csv").string());
    d.distances = distances_for(graph::read_distance_csv(in), d.attributes.node_ids, "distances.csv");
  }
  if (fs::exists(dir / "neighbours.csv")) {
    auto in = open_in((dir / "neighbours.csv").string());
    d.neighbours = pairs_of(graph::read_neighbor_csv(in, d.attributes.node_ids).a);
    d.has_neighbours = true;
  }
}

}  // namespace

Dataset load_dataset(const ExperimentSpec& spec) {
  Dataset d;
  switch (spec.data.kind) {
    case DataSource::Kind::synthetic: {
      auto s = data::generate_synthetic(spec.data.synthetic);
      d.demand = std::move(s.demand);
      d.attributes = std::move(s.attributes);
      d.distances = std::move(s.distances);
      d.neighbours = std::move(s.neighbours);
      d.has_neighbours = true;
      d.aggregation.accepted = static_cast<std::size_t>(d.demand.total());
      break;
    }
    case DataSource::Kind::files: load_files(spec, d); break;
    case DataSource::Kind::bundle: load_bundle(spec, d); break;
  }
  d.attributes.validate();
  for (auto& [a, b] : d.neighbours) {
    if (a > b) std::swap(a, b);
  }
  std::sort(d.neighbours.begin(), d.neighbours.end());
  d.neighbours.erase(std::unique(d.neighbours.begin(), d.neighbours.end()), d.neighbours.end());
  return d;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string data_hash(const Dataset& d) {
  std::ostringstream s;
  data::write_demand_csv(s, d.demand);
  s << "attributes";
  for (std::size_t j = 0; j < d.attributes.attributes(); ++j) {
    s << ',' << d.attributes.names[j] << ':' << data::to_string(d.attributes.directions[j]);
  }
  s << '\n';
  for (const double v : d.attributes.z.values()) s << csv::format_exact(v) << '\n';
  if (d.distances) {
    s << "distances\n";
    for (const double v : d.distances->values()) s << csv::format_exact(v) << '\n';
  }
  if (d.has_neighbours) {
    s << "neighbours\n";
    for (const auto& [a, b] : d.neighbours) s << a << ',' << b << '\n';
  }
  return fnv1a_hex(s.str());
}

Prepared prepare(const ExperimentSpec& spec) {
  Prepared p;
  p.dataset = load_dataset(spec);
  auto attrs = p.dataset.attributes;
  if (!spec.attributes.empty()) {
    std::vector<std::size_t> cols;
    for (const auto& name : spec.attributes) cols.push_back(attrs.index_of(name));
    attrs = attrs.select_attributes(cols);
  }
  if (spec.loss.mode != fairness::Regularizer::multi && spec.loss.attribute >= attrs.attributes()) {
    throw ValidationError("fairness attribute index " + std::to_string(spec.loss.attribute) +
                          " out of range");
  }
  p.data = training::prepare_experiment(p.dataset.demand, attrs, spec.k, spec.m, spec.split,
                                        spec.normalizer);
  const bool needs_graph = std::any_of(spec.models.begin(), spec.models.end(), [](const auto& e) {
    return e.config.kind == models::ModelKind::tgcn;
  });
  if (needs_graph) {
    const std::size_t n = p.dataset.demand.nodes();
    if (p.dataset.has_neighbours) {
      p.propagation = graph::propagation_matrix(graph::binary_adjacency(n, p.dataset.neighbours));
    } else if (p.dataset.distances) {
      const auto w = graph::gaussian_adjacency(*p.dataset.distances, spec.graph);
      p.propagation = graph::propagation_matrix(graph::binary_adjacency(n, pairs_of(w.w)));
    } else {
      throw ValidationError("T-GCN needs neighbour pairs or a distance matrix");
    }
  }
  return p;
}

}  // namespace fairdemand::cli
