#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fairdemand/dataset.hpp"
#include "fairdemand/graph.hpp"
#include "fairdemand/synthetic.hpp"
#include "fairdemand/training.hpp"
#include "json.hpp"

namespace fairdemand::cli {

namespace fs = std::filesystem;
using diff::Tensor;

// ---------------------------------------------------------------------------
// Report tables.

enum class Format { csv, md, json };
std::string_view to_string(Format f);
Format parse_format(std::string_view s);
std::string_view extension(Format f);

struct Column {
  std::string name;   // CSV/JSON key
  std::string label;  // markdown heading
  int digits = -1;    // markdown decimals; -1 for text columns
};

// NA, number or text.
using Cell = std::variant<std::monostate, double, std::string>;

struct Report {
  std::string kind;  // detection, correction, sweep, comparison
  std::vector<Column> columns;
  std::vector<std::vector<Cell>> rows;
  std::string provenance;  // spec hash
};

void write_csv(std::ostream& out, const Report& r);
void write_markdown(std::ostream& out, const Report& r);
void write_json(std::ostream& out, const Report& r);
void write_report(std::ostream& out, const Report& r, Format f);

// Parses write_csv output back into rows for the given column layout.
// "NA" becomes an empty cell; text columns stay text.
Report read_csv(std::istream& in, std::string kind, std::vector<Column> columns);

// (|o| - |m|) * 100 / |o|; empty when o is zero or either side is missing.
std::optional<double> percent_change(std::optional<double> original,
                                     std::optional<double> modified);

// ---------------------------------------------------------------------------
// Experiment spec.

struct DataSource {
  enum class Kind { synthetic, files, bundle };
  Kind kind = Kind::synthetic;
  data::SyntheticSpec synthetic;
  std::string trips;
  std::string attributes;
  std::string distances;   // optional
  std::string neighbours;  // optional
  std::string bundle;
  std::int64_t interval_seconds = 3600;
};

struct ModelEntry {
  models::ModelConfig config;
  nlohmann::json train = nlohmann::json::object();  // overrides of the shared train config
};

struct ExperimentSpec {
  DataSource data;
  std::size_t k = 12;
  std::size_t m = 1;
  data::SplitSpec split;
  data::NormalizerMode normalizer = data::NormalizerMode::per_node;
  std::vector<ModelEntry> models;
  training::TrainConfig train;
  training::LossConfig loss;  // mode and attribute; lambda comes from the grid
  training::GridSpec grid;
  graph::GaussianParams graph;
  fairness::Pooling pooling = fairness::Pooling::per_step;
  std::vector<std::string> attributes;  // subset by name, empty for all
  std::uint64_t seed = 0;

  ExperimentSpec();
  void validate() const;
  // Train config for one model: shared settings, its overrides, the seed.
  training::TrainConfig train_for(const ModelEntry& e) const;
  models::ModelConfig model_for(const ModelEntry& e) const;
};

nlohmann::json to_json(const ExperimentSpec& s);
// Relative file paths are resolved against `base`.
ExperimentSpec spec_from_json(const nlohmann::json& j, const fs::path& base = {});

// Accepts `multi`, `single:ATTR`, `em`, `rfg`, `ifg` (the last three may also
// carry `:ATTR`). ATTR is a name or a 0-based index.
void apply_mode(ExperimentSpec& spec, std::string_view mode,
                const std::vector<std::string>& attribute_names);
std::vector<double> parse_lambda_list(std::string_view s);

// ---------------------------------------------------------------------------
// Data.

struct Dataset {
  data::DemandTensor demand;
  data::ProtectedAttributeTable attributes;
  std::optional<Tensor> distances;
  std::vector<std::pair<std::size_t, std::size_t>> neighbours;
  bool has_neighbours = false;
  data::AggregationReport aggregation;
  std::vector<std::string> warnings;
};

Dataset load_dataset(const ExperimentSpec& spec);
// FNV-1a 64 over the canonical serialization of the loaded data.
std::string data_hash(const Dataset& d);
std::string fnv1a_hex(std::string_view bytes);

// The attribute subset applied, ready for training.
struct Prepared {
  Dataset dataset;
  training::ExperimentData data;
  std::optional<Tensor> propagation;  // for T-GCN
};
Prepared prepare(const ExperimentSpec& spec);

// ---------------------------------------------------------------------------
// Commands. Each returns its report; run() also writes files.

void cmd_ingest(const ExperimentSpec& spec, const fs::path& out, Format fmt);
Report cmd_detect(const ExperimentSpec& spec, const Prepared& p);
Report cmd_correct(const ExperimentSpec& spec, const Prepared& p);
Report cmd_sweep(const ExperimentSpec& spec, const Prepared& p);
Report cmd_compare(const ExperimentSpec& spec, const Prepared& p);

// Full command line without the program name. Returns the exit code:
// 0 success, 1 validation error, 2 runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fairdemand::cli
