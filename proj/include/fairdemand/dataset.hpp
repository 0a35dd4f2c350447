#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fairdemand/tensor.hpp"

namespace fairdemand::data {

using diff::Tensor;
using TimePoint = std::chrono::sys_seconds;

// Accepts YYYY-MM-DD[T| ]HH:MM[:SS[.frac]][Z|+HH:MM|-HH:MM|+HHMM]; no suffix
// means UTC. Throws ValidationError on anything else.
TimePoint parse_iso8601(std::string_view text);
std::string format_iso8601(TimePoint t);

struct TripRecord {
  TimePoint pickup;
  std::string zone;
};

// Node x interval trip counts. Column t covers [t0 + t*interval, t0 + (t+1)*interval).
class DemandTensor {
 public:
  DemandTensor() = default;
  DemandTensor(std::vector<std::string> node_ids, TimePoint t0, std::chrono::seconds interval,
               std::size_t steps);
  DemandTensor(std::vector<std::string> node_ids, TimePoint t0, std::chrono::seconds interval,
               std::size_t steps, std::vector<std::int64_t> counts);

  const std::vector<std::string>& node_ids() const { return node_ids_; }
  TimePoint t0() const { return t0_; }
  std::chrono::seconds interval() const { return interval_; }
  std::size_t nodes() const { return node_ids_.size(); }
  std::size_t steps() const { return steps_; }

  std::int64_t at(std::size_t node, std::size_t step) const { return counts_[node * steps_ + step]; }
  std::int64_t& at(std::size_t node, std::size_t step) { return counts_[node * steps_ + step]; }
  std::int64_t total() const;
  TimePoint time_of(std::size_t step) const { return t0_ + interval_ * static_cast<long>(step); }

  // Columns [begin, end) as a new tensor starting at time_of(begin).
  DemandTensor slice(std::size_t begin, std::size_t end) const;
  // Keeps the listed rows, in the listed order.
  DemandTensor select_nodes(std::span<const std::size_t> rows) const;
  // N x T matrix of doubles.
  Tensor as_matrix() const;

 private:
  std::vector<std::string> node_ids_;
  TimePoint t0_{};
  std::chrono::seconds interval_{3600};
  std::size_t steps_ = 0;
  std::vector<std::int64_t> counts_;
};

struct AggregationReport {
  std::size_t accepted = 0;
  std::size_t rejected = 0;      // unparseable lines
  std::size_t unknown_zone = 0;  // zone not in the node set
  std::size_t out_of_range = 0;  // outside an explicit time range
  std::vector<std::string> messages;
};

struct TimeRange {
  TimePoint start;
  std::size_t steps;
};

// Single-pass trip counter. Feed records (or raw CSV lines), then finish().
// Without an explicit range the tensor spans the first to the last
// populated interval, aligned to multiples of `interval` since the epoch.
class TripAggregator {
 public:
  TripAggregator(std::vector<std::string> zones, std::chrono::seconds interval = std::chrono::hours(1),
                 std::optional<TimeRange> range = std::nullopt);

  void add(const TripRecord& record);
  void add(TimePoint pickup, std::string_view zone);
  // `line` is one data row of `pickup_datetime,pickup_zone`.
  void add_csv_line(std::string_view line, std::size_t line_number);

  // Throws ValidationError when no trip was accepted.
  DemandTensor finish(AggregationReport* report = nullptr) const;
  const AggregationReport& report() const { return report_; }

 private:
  std::vector<std::string> zones_;
  std::unordered_map<std::string, std::size_t> zone_index_;
  std::chrono::seconds interval_;
  std::optional<TimeRange> range_;
  // interval index since epoch -> per-zone counts
  std::unordered_map<std::int64_t, std::vector<std::int64_t>> buckets_;
  AggregationReport report_;
};

DemandTensor aggregate_trips(std::span<const TripRecord> records, std::vector<std::string> zones,
                             std::chrono::seconds interval = std::chrono::hours(1),
                             std::optional<TimeRange> range = std::nullopt,
                             AggregationReport* report = nullptr);

// Reads a trip CSV with header `pickup_datetime,pickup_zone`. Bad rows are
// counted in the report with their line number.
DemandTensor read_trip_csv(std::istream& in, std::vector<std::string> zones,
                           std::chrono::seconds interval = std::chrono::hours(1),
                           std::optional<TimeRange> range = std::nullopt,
                           AggregationReport* report = nullptr);

// Distinct zone ids appearing in a trip CSV, in first-seen order.
std::vector<std::string> scan_trip_zones(std::istream& in);

struct SplitSpec {
  double train = 0.70;
  double val = 0.10;
  double test = 0.20;

  void validate() const;
};

struct Splits {
  DemandTensor train;
  DemandTensor val;
  DemandTensor test;
};

// Contiguous chronological split: floor(train*T), floor(val*T), remainder.
Splits chronological_split(const DemandTensor& tensor, const SplitSpec& spec = {});

struct Window {
  Tensor x;  // N x K, columns t-K .. t-1
  Tensor y;  // N x M, columns t .. t+M-1
  std::size_t t;  // index of the first target column in the source tensor
};

struct WindowedSamples {
  std::size_t k = 0;
  std::size_t m = 0;
  std::vector<Window> samples;
};

// One sample per t in [K, T-M]; count T - K - M + 1.
WindowedSamples make_windows(const Tensor& series, std::size_t k, std::size_t m);

enum class Direction { high, low };  // which end of the attribute is advantaged
std::string_view to_string(Direction d);
Direction parse_direction(std::string_view s);

struct ProtectedAttributeTable {
  std::vector<std::string> node_ids;
  std::vector<std::string> names;
  std::vector<Direction> directions;
  Tensor z;  // N x Q, values in [0,1]

  std::size_t nodes() const { return node_ids.size(); }
  std::size_t attributes() const { return names.size(); }
  Tensor column(std::size_t j) const;  // N x 1
  std::size_t index_of(std::string_view name) const;
  ProtectedAttributeTable select_nodes(std::span<const std::size_t> rows) const;
  ProtectedAttributeTable select_attributes(std::span<const std::size_t> cols) const;
  void validate() const;
};

inline const std::vector<std::string> kDefaultAttributes = {
    "race_white_pct", "edu_bachelor_pct", "age_young_pct", "income_low_pct"};
Direction default_direction(std::string_view attribute);

// Attribute CSV: `zone,<attr>...`. Rows with an empty or unparseable value
// are dropped (reported in `dropped`); values outside [0,1] are an error.
ProtectedAttributeTable read_attribute_csv(
    std::istream& in, const std::unordered_map<std::string, Direction>& directions = {},
    std::vector<std::string>* dropped = nullptr);

enum class Group : std::uint8_t { advantaged, disadvantaged, middle };

struct AttributeLabels {
  std::vector<Group> labels;
  double p40 = 0.0;
  double p60 = 0.0;
  bool degenerate = false;

  std::size_t count(Group g) const;
};

struct GroupLabeling {
  std::vector<AttributeLabels> attributes;
};

// Nearest-rank percentile: sorted[round(q * (n - 1))].
double nearest_rank_percentile(std::vector<double> values, double q);

// 60/40 percentile labelling with strict inequalities; the middle band is
// neither group. A constant attribute is flagged degenerate.
GroupLabeling label_groups(const ProtectedAttributeTable& table);

enum class NormalizerMode { per_node, global };
std::string_view to_string(NormalizerMode m);
NormalizerMode parse_normalizer_mode(std::string_view s);

// z-score statistics fitted on the training split only.
class Normalizer {
 public:
  static constexpr double kStdFloor = 1e-8;

  static Normalizer fit(const Tensor& train, NormalizerMode mode = NormalizerMode::per_node);
  Normalizer() = default;
  Normalizer(std::vector<double> mean, std::vector<double> std, NormalizerMode mode);

  // x is N x C; row i uses node i's statistics.
  Tensor apply(const Tensor& x) const;
  Tensor invert(const Tensor& x) const;

  NormalizerMode mode() const { return mode_; }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& std() const { return std_; }

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
  NormalizerMode mode_ = NormalizerMode::per_node;
};

// Column-major CSV with a `# key=value` metadata header, one line per
// interval: `interval_start,<node ids...>`.
void write_demand_csv(std::ostream& out, const DemandTensor& tensor);
DemandTensor read_demand_csv(std::istream& in);

}  // namespace fairdemand::data
