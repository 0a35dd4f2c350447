#include "fairdemand/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"

namespace fairdemand::data {

namespace {

int digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) throw ValidationError("truncated timestamp '" + std::string(s) + "'");
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') {
      throw ValidationError("bad timestamp '" + std::string(s) + "'");
    }
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

void expect(std::string_view s, std::size_t pos, char ch) {
  if (pos >= s.size() || s[pos] != ch) {
    throw ValidationError("bad timestamp '" + std::string(s) + "'");
  }
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

TimePoint parse_iso8601(std::string_view text) {
  const std::string owned = csv::trim(text);
  const std::string_view s = owned;
  using namespace std::chrono;
  const int y = digits(s, 0, 4);
  expect(s, 4, '-');
  const int mo = digits(s, 5, 2);
  expect(s, 7, '-');
  const int d = digits(s, 8, 2);
  if (s.size() < 11 || (s[10] != 'T' && s[10] != ' ')) {
    throw ValidationError("bad timestamp '" + owned + "'");
  }
  const int hh = digits(s, 11, 2);
  expect(s, 13, ':');
  const int mi = digits(s, 14, 2);
  std::size_t pos = 16;
  int ss = 0;
  if (pos < s.size() && s[pos] == ':') {
    ss = digits(s, pos + 1, 2);
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    }
  }
  int offset_minutes = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z' && pos + 1 == s.size()) {
      pos += 1;
    } else if (s[pos] == '+' || s[pos] == '-') {
      const int sign = s[pos] == '+' ? 1 : -1;
      const int oh = digits(s, pos + 1, 2);
      std::size_t p = pos + 3;
      if (p < s.size() && s[p] == ':') ++p;
      const int om = digits(s, p, 2);
      offset_minutes = sign * (oh * 60 + om);
      pos = p + 2;
    }
    if (pos != s.size()) throw ValidationError("bad timestamp '" + owned + "'");
  }
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mi > 59 || ss > 60) {
    throw ValidationError("bad timestamp '" + owned + "'");
  }
  return sys_days{ymd} + hours{hh} + minutes{mi} + seconds{ss} - minutes{offset_minutes};
}

std::string format_iso8601(TimePoint t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

// ---------------------------------------------------------------------------

DemandTensor::DemandTensor(std::vector<std::string> node_ids, TimePoint t0,
                           std::chrono::seconds interval, std::size_t steps)
    : node_ids_(std::move(node_ids)),
      t0_(t0),
      interval_(interval),
      steps_(steps),
      counts_(node_ids_.size() * steps, 0) {}

DemandTensor::DemandTensor(std::vector<std::string> node_ids, TimePoint t0,
                           std::chrono::seconds interval, std::size_t steps,
                           std::vector<std::int64_t> counts)
    : node_ids_(std::move(node_ids)),
      t0_(t0),
      interval_(interval),
      steps_(steps),
      counts_(std::move(counts)) {
  if (counts_.size() != node_ids_.size() * steps_) {
    throw ValidationError("demand tensor: count vector does not match nodes x steps");
  }
  if (std::any_of(counts_.begin(), counts_.end(), [](std::int64_t v) { return v < 0; })) {
    throw ValidationError("demand tensor: negative count");
  }
}

std::int64_t DemandTensor::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

DemandTensor DemandTensor::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > steps_) throw ValidationError("demand tensor: bad slice");
  DemandTensor out(node_ids_, time_of(begin), interval_, end - begin);
  for (std::size_t i = 0; i < nodes(); ++i)
    for (std::size_t t = begin; t < end; ++t) out.at(i, t - begin) = at(i, t);
  return out;
}

DemandTensor DemandTensor::select_nodes(std::span<const std::size_t> rows) const {
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (const auto r : rows) ids.push_back(node_ids_.at(r));
  DemandTensor out(std::move(ids), t0_, interval_, steps_);
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t t = 0; t < steps_; ++t) out.at(k, t) = at(rows[k], t);
  return out;
}

Tensor DemandTensor::as_matrix() const {
  Tensor m(nodes(), steps_);
  for (std::size_t i = 0; i < counts_.size(); ++i) m[i] = static_cast<double>(counts_[i]);
  return m;
}

// ---------------------------------------------------------------------------

TripAggregator::TripAggregator(std::vector<std::string> zones, std::chrono::seconds interval,
                               std::optional<TimeRange> range)
    : zones_(std::move(zones)), interval_(interval), range_(range) {
  if (zones_.empty()) throw ValidationError("trip aggregation needs at least one zone");
  if (interval_.count() <= 0) throw ValidationError("aggregation interval must be positive");
  for (std::size_t i = 0; i < zones_.size(); ++i) {
    if (!zone_index_.emplace(zones_[i], i).second) {
      throw ValidationError("duplicate zone id '" + zones_[i] + "'");
    }
  }
}

void TripAggregator::add(const TripRecord& record) { add(record.pickup, record.zone); }

void TripAggregator::add(TimePoint pickup, std::string_view zone) {
  const auto it = zone_index_.find(std::string(zone));
  if (it == zone_index_.end()) {
    ++report_.unknown_zone;
    return;
  }
  const std::int64_t secs = pickup.time_since_epoch().count();
  std::int64_t bucket = floor_div(secs, interval_.count());
  if (range_) {
    const std::int64_t offset = secs - range_->start.time_since_epoch().count();
    if (offset < 0 || offset >= static_cast<std::int64_t>(range_->steps) * interval_.count()) {
      ++report_.out_of_range;
      return;
    }
    bucket = floor_div(offset, interval_.count());
  }
  auto& row = buckets_[bucket];
  if (row.empty()) row.assign(zones_.size(), 0);
  ++row[it->second];
  ++report_.accepted;
}

void TripAggregator::add_csv_line(std::string_view line, std::size_t line_number) {
  const auto fields = csv::split(line);
  try {
    if (fields.size() != 2) throw ValidationError("expected 2 fields");
    const std::string zone = csv::trim(fields[1]);
    if (zone.empty()) throw ValidationError("empty zone id");
    add(parse_iso8601(fields[0]), zone);
  } catch (const ValidationError& e) {
    ++report_.rejected;
    if (report_.messages.size() < 100) {
      report_.messages.push_back("line " + std::to_string(line_number) + ": " + e.what());
    }
  }
}

DemandTensor TripAggregator::finish(AggregationReport* report) const {
  if (report) *report = report_;
  if (report_.accepted == 0) throw ValidationError("no trips were accepted");
  TimePoint t0;
  std::size_t steps = 0;
  std::int64_t first = 0;
  if (range_) {
    t0 = range_->start;
    steps = range_->steps;
  } else {
    first = std::numeric_limits<std::int64_t>::max();
    std::int64_t last = std::numeric_limits<std::int64_t>::min();
    for (const auto& [bucket, row] : buckets_) {
      first = std::min(first, bucket);
      last = std::max(last, bucket);
    }
    t0 = TimePoint{std::chrono::seconds{first * interval_.count()}};
    steps = static_cast<std::size_t>(last - first + 1);
  }
  DemandTensor out(zones_, t0, interval_, steps);
  for (const auto& [bucket, row] : buckets_) {
    const auto t = static_cast<std::size_t>(bucket - first);
    for (std::size_t i = 0; i < row.size(); ++i) out.at(i, t) += row[i];
  }
  return out;
}

DemandTensor aggregate_trips(std::span<const TripRecord> records, std::vector<std::string> zones,
                             std::chrono::seconds interval, std::optional<TimeRange> range,
                             AggregationReport* report) {
  TripAggregator agg(std::move(zones), interval, range);
  for (const auto& r : records) agg.add(r);
  return agg.finish(report);
}

namespace {
void check_trip_header(const std::string& line) {
  const auto h = csv::split(line);
  if (h.size() != 2 || csv::trim(h[0]) != "pickup_datetime" || csv::trim(h[1]) != "pickup_zone") {
    throw ValidationError("trip CSV line 1: expected header 'pickup_datetime,pickup_zone'");
  }
}
}  // namespace

DemandTensor read_trip_csv(std::istream& in, std::vector<std::string> zones,
                           std::chrono::seconds interval, std::optional<TimeRange> range,
                           AggregationReport* report) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trip CSV is empty");
  check_trip_header(line);
  TripAggregator agg(std::move(zones), interval, range);
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    agg.add_csv_line(line, line_number);
  }
  return agg.finish(report);
}

std::vector<std::string> scan_trip_zones(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trip CSV is empty");
  check_trip_header(line);
  std::vector<std::string> zones;
  std::unordered_map<std::string, bool> seen;
  while (std::getline(in, line)) {
    const auto fields = csv::split(line);
    if (fields.size() != 2) continue;
    std::string z = csv::trim(fields[1]);
    if (z.empty()) continue;
    if (seen.emplace(z, true).second) zones.push_back(std::move(z));
  }
  return zones;
}

// ---------------------------------------------------------------------------

void SplitSpec::validate() const {
  for (const double f : {train, val, test}) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("split fractions must lie in (0,1)");
  }
  if (std::fabs(train + val + test - 1.0) > 1e-9) {
    throw ValidationError("split fractions must sum to 1");
  }
}

Splits chronological_split(const DemandTensor& tensor, const SplitSpec& spec) {
  spec.validate();
  const std::size_t t = tensor.steps();
  if (t < 10) throw ValidationError("need at least 10 intervals to split, got " + std::to_string(t));
  // The epsilon keeps e.g. 0.7 * 100 from flooring to 69.
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(t) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(t) + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= t) {
    throw ValidationError("split leaves an empty partition for T=" + std::to_string(t));
  }
  return {tensor.slice(0, n_train), tensor.slice(n_train, n_train + n_val),
          tensor.slice(n_train + n_val, t)};
}

WindowedSamples make_windows(const Tensor& series, std::size_t k, std::size_t m) {
  if (k < 1 || m < 1) throw ValidationError("window lengths K and M must be >= 1");
  const std::size_t n = series.rows();
  const std::size_t t_total = series.cols();
  if (t_total < k + m) {
    throw ValidationError("series of length " + std::to_string(t_total) + " is shorter than K+M=" +
                          std::to_string(k + m));
  }
  WindowedSamples out{k, m, {}};
  out.samples.reserve(t_total - k - m + 1);
  for (std::size_t t = k; t + m <= t_total; ++t) {
    Window w{Tensor(n, k), Tensor(n, m), t};
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) w.x(i, c) = series(i, t - k + c);
      for (std::size_t c = 0; c < m; ++c) w.y(i, c) = series(i, t + c);
    }
    out.samples.push_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Direction d) { return d == Direction::high ? "high" : "low"; }

Direction parse_direction(std::string_view s) {
  if (s == "high") return Direction::high;
  if (s == "low") return Direction::low;
  throw ValidationError("advantaged direction must be 'high' or 'low', got '" + std::string(s) + "'");
}

Direction default_direction(std::string_view attribute) {
  return attribute.starts_with("income") ? Direction::low : Direction::high;
}

Tensor ProtectedAttributeTable::column(std::size_t j) const {
  Tensor c(nodes(), 1);
  for (std::size_t i = 0; i < nodes(); ++i) c[i] = z(i, j);
  return c;
}

std::size_t ProtectedAttributeTable::index_of(std::string_view name) const {
  for (std::size_t j = 0; j < names.size(); ++j)
    if (names[j] == name) return j;
  throw ValidationError("unknown protected attribute '" + std::string(name) + "'");
}

ProtectedAttributeTable ProtectedAttributeTable::select_nodes(
    std::span<const std::size_t> rows) const {
  ProtectedAttributeTable out{{}, names, directions, Tensor(rows.size(), attributes())};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.node_ids.push_back(node_ids.at(rows[k]));
    for (std::size_t j = 0; j < attributes(); ++j) out.z(k, j) = z(rows[k], j);
  }
  return out;
}

ProtectedAttributeTable ProtectedAttributeTable::select_attributes(
    std::span<const std::size_t> cols) const {
  ProtectedAttributeTable out{node_ids, {}, {}, Tensor(nodes(), cols.size())};
  for (std::size_t k = 0; k < cols.size(); ++k) {
    out.names.push_back(names.at(cols[k]));
    out.directions.push_back(directions.at(cols[k]));
    for (std::size_t i = 0; i < nodes(); ++i) out.z(i, k) = z(i, cols[k]);
  }
  return out;
}

void ProtectedAttributeTable::validate() const {
  if (z.rows() != node_ids.size() || z.cols() != names.size() || directions.size() != names.size()) {
    throw ValidationError("attribute table dimensions are inconsistent");
  }
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!(z[i] >= 0.0 && z[i] <= 1.0)) {
      throw ValidationError("attribute value outside [0,1] for zone '" +
                            node_ids[i / names.size()] + "'");
    }
  }
}

ProtectedAttributeTable read_attribute_csv(
    std::istream& in, const std::unordered_map<std::string, Direction>& directions,
    std::vector<std::string>* dropped) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("attribute CSV is empty");
  const auto header = csv::split(line);
  if (header.size() < 2 || csv::trim(header[0]) != "zone") {
    throw ValidationError("attribute CSV line 1: first column must be 'zone'");
  }
  ProtectedAttributeTable table;
  for (std::size_t j = 1; j < header.size(); ++j) {
    const std::string name = csv::trim(header[j]);
    table.names.push_back(name);
    const auto it = directions.find(name);
    table.directions.push_back(it != directions.end() ? it->second : default_direction(name));
  }
  const std::size_t q = table.names.size();
  std::vector<double> values;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv::split(line);
    if (fields.size() != q + 1) {
      throw ValidationError("attribute CSV line " + std::to_string(line_number) + ": expected " +
                            std::to_string(q + 1) + " fields");
    }
    const std::string zone = csv::trim(fields[0]);
    std::vector<double> row;
    bool complete = true;
    for (std::size_t j = 1; j <= q; ++j) {
      const std::string cell = csv::trim(fields[j]);
      if (cell.empty() || cell == "NA" || cell == "nan") {
        complete = false;
        break;
      }
      const double v = csv::parse_double(cell);
      if (!(v >= 0.0 && v <= 1.0)) {
        throw ValidationError("attribute CSV line " + std::to_string(line_number) + ": value " +
                              cell + " outside [0,1]");
      }
      row.push_back(v);
    }
    if (!complete) {
      if (dropped) dropped->push_back(zone);
      continue;
    }
    table.node_ids.push_back(zone);
    values.insert(values.end(), row.begin(), row.end());
  }
  table.z = Tensor(table.node_ids.size(), q, std::move(values));
  return table;
}

std::size_t AttributeLabels::count(Group g) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), g));
}

double nearest_rank_percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const auto idx = static_cast<std::size_t>(std::llround(q * static_cast<double>(values.size() - 1)));
  return values[std::min(idx, values.size() - 1)];
}

GroupLabeling label_groups(const ProtectedAttributeTable& table) {
  const std::size_t n = table.nodes();
  if (n < 5) throw ValidationError("group labelling needs at least 5 nodes");
  GroupLabeling out;
  for (std::size_t j = 0; j < table.attributes(); ++j) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = table.z(i, j);
    AttributeLabels al;
    al.p40 = nearest_rank_percentile(v, 0.4);
    al.p60 = nearest_rank_percentile(v, 0.6);
    al.labels.assign(n, Group::middle);
    const bool high = table.directions[j] == Direction::high;
    for (std::size_t i = 0; i < n; ++i) {
      if (v[i] > al.p60) {
        al.labels[i] = high ? Group::advantaged : Group::disadvantaged;
      } else if (v[i] < al.p40) {
        al.labels[i] = high ? Group::disadvantaged : Group::advantaged;
      }
    }
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    al.degenerate = *lo == *hi || al.count(Group::advantaged) == 0 ||
                    al.count(Group::disadvantaged) == 0;
    out.attributes.push_back(std::move(al));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(NormalizerMode m) {
  return m == NormalizerMode::per_node ? "per_node" : "global";
}

NormalizerMode parse_normalizer_mode(std::string_view s) {
  if (s == "per_node") return NormalizerMode::per_node;
  if (s == "global") return NormalizerMode::global;
  throw ValidationError("normalization must be 'per_node' or 'global', got '" + std::string(s) + "'");
}

Normalizer::Normalizer(std::vector<double> mean, std::vector<double> std, NormalizerMode mode)
    : mean_(std::move(mean)), std_(std::move(std)), mode_(mode) {
  if (mean_.size() != std_.size()) throw ValidationError("normalizer: mismatched statistics");
}

Normalizer Normalizer::fit(const Tensor& train, NormalizerMode mode) {
  const std::size_t n = train.rows();
  const std::size_t t = train.cols();
  if (n == 0 || t == 0) throw ValidationError("normalizer: empty training split");
  std::vector<double> mean(n), sd(n);
  if (mode == NormalizerMode::per_node) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < t; ++c) s += train(i, c);
      const double mu = s / static_cast<double>(t);
      double ss = 0.0;
      for (std::size_t c = 0; c < t; ++c) ss += (train(i, c) - mu) * (train(i, c) - mu);
      mean[i] = mu;
      sd[i] = std::max(std::sqrt(ss / static_cast<double>(t)), kStdFloor);
    }
  } else {
    double s = 0.0;
    for (const double v : train.values()) s += v;
    const double mu = s / static_cast<double>(train.size());
    double ss = 0.0;
    for (const double v : train.values()) ss += (v - mu) * (v - mu);
    const double sigma = std::max(std::sqrt(ss / static_cast<double>(train.size())), kStdFloor);
    std::fill(mean.begin(), mean.end(), mu);
    std::fill(sd.begin(), sd.end(), sigma);
  }
  return Normalizer(std::move(mean), std::move(sd), mode);
}

Tensor Normalizer::apply(const Tensor& x) const {
  if (x.rows() != mean_.size()) throw ValidationError("normalizer: node count mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) = (x(i, c) - mean_[i]) / std_[i];
  return out;
}

Tensor Normalizer::invert(const Tensor& x) const {
  if (x.rows() != mean_.size()) throw ValidationError("normalizer: node count mismatch");
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) = x(i, c) * std_[i] + mean_[i];
  return out;
}

// ---------------------------------------------------------------------------

void write_demand_csv(std::ostream& out, const DemandTensor& tensor) {
  out << "# format=fairdemand-demand-v1\n";
  out << "# nodes=" << tensor.nodes() << "\n";
  out << "# steps=" << tensor.steps() << "\n";
  out << "# t0=" << format_iso8601(tensor.t0()) << "\n";
  out << "# interval_seconds=" << tensor.interval().count() << "\n";
  out << "interval_start";
  for (const auto& id : tensor.node_ids()) out << ',' << csv::escape(id);
  out << '\n';
  for (std::size_t t = 0; t < tensor.steps(); ++t) {
    out << format_iso8601(tensor.time_of(t));
    for (std::size_t i = 0; i < tensor.nodes(); ++i) out << ',' << tensor.at(i, t);
    out << '\n';
  }
}

DemandTensor read_demand_csv(std::istream& in) {
  std::string line;
  std::int64_t interval = 3600;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.rfind("# interval_seconds=", 0) == 0) {
      interval = csv::parse_int(line.substr(19));
    } else if (!line.empty() && line[0] != '#') {
      header = csv::split(line);
      break;
    }
  }
  if (header.empty() || header[0] != "interval_start") {
    throw ValidationError("demand CSV: missing 'interval_start' header");
  }
  std::vector<std::string> ids(header.begin() + 1, header.end());
  std::vector<std::vector<std::int64_t>> cols;
  TimePoint t0{};
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    if (f.size() != ids.size() + 1) throw ValidationError("demand CSV: ragged row");
    if (cols.empty()) t0 = parse_iso8601(f[0]);
    std::vector<std::int64_t> col;
    for (std::size_t i = 1; i < f.size(); ++i) col.push_back(csv::parse_int(f[i]));
    cols.push_back(std::move(col));
  }
  DemandTensor out(ids, t0, std::chrono::seconds{interval}, cols.size());
  for (std::size_t t = 0; t < cols.size(); ++t)
    for (std::size_t i = 0; i < ids.size(); ++i) out.at(i, t) = cols[t][i];
  return out;
}

}  // namespace fairdemand::data
