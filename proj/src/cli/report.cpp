#include <cmath>
#include <istream>
#include <ostream>

#include "fairdemand/cli.hpp"
#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"

namespace fairdemand::cli {

std::string_view to_string(Format f) {
  switch (f) {
    case Format::csv: return "csv";
    case Format::md: return "md";
    case Format::json: return "json";
  }
  return "csv";
}

Format parse_format(std::string_view s) {
  if (s == "csv") return Format::csv;
  if (s == "md" || s == "markdown") return Format::md;
  if (s == "json") return Format::json;
  throw ValidationError("unknown format '" + std::string(s) + "' (csv, md, json)");
}

std::string_view extension(Format f) { return to_string(f); }

namespace {

std::string csv_cell(const Cell& c) {
  if (std::holds_alternative<double>(c)) return csv::format_exact(std::get<double>(c));
  if (std::holds_alternative<std::string>(c)) return csv::escape(std::get<std::string>(c));
  return "NA";
}

std::string md_cell(const Cell& c, int digits) {
  if (std::holds_alternative<double>(c)) {
    const double v = std::get<double>(c);
    return digits < 0 ? csv::format_exact(v) : csv::format_fixed(v, digits);
  }
  if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
  return "NA";
}

void check_row(const Report& r, const std::vector<Cell>& row) {
  if (row.size() != r.columns.size()) {
    throw ValidationError(r.kind + " report: row has " + std::to_string(row.size()) +
                          " cells for " + std::to_string(r.columns.size()) + " columns");
  }
}

}  // namespace

void write_csv(std::ostream& out, const Report& r) {
  for (std::size_t j = 0; j < r.columns.size(); ++j) {
    out << (j ? "," : "") << csv::escape(r.columns[j].name);
  }
  out << '\n';
  for (const auto& row : r.rows) {
    check_row(r, row);
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << csv_cell(row[j]);
    out << '\n';
  }
}

void write_markdown(std::ostream& out, const Report& r) {
  out << '|';
  for (const auto& c : r.columns) out << ' ' << (c.label.empty() ? c.name : c.label) << " |";
  out << "\n|";
  for (std::size_t j = 0; j < r.columns.size(); ++j) out << "---|";
  out << '\n';
  for (const auto& row : r.rows) {
    check_row(r, row);
    out << '|';
    for (std::size_t j = 0; j < row.size(); ++j) out << ' ' << md_cell(row[j], r.columns[j].digits) << " |";
    out << '\n';
  }
}

void write_json(std::ostream& out, const Report& r) {
  nlohmann::ordered_json j;
  j["kind"] = r.kind;
  j["provenance"] = r.provenance;
  auto& cols = j["columns"] = nlohmann::ordered_json::array();
  for (const auto& c : r.columns) cols.push_back(c.name);
  auto& rows = j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    check_row(r, row);
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < row.size(); ++k) {
      const auto& c = row[k];
      if (std::holds_alternative<double>(c)) {
        o[r.columns[k].name] = std::get<double>(c);
      } else if (std::holds_alternative<std::string>(c)) {
        o[r.columns[k].name] = std::get<std::string>(c);
      } else {
        o[r.columns[k].name] = nullptr;
      }
    }
    rows.push_back(std::move(o));
  }
  out << j.dump(2) << '\n';
}

void write_report(std::ostream& out, const Report& r, Format f) {
  switch (f) {
    case Format::csv: write_csv(out, r); break;
    case Format::md: write_markdown(out, r); break;
    case Format::json: write_json(out, r); break;
  }
}

Report read_csv(std::istream& in, std::string kind, std::vector<Column> columns) {
  const csv::Table t = csv::read(in);
  if (t.header.size() != columns.size()) {
    throw ValidationError("report CSV has " + std::to_string(t.header.size()) +
                          " columns, expected " + std::to_string(columns.size()));
  }
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (t.header[j] != columns[j].name) {
      throw ValidationError("report CSV column '" + t.header[j] + "', expected '" +
                            columns[j].name + "'");
    }
  }
  Report r;
  r.kind = std::move(kind);
  r.columns = std::move(columns);
  for (const auto& fields : t.rows) {
    std::vector<Cell> row;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (fields[j] == "NA") {
        row.emplace_back(std::monostate{});
      } else if (r.columns[j].digits < 0) {
        row.emplace_back(fields[j]);
      } else {
        row.emplace_back(csv::parse_double(fields[j]));
      }
    }
    check_row(r, row);
    r.rows.push_back(std::move(row));
  }
  return r;
}

std::optional<double> percent_change(std::optional<double> original,
                                     std::optional<double> modified) {
  if (!original || !modified || std::fabs(*original) == 0.0) return std::nullopt;
  return (std::fabs(*original) - std::fabs(*modified)) * 100.0 / std::fabs(*original);
}

}  // namespace fairdemand::cli
