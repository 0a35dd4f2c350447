#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "fairdemand/cli.hpp"
#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"
#include "fairdemand/fairness.hpp"

namespace fairdemand::cli {

namespace {

std::optional<double> opt(double v) { return v; }

Cell cell(std::optional<double> v) {
  if (!v) return std::monostate{};
  return *v;
}

std::string model_name(const models::ModelConfig& c) { return models::to_string(c.kind); }

std::string mode_name(const training::LossConfig& loss, const std::vector<std::string>& attrs) {
  if (loss.mode == fairness::Regularizer::multi || loss.mode == fairness::Regularizer::none) {
    return fairness::to_string(loss.mode);
  }
  return fairness::to_string(loss.mode) + ":" + attrs.at(loss.attribute);
}

std::vector<Column> metric_columns(const std::vector<std::string>& attrs, bool changes) {
  std::vector<Column> cols{{"mae", "MAE", 3}, {"rmse", "RMSE", 3}};
  if (changes) cols.push_back({"rmse_change_pct", "RMSE Δ (%)", 2});
  for (const auto& a : attrs) {
    cols.push_back({"corr_" + a, "Corr " + a, 4});
    if (changes) cols.push_back({"corr_" + a + "_change_pct", "Corr " + a + " Δ (%)", 2});
    cols.push_back({"pag_" + a, "PAG " + a + " (%)", 3});
    if (changes) cols.push_back({"pag_" + a + "_change_pct", "PAG " + a + " Δ (%)", 2});
  }
  return cols;
}

// With `changes`, each metric is followed by its change against `base`;
// without a base those cells are empty.
void append_metrics(std::vector<Cell>& row, const fairness::FairnessReport& r,
                    const fairness::FairnessReport* base, bool changes) {
  auto change = [&](std::optional<double> o, std::optional<double> m) {
    if (changes) row.push_back(base ? cell(percent_change(o, m)) : Cell{});
  };
  row.emplace_back(r.mae);
  row.emplace_back(r.rmse);
  change(base ? opt(base->rmse) : std::nullopt, opt(r.rmse));
  for (std::size_t j = 0; j < r.corr.size(); ++j) {
    row.emplace_back(r.corr[j]);
    change(base ? opt(base->corr[j]) : std::nullopt, opt(r.corr[j]));
    row.push_back(cell(r.pag[j]));
    change(base ? base->pag[j] : std::nullopt, r.pag[j]);
  }
}

training::GridResult search(const ExperimentSpec& spec, const Prepared& p, const ModelEntry& e,
                            const training::LossConfig& loss, training::GridSpec grid) {
  grid.pooling = spec.pooling;
  return training::grid_search(spec.model_for(e), p.data, loss, spec.train_for(e), grid,
                               p.propagation ? &*p.propagation : nullptr);
}

const std::vector<std::string>& attribute_names(const Prepared& p) { return p.data.attributes.names; }

fairness::FairnessReport train_and_report(const ExperimentSpec& spec, const Prepared& p,
                                          const models::ModelConfig& mc,
                                          const training::LossConfig& loss,
                                          const training::TrainConfig& tc) {
  auto model = models::Model::create(mc, p.data.nodes, p.propagation ? &*p.propagation : nullptr);
  training::train(*model, p.data, loss, tc);
  return training::evaluate(*model, p.data, loss.lambda, model_name(mc), spec.pooling);
}

}  // namespace

Report cmd_detect(const ExperimentSpec& spec, const Prepared& p) {
  Report r;
  r.kind = "detection";
  r.columns = {{"model", "Model", -1}};
  for (auto& c : metric_columns(attribute_names(p), false)) r.columns.push_back(std::move(c));
  training::GridSpec grid = spec.grid;
  grid.lambdas = {0.0};
  for (const auto& e : spec.models) {
    const auto result = search(spec, p, e, spec.loss, grid);
    std::vector<Cell> row{model_name(e.config)};
    append_metrics(row, result.entries[result.baseline].report, nullptr, false);
    r.rows.push_back(std::move(row));
  }
  return r;
}

Report cmd_correct(const ExperimentSpec& spec, const Prepared& p) {
  const auto& attrs = attribute_names(p);
  Report r;
  r.kind = "correction";
  r.columns = {{"model", "Model", -1}, {"mode", "Mode", -1}, {"lambda", "λ", 3}};
  for (auto& c : metric_columns(attrs, true)) r.columns.push_back(std::move(c));
  for (const auto& e : spec.models) {
    const auto result = search(spec, p, e, spec.loss, spec.grid);
    const auto& base = result.entries[result.baseline];
    const auto& best = result.entries[result.best];
    std::vector<Cell> b{model_name(e.config), std::string("baseline"), 0.0};
    append_metrics(b, base.report, nullptr, true);
    r.rows.push_back(std::move(b));
    std::vector<Cell> s{model_name(e.config), mode_name(best.loss, attrs), best.loss.lambda};
    append_metrics(s, best.report, &base.report, true);
    r.rows.push_back(std::move(s));
  }
  return r;
}

Report cmd_sweep(const ExperimentSpec& spec, const Prepared& p) {
  const auto& attrs = attribute_names(p);
  Report r;
  r.kind = "sweep";
  r.columns = {{"lambda", "λ", 3},      {"model", "Model", -1}, {"attribute", "Attribute", -1},
               {"rmse", "RMSE", 3},     {"corr", "Corr", 4},    {"pag", "PAG (%)", 3}};
  training::GridSpec grid = spec.grid;
  grid.hidden.clear();
  grid.batch_sizes.clear();
  std::vector<training::GridResult> results;
  for (const auto& e : spec.models) results.push_back(search(spec, p, e, spec.loss, grid));
  for (const double lambda : spec.grid.lambdas) {
    for (std::size_t mi = 0; mi < spec.models.size(); ++mi) {
      const auto& res = results[mi];
      // Classical kinds are fitted once; the regularizer does not reach them.
      const training::GridEntry* entry = &res.entries[res.baseline];
      for (const auto& en : res.entries) {
        if (en.loss.lambda == lambda) entry = &en;
      }
      for (std::size_t j = 0; j < attrs.size(); ++j) {
        r.rows.push_back({lambda, model_name(spec.models[mi].config), attrs[j], entry->report.rmse,
                          entry->report.corr[j], cell(entry->report.pag[j])});
      }
    }
  }
  return r;
}

Report cmd_compare(const ExperimentSpec& spec, const Prepared& p) {
  const auto& attrs = attribute_names(p);
  training::LossConfig loss = spec.loss;
  if (loss.mode == fairness::Regularizer::multi) {
    throw ValidationError("compare needs a single attribute: --mode single:ATTR");
  }
  loss.mode = fairness::Regularizer::single;
  const std::string& attr = attrs.at(loss.attribute);
  Report r;
  r.kind = "comparison";
  r.columns = {{"model", "Model", -1},    {"regularizer", "Regularizer", -1},
               {"attribute", "Attribute", -1}, {"lambda", "λ", 3},
               {"mae", "MAE", 3},         {"rmse", "RMSE", 3},
               {"corr", "Corr", 4},       {"pag", "PAG (%)", 3}};
  auto add_row = [&](const std::string& model, const std::string& reg, double lambda,
                     const fairness::FairnessReport& rep) {
    r.rows.push_back({model, reg, attr, lambda, rep.mae, rep.rmse, rep.corr[loss.attribute],
                      cell(rep.pag[loss.attribute])});
  };
  for (const auto& e : spec.models) {
    const auto result = search(spec, p, e, loss, spec.grid);
    const auto& best = result.entries[result.best];
    add_row(model_name(e.config), "r", best.loss.lambda, best.report);
    for (const auto kind : {fairness::Regularizer::em, fairness::Regularizer::rfg,
                            fairness::Regularizer::ifg}) {
      training::LossConfig l = best.loss;
      l.mode = kind;
      const auto rep = train_and_report(spec, p, best.model, l, best.train);
      add_row(model_name(e.config), fairness::to_string(kind), l.lambda, rep);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void write_matrix(const fs::path& path, const std::vector<std::string>& row_ids,
                  const std::vector<std::string>& col_ids, const Tensor& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << "zone";
  for (const auto& c : col_ids) out << ',' << csv::escape(c);
  out << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    out << csv::escape(row_ids[i]);
    for (std::size_t j = 0; j < m.cols(); ++j) out << ',' << csv::format_exact(m(i, j));
    out << '\n';
  }
}

std::string_view group_name(data::Group g) {
  switch (g) {
    case data::Group::advantaged: return "advantaged";
    case data::Group::disadvantaged: return "disadvantaged";
    case data::Group::middle: return "middle";
  }
  return "middle";
}

}  // namespace

void cmd_ingest(const ExperimentSpec& spec, const fs::path& out, Format fmt) {
  const Dataset d = load_dataset(spec);
  const auto& attrs = d.attributes;
  const auto& ids = attrs.node_ids;
  fs::create_directories(out);
  auto open = [&](const std::string& name) {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw ValidationError("cannot write '" + (out / name).string() + "'");
    return f;
  };
  {
    auto f = open("demand.csv");
    data::write_demand_csv(f, d.demand);
  }
  write_matrix(out / "attributes.csv", ids, attrs.names, attrs.z);
  std::vector<std::string> notes = d.warnings;
  auto skip = [&](const std::string& what, const std::exception& e) {
    notes.push_back(what + " skipped: " + e.what());
    spdlog::warn("{} skipped: {}", what, e.what());
  };
  std::optional<data::GroupLabeling> labels;
  try {
    labels = data::label_groups(attrs);
  } catch (const ValidationError& e) {
    skip("group labels", e);
  }
  if (labels) {
    auto f = open("labels.csv");
    f << "zone";
    for (const auto& n : attrs.names) f << ',' << csv::escape(n);
    f << '\n';
    for (std::size_t i = 0; i < ids.size(); ++i) {
      f << csv::escape(ids[i]);
      for (const auto& a : labels->attributes) f << ',' << group_name(a.labels[i]);
      f << '\n';
    }
  }
  std::optional<fairness::AttributeCorrelation> corr;
  try {
    corr = fairness::attribute_corr_matrix(attrs.z);
  } catch (const std::runtime_error& e) {
    skip("attribute correlation matrix", e);
  }
  if (corr) {
    write_matrix(out / "omega.csv", attrs.names, attrs.names, corr->omega);
    write_matrix(out / "omega_inv.csv", attrs.names, attrs.names, corr->omega_inv);
  }
  const std::size_t t = d.demand.steps();
  {
    const auto sp = data::chronological_split(d.demand, spec.split);
    auto f = open("splits.csv");
    f << "split,first_step,end_step,start\n";
    std::size_t first = 0;
    for (const auto& [name, part] : {std::pair<const char*, const data::DemandTensor*>{"train", &sp.train},
                                     {"val", &sp.val},
                                     {"test", &sp.test}}) {
      f << name << ',' << first << ',' << first + part->steps() << ','
        << data::format_iso8601(d.demand.time_of(first)) << '\n';
      first += part->steps();
    }
  }
  if (d.distances) {
    write_matrix(out / "distances.csv", ids, ids, *d.distances);
    const auto w = graph::gaussian_adjacency(*d.distances, spec.graph);
    write_matrix(out / "adjacency.csv", ids, ids, w.w);
  }
  if (d.has_neighbours) {
    auto f = open("neighbours.csv");
    f << "zone_a,zone_b\n";
    for (const auto& [a, b] : d.neighbours) f << csv::escape(ids[a]) << ',' << csv::escape(ids[b]) << '\n';
  }

  nlohmann::ordered_json s;
  s["nodes"] = d.demand.nodes();
  s["steps"] = t;
  s["start"] = data::format_iso8601(d.demand.t0());
  s["interval_seconds"] = d.demand.interval().count();
  s["total_trips"] = d.demand.total();
  s["accepted"] = d.aggregation.accepted;
  s["rejected"] = d.aggregation.rejected;
  s["unknown_zone"] = d.aggregation.unknown_zone;
  s["out_of_range"] = d.aggregation.out_of_range;
  s["warnings"] = notes;
  auto& dirs = s["directions"] = nlohmann::ordered_json::object();
  for (std::size_t j = 0; j < attrs.attributes(); ++j) dirs[attrs.names[j]] = data::to_string(attrs.directions[j]);
  auto& pct = s["percentiles"] = nlohmann::ordered_json::object();
  for (std::size_t j = 0; labels && j < attrs.attributes(); ++j) {
    const auto& a = labels->attributes[j];
    pct[attrs.names[j]] = {{"p40", a.p40},
                           {"p60", a.p60},
                           {"degenerate", a.degenerate},
                           {"advantaged", a.count(data::Group::advantaged)},
                           {"disadvantaged", a.count(data::Group::disadvantaged)}};
  }
  if (corr) s["omega_condition"] = corr->condition;
  {
    auto f = open("summary.json");
    f << s.dump(2) << '\n';
  }
  if (fmt == Format::md) {
    auto f = open("summary.md");
    f << "| Nodes | Hours | Accepted | Rejected | Unknown zone |\n|---|---|---|---|---|\n| "
      << d.demand.nodes() << " | " << t << " | " << d.aggregation.accepted << " | "
      << d.aggregation.rejected << " | " << d.aggregation.unknown_zone << " |\n";
  }
}

}  // namespace fairdemand::cli
