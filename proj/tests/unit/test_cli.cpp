#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fairdemand/cli.hpp"
#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"

using namespace fairdemand;
using namespace fairdemand::cli;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fairdemand_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

int invoke(std::vector<std::string> args, std::string* stdout_text = nullptr) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  if (stdout_text) *stdout_text = out.str();
  return code;
}

// Node i records i + 1 trips every hour.
fs::path constant_bundle() {
  const fs::path dir = scratch("constant_bundle");
  const std::size_t n = 6, t = 120;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back("z" + std::to_string(i));
  std::vector<std::int64_t> counts(n * t);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < t; ++s) counts[i * t + s] = static_cast<std::int64_t>(i + 1);
  const data::DemandTensor demand(ids, data::parse_iso8601("2021-01-01T00:00Z"), std::chrono::hours(1), t,
                                  counts);
  std::ofstream d(dir / "demand.csv", std::ios::binary);
  data::write_demand_csv(d, demand);
  d.close();
  put(dir / "attributes.csv",
      "zone,race_white_pct,income_low_pct\n"
      "z0,0.1,0.9\nz1,0.3,0.7\nz2,0.2,0.5\nz3,0.8,0.4\nz4,0.6,0.2\nz5,0.9,0.1\n");
  put(dir / "summary.json", R"({"directions":{"race_white_pct":"high","income_low_pct":"low"}})");
  return dir;
}

fs::path bundle_spec(const fs::path& bundle, const std::string& models) {
  const fs::path p = bundle.parent_path() / (bundle.filename().string() + "_spec.json");
  put(p, R"({"data":{"source":"bundle","path":")" + bundle.string() + R"("},"k":4,"models":)" +
             models + R"(,"train":{"max_epochs":3,"learning_rate":0.01},"grid":{"lambdas":[0,0.1]}})");
  return p;
}

fs::path synthetic_spec(const std::string& name) {
  const fs::path p = scratch(name) / "spec.json";
  put(p, R"({"data":{"source":"synthetic","synthetic":{"nodes":20,"steps":300,"grid_cols":5}},
             "k":6,"normalizer":"global",
             "models":[{"kind":"MLR"},{"kind":"MLP","hidden":16}],
             "train":{"learning_rate":0.01,"max_epochs":8},
             "grid":{"lambdas":[0,0.05,0.1]}})");
  return p;
}

csv::Table table_of(const std::string& text) {
  std::istringstream in(text);
  return csv::read(in);
}

Report sample_report() {
  Report r;
  r.kind = "detection";
  r.columns = {{"model", "Model", -1}, {"rmse", "RMSE", 3}, {"pag_a", "PAG a (%)", 3}};
  r.rows = {{std::string("MLP"), 1.0 / 3.0, std::monostate{}}, {std::string("GRU"), 2.5, -0.125}};
  return r;
}

}  // namespace

TEST_CASE("report emission") {
  Report empty = sample_report();
  empty.rows.clear();
  std::ostringstream e;
  write_csv(e, empty);
  CHECK(e.str() == "model,rmse,pag_a\n");

  const Report r = sample_report();
  for (const Format f : {Format::csv, Format::md, Format::json}) {
    std::ostringstream a, b;
    write_report(a, r, f);
    write_report(b, r, f);
    CHECK(a.str() == b.str());
  }
  std::ostringstream md;
  write_markdown(md, r);
  CHECK(md.str() == "| Model | RMSE | PAG a (%) |\n|---|---|---|\n| MLP | 0.333 | NA |\n| GRU | 2.500 | -0.125 |\n");
  std::ostringstream js;
  write_json(js, r);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["rows"][0]["rmse"].get<double>() == 1.0 / 3.0);
  CHECK(j["rows"][0]["pag_a"].is_null());
}

TEST_CASE("csv to parsed to markdown keeps every value") {
  const Report r = sample_report();
  std::ostringstream c;
  write_csv(c, r);
  std::istringstream in(c.str());
  const Report back = read_csv(in, r.kind, r.columns);
  REQUIRE(back.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) CHECK(back.rows[i] == r.rows[i]);
  std::ostringstream m1, m2;
  write_markdown(m1, r);
  write_markdown(m2, back);
  CHECK(m1.str() == m2.str());
}

TEST_CASE("percentage change follows the absolute-value rule") {
  CHECK(*percent_change(-0.4, 0.1) == doctest::Approx(75.0));
  CHECK(*percent_change(2.0, 3.0) == doctest::Approx(-50.0));
  CHECK(*percent_change(0.3, 0.3) == 0.0);
  CHECK_FALSE(percent_change(0.0, 1.0));
  CHECK_FALSE(percent_change(std::nullopt, 1.0));
}

TEST_CASE("experiment spec JSON") {
  ExperimentSpec s;
  s.models.clear();
  ModelEntry gru;
  gru.config.kind = models::ModelKind::gru;
  gru.config.hidden = 8;
  gru.train = {{"learning_rate", 0.02}};
  s.models.push_back(gru);
  s.grid.lambdas = {0.0, 0.1};
  s.attributes = {"race_white_pct"};
  s.seed = 9;
  const auto j = to_json(s);
  CHECK(to_json(spec_from_json(j)) == j);
  CHECK(s.train_for(s.models[0]).learning_rate == 0.02);
  CHECK(s.train_for(s.models[0]).seed == 9);
  CHECK(s.model_for(s.models[0]).seed == 9);

  auto bad = j;
  bad["grid"]["lambdas"] = {0.1};
  CHECK_THROWS_AS(spec_from_json(bad), ValidationError);
  bad = j;
  bad["data"]["source"] = "ftp";
  CHECK_THROWS_AS(spec_from_json(bad), ValidationError);
  bad = j;
  bad["models"] = {{{"kind", "SVM"}}};
  CHECK_THROWS_AS(spec_from_json(bad), ValidationError);
}

TEST_CASE("mode and lambda flags") {
  const std::vector<std::string> names{"race", "income"};
  ExperimentSpec s;
  apply_mode(s, "single:income", names);
  CHECK(s.loss.mode == fairness::Regularizer::single);
  CHECK(s.loss.attribute == 1);
  apply_mode(s, "em:0", names);
  CHECK(s.loss.mode == fairness::Regularizer::em);
  CHECK(s.loss.attribute == 0);
  apply_mode(s, "multi", names);
  CHECK(s.loss.mode == fairness::Regularizer::multi);
  CHECK_THROWS_AS(apply_mode(s, "single", names), ValidationError);
  CHECK_THROWS_AS(apply_mode(s, "single:age", names), ValidationError);
  CHECK_THROWS_AS(apply_mode(s, "none", names), ValidationError);
  CHECK(parse_lambda_list("0, 0.05,0.1") == std::vector<double>{0.0, 0.05, 0.1});
  CHECK_THROWS_AS(parse_lambda_list("0,,1"), ValidationError);
}

TEST_CASE("ingest the two-zone fixture") {
  const fs::path dir = scratch("ingest");
  put(dir / "spec.json", R"({"data":{"source":"files","trips":")" FAIRDEMAND_FIXTURE_DIR
                         R"(/trips_2x48.csv","attributes":")" FAIRDEMAND_FIXTURE_DIR
                         R"(/attributes_2.csv"}})");
  REQUIRE(invoke({"ingest", "--spec", (dir / "spec.json").string(), "--out", (dir / "b").string()}) == 0);
  std::ifstream d(dir / "b" / "demand.csv");
  const auto demand = data::read_demand_csv(d);
  CHECK(demand.nodes() == 2);
  CHECK(demand.steps() == 48);
  CHECK(demand.total() == 74);
  const auto summary = nlohmann::json::parse(slurp(dir / "b" / "summary.json"));
  CHECK(summary["accepted"] == 74);
  CHECK(summary["rejected"] == 1);
  CHECK(summary["unknown_zone"] == 1);
  bool warned = false;
  for (const auto& w : summary["warnings"]) warned |= w.get<std::string>().find("'Q'") != std::string::npos;
  CHECK(warned);
  CHECK(fs::exists(dir / "b" / "manifest.json"));
}

TEST_CASE("empty trips file is a validation error") {
  const fs::path dir = scratch("empty_trips");
  put(dir / "trips.csv", "");
  put(dir / "spec.json", R"({"data":{"source":"files","trips":"trips.csv","attributes":")" FAIRDEMAND_FIXTURE_DIR
                         R"(/attributes_2.csv"}})");
  CHECK(invoke({"ingest", "--spec", (dir / "spec.json").string(), "--out", (dir / "b").string()}) == 1);
}

TEST_CASE("exit codes for bad invocations") {
  CHECK(invoke({}) == 1);
  CHECK(invoke({"detect", "--format", "xml"}) == 1);
  CHECK(invoke({"detect", "--spec", "/nonexistent/spec.json"}) == 1);
  CHECK(invoke({"detect", "--help"}) == 0);
}

TEST_CASE("HA on constant demand detects nothing") {
  const fs::path bundle = constant_bundle();
  const fs::path out = bundle.parent_path() / "constant_out";
  REQUIRE(invoke({"detect", "--spec", bundle_spec(bundle, R"(["HA"])").string(), "--out", out.string()}) == 0);
  const auto t = table_of(slurp(out / "detection.csv"));
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "HA");
  for (std::size_t j = 1; j < t.rows[0].size(); ++j) CHECK(csv::parse_double(t.rows[0][j]) == 0.0);
}

TEST_CASE("detect, correct, sweep and compare on a synthetic fixture") {
  const fs::path spec = synthetic_spec("pipeline");
  const fs::path dir = spec.parent_path();
  auto go = [&](std::vector<std::string> args) {
    args.push_back("--spec");
    args.push_back(spec.string());
    return invoke(args);
  };
  REQUIRE(go({"detect", "--out", (dir / "detect").string()}) == 0);
  REQUIRE(go({"correct", "--out", (dir / "correct").string()}) == 0);
  REQUIRE(go({"sweep", "--out", (dir / "sweep").string()}) == 0);

  const auto det = table_of(slurp(dir / "detect" / "detection.csv"));
  REQUIRE(det.rows.size() == 2);
  CHECK(det.rows[0][0] == "MLR");
  CHECK(det.rows[1][0] == "MLP");
  // The planted bias shows up as a positive gap for every trained model.
  for (const auto& row : det.rows)
    for (std::size_t j = 0; j < det.header.size(); ++j)
      if (det.header[j].starts_with("pag_")) CHECK(csv::parse_double(row[j]) > 0.0);

  // Baseline rows of the correction equal the detection rows exactly.
  const auto cor = table_of(slurp(dir / "correct" / "correction.csv"));
  REQUIRE(cor.rows.size() == 4);
  for (std::size_t m = 0; m < 2; ++m) {
    const auto& base = cor.rows[2 * m];
    CHECK(base[1] == "baseline");
    for (std::size_t j = 0; j < det.header.size(); ++j) {
      const auto it = std::find(cor.header.begin(), cor.header.end(), det.header[j]);
      REQUIRE(it != cor.header.end());
      CHECK(base[static_cast<std::size_t>(it - cor.header.begin())] == det.rows[m][j]);
    }
  }

  const auto sw = table_of(slurp(dir / "sweep" / "sweep.csv"));
  CHECK(sw.rows.size() == 3 * 2 * 4);
}

TEST_CASE("a grid of only zero leaves every change at zero") {
  const fs::path spec = synthetic_spec("zero_grid");
  const fs::path out = spec.parent_path() / "correct";
  REQUIRE(invoke({"correct", "--spec", spec.string(), "--lambda-grid", "0", "--out", out.string()}) == 0);
  const auto t = table_of(slurp(out / "correction.csv"));
  for (std::size_t r = 1; r < t.rows.size(); r += 2)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      if (t.header[j].ends_with("_change_pct")) CHECK(csv::parse_double(t.rows[r][j]) == 0.0);
}

TEST_CASE("compare at lambda zero gives identical rows per model") {
  const fs::path spec = synthetic_spec("compare_zero");
  const fs::path out = spec.parent_path() / "compare";
  REQUIRE(invoke({"compare", "--spec", spec.string(), "--lambda-grid", "0", "--mode", "single:income_low_pct",
               "--models", "MLP", "--out", out.string()}) == 0);
  const auto t = table_of(slurp(out / "comparison.csv"));
  REQUIRE(t.rows.size() == 4);
  CHECK(std::count(t.header.begin(), t.header.end(), "lambda") == 1);
  for (const auto& row : t.rows) {
    for (std::size_t j = 3; j < row.size(); ++j) CHECK(row[j] == t.rows[0][j]);
  }
  CHECK(invoke({"compare", "--spec", spec.string(), "--lambda-grid", "0", "--mode", "multi", "--out",
             out.string()}) == 1);
}

TEST_CASE("replaying a manifest reproduces the report bytes") {
  const fs::path spec = synthetic_spec("replay");
  const fs::path dir = spec.parent_path();
  REQUIRE(invoke({"correct", "--spec", spec.string(), "--format", "md", "--seed", "4", "--out",
               (dir / "first").string()}) == 0);
  REQUIRE(invoke({"correct", "--spec", (dir / "first" / "manifest.json").string(), "--out",
               (dir / "second").string()}) == 0);
  CHECK(slurp(dir / "first" / "correction.md") == slurp(dir / "second" / "correction.md"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "first" / "manifest.json"));
  CHECK(manifest["seed"] == 4);
  CHECK(manifest["command"] == "correct");
  // A manifest only replays the command that wrote it.
  CHECK(invoke({"detect", "--spec", (dir / "first" / "manifest.json").string(), "--out",
             (dir / "third").string()}) == 1);
}

TEST_CASE("replay refuses changed input data") {
  const fs::path bundle = constant_bundle();
  const fs::path dir = bundle.parent_path();
  const fs::path spec = bundle_spec(bundle, R"(["HA"])");
  REQUIRE(invoke({"detect", "--spec", spec.string(), "--out", (dir / "r1").string()}) == 0);
  put(bundle / "attributes.csv",
      "zone,race_white_pct,income_low_pct\n"
      "z0,0.1,0.9\nz1,0.3,0.7\nz2,0.2,0.5\nz3,0.8,0.4\nz4,0.6,0.2\nz5,0.95,0.1\n");
  CHECK(invoke({"detect", "--spec", (dir / "r1" / "manifest.json").string(), "--out", (dir / "r2").string()}) == 1);
}
