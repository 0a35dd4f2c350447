#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "fairdemand/cli.hpp"
#include "fairdemand/error.hpp"

namespace fairdemand::cli {

namespace {

constexpr int kManifestVersion = 1;

struct Options {
  std::string command;
  std::string spec_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::string models;
  std::string lambda_grid;
  std::string mode;
  std::string format;
};

struct Replay {
  std::string data_hash;
  std::map<std::string, std::string> outputs;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot open '" + p.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + p.string() + "'");
  out << bytes;
  if (!out) throw RuntimeFailure("failed writing '" + p.string() + "'");
}

void apply_models(ExperimentSpec& spec, const std::string& list) {
  std::vector<ModelEntry> entries;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    const auto kind = models::parse_model_kind(name);
    ModelEntry e;
    e.config.kind = kind;
    // Keep configured overrides for kinds already listed.
    for (const auto& old : spec.models) {
      if (old.config.kind == kind) {
        e = old;
        break;
      }
    }
    entries.push_back(std::move(e));
  }
  if (entries.empty()) throw ValidationError("--models is empty");
  spec.models = std::move(entries);
}

std::vector<std::string> attribute_names_for(const ExperimentSpec& spec, const Dataset& d) {
  return spec.attributes.empty() ? d.attributes.names : spec.attributes;
}

int execute(const Options& o, std::ostream& out) {
  ExperimentSpec spec;
  std::optional<Replay> replay;
  std::optional<Format> fmt;
  if (!o.format.empty()) fmt = parse_format(o.format);
  if (!o.spec_path.empty()) {
    const fs::path path(o.spec_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(o.spec_path + ": " + e.what());
    }
    const fs::path base = fs::absolute(path).parent_path();
    if (j.contains("manifest_version")) {
      if (j.at("command").get<std::string>() != o.command) {
        throw ValidationError("manifest was written by '" + j.at("command").get<std::string>() +
                              "', not '" + o.command + "'");
      }
      spec = spec_from_json(j.at("spec"), base);
      Replay r;
      r.data_hash = j.at("data_hash").get<std::string>();
      for (const auto& [k, v] : j.at("outputs").items()) r.outputs[k] = v.get<std::string>();
      replay = std::move(r);
      if (!fmt) fmt = parse_format(j.at("format").get<std::string>());
    } else {
      spec = spec_from_json(j, base);
    }
  }
  const bool overridden = o.seed || !o.models.empty() || !o.lambda_grid.empty() || !o.mode.empty();
  if (o.seed) spec.seed = *o.seed;
  if (!o.models.empty()) apply_models(spec, o.models);
  if (!o.lambda_grid.empty()) spec.grid.lambdas = parse_lambda_list(o.lambda_grid);
  const Format format = fmt.value_or(Format::csv);

  const fs::path dir(o.out);
  fs::create_directories(dir);
  std::map<std::string, std::string> outputs;
  std::string dhash;

  if (o.command == "ingest") {
    spec.validate();
    const Dataset d = load_dataset(spec);
    for (const auto& w : d.warnings) spdlog::warn("{}", w);
    dhash = data_hash(d);
    if (replay && replay->data_hash != dhash) {
      throw ValidationError("input data hash " + dhash + " does not match the manifest's " +
                            replay->data_hash);
    }
    cmd_ingest(spec, dir, format);
    for (const auto& entry : fs::directory_iterator(dir)) {
      const auto name = entry.path().filename().string();
      if (name != "manifest.json" && entry.is_regular_file()) {
        outputs[name] = fnv1a_hex(read_file(entry.path()));
      }
    }
    out << "ingested " << d.demand.nodes() << " zones x " << d.demand.steps() << " intervals into "
        << dir.string() << '\n';
  } else {
    if (!o.mode.empty()) {
      const Dataset probe = load_dataset(spec);
      apply_mode(spec, o.mode, attribute_names_for(spec, probe));
    }
    spec.validate();
    const Prepared p = prepare(spec);
    for (const auto& w : p.dataset.warnings) spdlog::warn("{}", w);
    dhash = data_hash(p.dataset);
    if (replay && replay->data_hash != dhash) {
      throw ValidationError("input data hash " + dhash + " does not match the manifest's " +
                            replay->data_hash);
    }
    Report r;
    if (o.command == "detect") {
      r = cmd_detect(spec, p);
    } else if (o.command == "correct") {
      r = cmd_correct(spec, p);
    } else if (o.command == "sweep") {
      r = cmd_sweep(spec, p);
    } else {
      r = cmd_compare(spec, p);
    }
    r.provenance = fnv1a_hex(to_json(spec).dump());
    std::ostringstream s;
    write_report(s, r, format);
    const std::string name = r.kind + "." + std::string(extension(format));
    write_file(dir / name, s.str());
    outputs[name] = fnv1a_hex(s.str());
    out << s.str();
  }

  nlohmann::ordered_json m;
  m["manifest_version"] = kManifestVersion;
  m["command"] = o.command;
  m["format"] = to_string(format);
  m["seed"] = spec.seed;
  m["spec_hash"] = fnv1a_hex(to_json(spec).dump());
  m["data_hash"] = dhash;
  m["outputs"] = outputs;
  m["spec"] = to_json(spec);
  write_file(dir / "manifest.json", m.dump(2) + "\n");

  if (replay && !overridden) {
    for (const auto& [name, hash] : replay->outputs) {
      const auto it = outputs.find(name);
      if (it == outputs.end() || it->second != hash) {
        throw RuntimeFailure("replay of '" + name + "' differs from the manifest");
      }
    }
  }
  return 0;
}

void use_stderr_logger() {
  static const bool done = [] {
    auto logger = spdlog::get("fairdemand");
    if (!logger) logger = spdlog::stderr_color_mt("fairdemand");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)done;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  use_stderr_logger();
  CLI::App app{"Fairness-aware demand forecasting experiments"};
  app.require_subcommand(1);
  Options o;
  const std::pair<const char*, const char*> commands[] = {
      {"ingest", "Aggregate trips and attributes into a dataset bundle"},
      {"detect", "Train every model at lambda = 0 and report accuracy and bias"},
      {"correct", "Grid-search lambda per model and report the selected correction"},
      {"sweep", "Report RMSE, Corr and PAG for every lambda in the grid"},
      {"compare", "Compare r against EM, RFG and IFG at the selected lambda"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--spec", o.spec_path, "Experiment spec or replay manifest (JSON)");
    sub->add_option("--seed", o.seed, "Seed for model initialization and training");
    sub->add_option("--out", o.out, "Output directory")->capture_default_str();
    sub->add_option("--models", o.models, "Comma-separated model kinds (HA,ARIMA,MLR,MLP,GRU,T-GCN)");
    sub->add_option("--lambda-grid", o.lambda_grid, "Comma-separated lambda values, including 0");
    sub->add_option("--mode", o.mode, "multi, single:ATTR, em, rfg or ifg");
    sub->add_option("--format", o.format, "csv, md or json");
    sub->callback([&o, n = std::string(name)] { o.command = n; });
  }
  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    return execute(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeFailure& e) {
    err << "runtime failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "runtime failure: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace fairdemand::cli
