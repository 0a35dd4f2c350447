#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fairdemand/cli.hpp"
#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"

namespace fairdemand::cli {

namespace {

using nlohmann::json;

std::string_view source_name(DataSource::Kind k) {
  switch (k) {
    case DataSource::Kind::synthetic: return "synthetic";
    case DataSource::Kind::files: return "files";
    case DataSource::Kind::bundle: return "bundle";
  }
  return "synthetic";
}

DataSource::Kind parse_source(std::string_view s) {
  if (s == "synthetic") return DataSource::Kind::synthetic;
  if (s == "files") return DataSource::Kind::files;
  if (s == "bundle") return DataSource::Kind::bundle;
  throw ValidationError("unknown data source '" + std::string(s) + "' (synthetic, files, bundle)");
}

std::string resolve(const std::string& p, const fs::path& base) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal().string();
}

std::string_view pooling_name(fairness::Pooling p) {
  return p == fairness::Pooling::pooled ? "pooled" : "per_step";
}

fairness::Pooling parse_pooling(std::string_view s) {
  if (s == "per_step") return fairness::Pooling::per_step;
  if (s == "pooled") return fairness::Pooling::pooled;
  throw ValidationError("unknown pooling '" + std::string(s) + "' (per_step, pooled)");
}

}  // namespace

ExperimentSpec::ExperimentSpec() {
  ModelEntry e;
  e.config.kind = models::ModelKind::mlp;
  models.push_back(e);
}

void ExperimentSpec::validate() const {
  if (k == 0) throw ValidationError("k must be positive");
  if (m == 0) throw ValidationError("m must be positive");
  split.validate();
  train.validate();
  loss.validate();
  grid.validate();
  if (models.empty()) throw ValidationError("no models requested");
  for (const auto& e : models) {
    model_for(e).validate();
    train_for(e).validate();
  }
  if (!(graph.sigma2 > 0.0)) throw ValidationError("graph sigma2 must be positive");
  if (!(graph.alpha >= 0.0 && graph.alpha <= 1.0)) throw ValidationError("graph alpha must lie in [0, 1]");
  if (!(graph.distance_scale > 0.0)) throw ValidationError("graph distance_scale must be positive");
  switch (data.kind) {
    case DataSource::Kind::synthetic: data.synthetic.validate(); break;
    case DataSource::Kind::files:
      if (data.trips.empty() || data.attributes.empty()) {
        throw ValidationError("file data source needs 'trips' and 'attributes'");
      }
      if (data.interval_seconds <= 0) throw ValidationError("interval_seconds must be positive");
      break;
    case DataSource::Kind::bundle:
      if (data.bundle.empty()) throw ValidationError("bundle data source needs 'path'");
      break;
  }
}

training::TrainConfig ExperimentSpec::train_for(const ModelEntry& e) const {
  json j = training::to_json(train);
  for (const auto& [key, value] : e.train.items()) j[key] = value;
  j["seed"] = seed;
  return training::train_config_from_json(j);
}

models::ModelConfig ExperimentSpec::model_for(const ModelEntry& e) const {
  models::ModelConfig c = e.config;
  c.k = k;
  c.m = m;
  c.seed = seed;
  return c;
}

json to_json(const ExperimentSpec& s) {
  json data{{"source", source_name(s.data.kind)}};
  switch (s.data.kind) {
    case DataSource::Kind::synthetic: data["synthetic"] = data::to_json(s.data.synthetic); break;
    case DataSource::Kind::files:
      data["trips"] = s.data.trips;
      data["attributes"] = s.data.attributes;
      data["distances"] = s.data.distances;
      data["neighbours"] = s.data.neighbours;
      data["interval_seconds"] = s.data.interval_seconds;
      break;
    case DataSource::Kind::bundle: data["path"] = s.data.bundle; break;
  }
  json models = json::array();
  for (const auto& e : s.models) {
    json m = models::to_json(e.config);
    m.erase("k");
    m.erase("m");
    m.erase("seed");
    if (!e.train.empty()) m["train"] = e.train;
    models.push_back(std::move(m));
  }
  json train = training::to_json(s.train);
  train.erase("seed");
  return {{"data", data},
          {"k", s.k},
          {"m", s.m},
          {"split", {{"train", s.split.train}, {"val", s.split.val}, {"test", s.split.test}}},
          {"normalizer", data::to_string(s.normalizer)},
          {"models", models},
          {"train", train},
          {"loss", {{"mode", fairness::to_string(s.loss.mode)}, {"attribute", s.loss.attribute}}},
          {"grid",
           {{"lambdas", s.grid.lambdas},
            {"hidden", s.grid.hidden},
            {"batch_sizes", s.grid.batch_sizes},
            {"tau", s.grid.tau}}},
          {"graph",
           {{"sigma2", s.graph.sigma2},
            {"alpha", s.graph.alpha},
            {"distance_scale", s.graph.distance_scale}}},
          {"pooling", pooling_name(s.pooling)},
          {"attributes", s.attributes},
          {"seed", s.seed}};
}

ExperimentSpec spec_from_json(const json& j, const fs::path& base) {
  ExperimentSpec s;
  try {
    if (!j.is_object()) throw ValidationError("experiment spec must be a JSON object");
    if (j.contains("data")) {
      const json& d = j.at("data");
      s.data.kind = parse_source(d.value("source", std::string("synthetic")));
      if (d.contains("synthetic")) s.data.synthetic = data::synthetic_spec_from_json(d.at("synthetic"));
      s.data.trips = resolve(d.value("trips", std::string()), base);
      s.data.attributes = resolve(d.value("attributes", std::string()), base);
      s.data.distances = resolve(d.value("distances", std::string()), base);
      s.data.neighbours = resolve(d.value("neighbours", std::string()), base);
      s.data.bundle = resolve(d.value("path", std::string()), base);
      s.data.interval_seconds = d.value("interval_seconds", s.data.interval_seconds);
    }
    s.k = j.value("k", s.k);
    s.m = j.value("m", s.m);
    if (j.contains("split")) {
      const json& sp = j.at("split");
      s.split.train = sp.value("train", s.split.train);
      s.split.val = sp.value("val", s.split.val);
      s.split.test = sp.value("test", s.split.test);
    }
    if (j.contains("normalizer")) {
      s.normalizer = data::parse_normalizer_mode(j.at("normalizer").get<std::string>());
    }
    if (j.contains("models")) {
      s.models.clear();
      for (const json& m : j.at("models")) {
        ModelEntry e;
        if (m.is_string()) {
          e.config.kind = models::parse_model_kind(m.get<std::string>());
        } else {
          json cfg = m;
          if (cfg.contains("train")) {
            e.train = cfg.at("train");
            cfg.erase("train");
          }
          e.config = models::model_config_from_json(cfg);
        }
        s.models.push_back(std::move(e));
      }
    }
    if (j.contains("train")) s.train = training::train_config_from_json(j.at("train"));
    if (j.contains("loss")) {
      json l = j.at("loss");
      l.erase("lambda");
      s.loss = training::loss_config_from_json(l);
    }
    if (j.contains("grid")) {
      const json& g = j.at("grid");
      s.grid.lambdas = g.value("lambdas", s.grid.lambdas);
      s.grid.hidden = g.value("hidden", s.grid.hidden);
      s.grid.batch_sizes = g.value("batch_sizes", s.grid.batch_sizes);
      s.grid.tau = g.value("tau", s.grid.tau);
    }
    if (j.contains("graph")) {
      const json& g = j.at("graph");
      s.graph.sigma2 = g.value("sigma2", s.graph.sigma2);
      s.graph.alpha = g.value("alpha", s.graph.alpha);
      s.graph.distance_scale = g.value("distance_scale", s.graph.distance_scale);
    }
    if (j.contains("pooling")) s.pooling = parse_pooling(j.at("pooling").get<std::string>());
    s.attributes = j.value("attributes", s.attributes);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("experiment spec: ") + e.what());
  }
  s.validate();
  return s;
}

void apply_mode(ExperimentSpec& spec, std::string_view mode,
                const std::vector<std::string>& attribute_names) {
  const auto colon = mode.find(':');
  const std::string_view kind = mode.substr(0, colon);
  spec.loss.mode = fairness::parse_regularizer(kind);
  if (spec.loss.mode == fairness::Regularizer::none) {
    throw ValidationError("mode must be multi, single:ATTR, em, rfg or ifg");
  }
  if (colon == std::string_view::npos) {
    if (spec.loss.mode == fairness::Regularizer::single) {
      throw ValidationError("single mode needs an attribute: single:ATTR");
    }
    return;
  }
  if (spec.loss.mode == fairness::Regularizer::multi) {
    throw ValidationError("multi mode takes no attribute");
  }
  const std::string attr(mode.substr(colon + 1));
  const auto it = std::find(attribute_names.begin(), attribute_names.end(), attr);
  if (it != attribute_names.end()) {
    spec.loss.attribute = static_cast<std::size_t>(it - attribute_names.begin());
    return;
  }
  std::size_t idx = 0;
  const auto [ptr, ec] = std::from_chars(attr.data(), attr.data() + attr.size(), idx);
  if (ec != std::errc() || ptr != attr.data() + attr.size() || idx >= attribute_names.size()) {
    throw ValidationError("unknown attribute '" + attr + "'");
  }
  spec.loss.attribute = idx;
}

std::vector<double> parse_lambda_list(std::string_view s) {
  std::vector<double> out;
  std::size_t p = 0;
  while (p <= s.size()) {
    const std::size_t q = std::min(s.find(',', p), s.size());
    const std::string field = csv::trim(s.substr(p, q - p));
    if (field.empty()) throw ValidationError("empty entry in lambda grid");
    out.push_back(csv::parse_double(field));
    p = q + 1;
  }
  return out;
}

}  // namespace fairdemand::cli
