#include <istream>
#include <ostream>
#include <sstream>

#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"
#include "fairdemand/models.hpp"

namespace fairdemand::models {

namespace {
constexpr const char* kHeader = "fairdemand-checkpoint v1";
}

void save_checkpoint(std::ostream& out, const Model& model) {
  out << kHeader << '\n';
  out << "config " << to_json(model.config()).dump() << '\n';
  const auto& params = model.parameters();
  const auto& names = model.parameter_names();
  out << "params " << params.size() << '\n';
  for (std::size_t i = 0; i < params.size(); ++i) {
    out << "param " << names[i] << ' ' << params[i].rows() << ' ' << params[i].cols() << '\n';
    for (const double v : params[i].values()) out << csv::format_exact(v) << '\n';
  }
}

std::unique_ptr<Model> load_checkpoint(std::istream& in, std::size_t nodes,
                                       const Tensor* propagation) {
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw ValidationError("checkpoint: bad header");
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) {
    throw ValidationError("checkpoint: missing config line");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line.substr(7));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
  auto model = Model::create(model_config_from_json(j), nodes, propagation);
  if (!std::getline(in, line) || line.rfind("params ", 0) != 0) {
    throw ValidationError("checkpoint: missing parameter count");
  }
  const auto count = static_cast<std::size_t>(csv::parse_int(line.substr(7)));
  auto& params = model->parameters();
  if (count != params.size()) throw ValidationError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ValidationError("checkpoint: truncated");
    std::istringstream hdr(line);
    std::string tag, name;
    std::size_t rows = 0, cols = 0;
    hdr >> tag >> name >> rows >> cols;
    if (tag != "param" || name != model->parameter_names()[i] || rows != params[i].rows() ||
        cols != params[i].cols()) {
      throw ValidationError("checkpoint: parameter '" + name + "' does not match the model");
    }
    for (auto& v : params[i].values()) {
      if (!std::getline(in, line)) throw ValidationError("checkpoint: truncated");
      v = csv::parse_double(line);
    }
  }
  return model;
}

}  // namespace fairdemand::models
