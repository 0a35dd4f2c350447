#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fairdemand/expr_graph.hpp"
#include "json.hpp"

namespace fairdemand::models {

using diff::ExprGraph;
using diff::NodeId;
using diff::Tensor;

enum class ModelKind : std::uint8_t { ha, mlr, arima, mlp, gru, tgcn };
std::string to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

struct ModelConfig {
  ModelKind kind = ModelKind::mlp;
  std::size_t k = 12;
  std::size_t m = 1;
  std::size_t hidden = 0;  // 0 picks the kind's default: MLP 300, GRU/T-GCN 64
  std::size_t gcn_features = 8;
  double dropout = 0.01;
  bool linear_hidden = false;  // MLP without the ReLU
  int ar_p = 2;
  int ar_d = 0;
  int ar_q = 1;
  std::uint64_t seed = 0;

  std::size_t hidden_size() const;
  bool trainable() const { return kind != ModelKind::ha && kind != ModelKind::arima; }
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Rows of the stacked input are ordered sample-major: row b*N + i holds
// node i of sample b. All kinds share their weights across nodes.
struct ForwardGraph {
  ExprGraph graph;
  std::size_t batch = 0;
  NodeId x = diff::kNoNode;                // (B*N) x K
  std::vector<NodeId> params;              // parallel to Model::parameters()
  std::vector<NodeId> outputs;             // M nodes, each (B*N) x 1
  std::vector<NodeId> dropout_masks;       // bound per batch in training mode
};

class Model {
 public:
  // `propagation` (N x N) is required for T-GCN and ignored otherwise.
  static std::unique_ptr<Model> create(const ModelConfig& config, std::size_t nodes,
                                       const Tensor* propagation = nullptr);
  virtual ~Model() = default;

  const ModelConfig& config() const { return config_; }
  std::size_t nodes() const { return nodes_; }
  bool trainable() const { return config_.trainable(); }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::size_t parameter_count() const;

  // Classical kinds estimate from the normalized training series (N x T).
  virtual void fit(const Tensor& train_series);

  // Adds the forward pass to fg.graph: creates x, the parameter inputs, the
  // dropout masks (train only) and one output node per forecast step.
  virtual void build(ForwardGraph& fg, std::size_t batch, bool train) const;

  // Fresh dropout masks for a graph built with train = true.
  void bind_dropout(const ForwardGraph& fg, std::mt19937_64& rng, diff::Bindings& b) const;

  // x: (B*N) x K normalized history -> (B*N) x M normalized forecast.
  virtual Tensor predict(const Tensor& x, std::size_t batch) const;

  // Binds x and the current parameters.
  void bind(const ForwardGraph& fg, const Tensor& x, diff::Bindings& b) const;

 protected:
  Model(const ModelConfig& config, std::size_t nodes);
  Tensor& add_parameter(std::string name, std::size_t rows, std::size_t cols);
  void glorot(Tensor& t, std::mt19937_64& rng) const;

  ModelConfig config_;
  std::size_t nodes_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

// Row means of x repeated over the M output columns.
Tensor ha_forecast(const Tensor& x, std::size_t m);

// Per-node ARMA(p, q) on the d-times differenced series, estimated by
// conditional least squares.
struct ArimaFit {
  std::vector<double> phi;
  std::vector<double> theta;
  double intercept = 0.0;
  bool fallback = false;  // (0,1,0) random walk
};
ArimaFit arima_fit_series(std::span<const double> series, int p, int d, int q);
std::vector<double> arima_forecast_series(const ArimaFit& fit, std::span<const double> history,
                                          int d, std::size_t m);

// Text checkpoint: header, config JSON on one line, then each parameter as
// `param <name> <rows> <cols>` followed by its values, one per line.
void save_checkpoint(std::ostream& out, const Model& model);
std::unique_ptr<Model> load_checkpoint(std::istream& in, std::size_t nodes,
                                       const Tensor* propagation = nullptr);

}  // namespace fairdemand::models
