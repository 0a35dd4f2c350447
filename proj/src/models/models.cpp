#include "fairdemand/models.hpp"

#include <cmath>
#include <map>
#include <numeric>

#include "fairdemand/error.hpp"

namespace fairdemand::models {

using diff::Shape;

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ha: return "HA";
    case ModelKind::mlr: return "MLR";
    case ModelKind::arima: return "ARIMA";
    case ModelKind::mlp: return "MLP";
    case ModelKind::gru: return "GRU";
    case ModelKind::tgcn: return "T-GCN";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view s) {
  std::string u;
  for (const char c : s) u += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u == "HA") return ModelKind::ha;
  if (u == "MLR") return ModelKind::mlr;
  if (u == "ARIMA") return ModelKind::arima;
  if (u == "MLP") return ModelKind::mlp;
  if (u == "GRU") return ModelKind::gru;
  if (u == "T-GCN" || u == "TGCN") return ModelKind::tgcn;
  throw ValidationError("unknown model kind '" + std::string(s) + "'");
}

std::size_t ModelConfig::hidden_size() const {
  if (hidden != 0) return hidden;
  switch (kind) {
    case ModelKind::mlp: return 300;
    case ModelKind::gru:
    case ModelKind::tgcn: return 64;
    default: return 0;
  }
}

void ModelConfig::validate() const {
  if (k < 1 || m < 1) throw ValidationError("K and M must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must lie in [0,1)");
  if (kind == ModelKind::tgcn && gcn_features < 1) throw ValidationError("gcn_features must be >= 1");
  if (kind == ModelKind::arima) {
    if (ar_p < 0 || ar_d < 0 || ar_q < 0) throw ValidationError("ARIMA orders must be >= 0");
    if (k < static_cast<std::size_t>(ar_p + ar_d + 1)) {
      throw ValidationError("ARIMA needs K > p + d");
    }
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"k", c.k},
          {"m", c.m},
          {"hidden", c.hidden_size()},
          {"gcn_features", c.gcn_features},
          {"dropout", c.dropout},
          {"linear_hidden", c.linear_hidden},
          {"arima_order", {c.ar_p, c.ar_d, c.ar_q}},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.kind = parse_model_kind(j.at("kind").get<std::string>());
    c.k = j.value("k", c.k);
    c.m = j.value("m", c.m);
    c.hidden = j.value("hidden", c.hidden);
    c.gcn_features = j.value("gcn_features", c.gcn_features);
    c.dropout = j.value("dropout", c.dropout);
    c.linear_hidden = j.value("linear_hidden", c.linear_hidden);
    if (j.contains("arima_order")) {
      const auto& o = j.at("arima_order");
      c.ar_p = o.at(0).get<int>();
      c.ar_d = o.at(1).get<int>();
      c.ar_q = o.at(2).get<int>();
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

Model::Model(const ModelConfig& config, std::size_t nodes) : config_(config), nodes_(nodes) {
  config_.validate();
  if (nodes_ == 0) throw ValidationError("model needs at least one node");
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

Tensor& Model::add_parameter(std::string name, std::size_t rows, std::size_t cols) {
  names_.push_back(std::move(name));
  params_.emplace_back(rows, cols);
  return params_.back();
}

void Model::glorot(Tensor& t, std::mt19937_64& rng) const {
  const double limit = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (auto& v : t.values()) v = u(rng);
}

void Model::fit(const Tensor&) {}

void Model::build(ForwardGraph&, std::size_t, bool) const {
  throw ValidationError(to_string(config_.kind) + " has no differentiable forward pass");
}

void Model::bind(const ForwardGraph& fg, const Tensor& x, diff::Bindings& b) const {
  b[fg.x] = x;
  for (std::size_t i = 0; i < fg.params.size(); ++i) b[fg.params[i]] = params_[i];
}

void Model::bind_dropout(const ForwardGraph& fg, std::mt19937_64& rng, diff::Bindings& b) const {
  const double keep = 1.0 - config_.dropout;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const NodeId id : fg.dropout_masks) {
    Tensor mask(fg.graph.shape(id));
    for (auto& v : mask.values()) v = u(rng) < keep ? 1.0 / keep : 0.0;
    b[id] = std::move(mask);
  }
}

Tensor Model::predict(const Tensor& x, std::size_t batch) const {
  if (x.rows() != batch * nodes_ || x.cols() != config_.k) {
    throw ValidationError("predict: expected (B*N) x K input");
  }
  ForwardGraph fg;
  build(fg, batch, false);
  NodeId total = fg.outputs.front();
  for (std::size_t s = 1; s < fg.outputs.size(); ++s) total = fg.graph.add(total, fg.outputs[s]);
  fg.graph.set_output(fg.graph.sum(total));
  diff::Bindings b;
  bind(fg, x, b);
  diff::evaluate(fg.graph, b);
  Tensor out(x.rows(), fg.outputs.size());
  for (std::size_t s = 0; s < fg.outputs.size(); ++s) {
    const Tensor& v = fg.graph.value(fg.outputs[s]);
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, s) = v[r];
  }
  return out;
}

Tensor ha_forecast(const Tensor& x, std::size_t m) {
  if (x.cols() < 1) throw ValidationError("HA needs K >= 1");
  Tensor out(x.rows(), m);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) s += x(r, c);
    const double mean = s / static_cast<double>(x.cols());
    for (std::size_t c = 0; c < m; ++c) out(r, c) = mean;
  }
  return out;
}

namespace {

class HistoricalAverage final : public Model {
 public:
  HistoricalAverage(const ModelConfig& c, std::size_t n) : Model(c, n) {}
  Tensor predict(const Tensor& x, std::size_t batch) const override {
    if (x.rows() != batch * nodes_) throw ValidationError("predict: expected (B*N) x K input");
    return ha_forecast(x, config_.m);
  }
};

class Arima final : public Model {
 public:
  Arima(const ModelConfig& c, std::size_t n) : Model(c, n) {
    add_parameter("phi", n, static_cast<std::size_t>(c.ar_p));
    add_parameter("theta", n, static_cast<std::size_t>(c.ar_q));
    add_parameter("intercept", n, 1);
    add_parameter("fallback", n, 1);
  }

  void fit(const Tensor& train) override {
    if (train.rows() != nodes_) throw ValidationError("ARIMA fit: node count mismatch");
    std::vector<double> series(train.cols());
    for (std::size_t i = 0; i < nodes_; ++i) {
      for (std::size_t t = 0; t < train.cols(); ++t) series[t] = train(i, t);
      const ArimaFit f = arima_fit_series(series, config_.ar_p, config_.ar_d, config_.ar_q);
      for (std::size_t j = 0; j < f.phi.size(); ++j) params_[0](i, j) = f.phi[j];
      for (std::size_t j = 0; j < f.theta.size(); ++j) params_[1](i, j) = f.theta[j];
      params_[2][i] = f.intercept;
      params_[3][i] = f.fallback ? 1.0 : 0.0;
    }
  }

  Tensor predict(const Tensor& x, std::size_t batch) const override {
    if (x.rows() != batch * nodes_) throw ValidationError("predict: expected (B*N) x K input");
    Tensor out(x.rows(), config_.m);
    std::vector<double> hist(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const std::size_t i = r % nodes_;
      ArimaFit f;
      if (params_[3][i] != 0.0) {
        f.fallback = true;
      } else {
        for (std::size_t j = 0; j < params_[0].cols(); ++j) f.phi.push_back(params_[0](i, j));
        for (std::size_t j = 0; j < params_[1].cols(); ++j) f.theta.push_back(params_[1](i, j));
        f.intercept = params_[2][i];
      }
      for (std::size_t c = 0; c < x.cols(); ++c) hist[c] = x(r, c);
      const auto fc = arima_forecast_series(f, hist, config_.ar_d, config_.m);
      for (std::size_t s = 0; s < config_.m; ++s) out(r, s) = fc[s];
    }
    return out;
  }
};

class LinearRegression final : public Model {
 public:
  LinearRegression(const ModelConfig& c, std::size_t n) : Model(c, n) {
    std::mt19937_64 rng(c.seed);
    glorot(add_parameter("B", c.k, c.m), rng);
    add_parameter("b", 1, c.m);
  }

  void build(ForwardGraph& fg, std::size_t batch, bool) const override {
    auto& g = fg.graph;
    const std::size_t rows = batch * nodes_;
    fg.batch = batch;
    fg.x = g.input({rows, config_.k}, "x");
    const NodeId w = g.input(params_[0].shape(), "B");
    const NodeId b = g.input(params_[1].shape(), "b");
    fg.params = {w, b};
    const NodeId y = g.add(g.matmul(fg.x, w), g.broadcast(b, {rows, config_.m}));
    for (std::size_t s = 0; s < config_.m; ++s) {
      if (config_.m == 1) {
        fg.outputs.push_back(y);
        break;
      }
      Tensor sel(config_.m, 1);
      sel[s] = 1.0;
      fg.outputs.push_back(g.matmul(y, g.constant(std::move(sel))));
    }
  }
};

// Shifts a (rows x K) window left by one column and appends `next`.
NodeId roll_window(ExprGraph& g, NodeId window, NodeId next, std::size_t k) {
  Tensor shift(k, k);
  for (std::size_t c = 0; c + 1 < k; ++c) shift(c + 1, c) = 1.0;
  Tensor last(1, k);
  last(0, k - 1) = 1.0;
  return g.add(g.matmul(window, g.constant(std::move(shift))),
               g.matmul(next, g.constant(std::move(last))));
}

class Perceptron final : public Model {
 public:
  Perceptron(const ModelConfig& c, std::size_t n) : Model(c, n) {
    const std::size_t h = c.hidden_size();
    std::mt19937_64 rng(c.seed);
    glorot(add_parameter("W1", c.k, h), rng);
    add_parameter("b1", 1, h);
    glorot(add_parameter("W2", h, 1), rng);
    add_parameter("b2", 1, 1);
  }

  void build(ForwardGraph& fg, std::size_t batch, bool train) const override {
    auto& g = fg.graph;
    const std::size_t rows = batch * nodes_;
    const std::size_t h = config_.hidden_size();
    fg.batch = batch;
    fg.x = g.input({rows, config_.k}, "x");
    const NodeId w1 = g.input(params_[0].shape(), "W1");
    const NodeId b1 = g.input(params_[1].shape(), "b1");
    const NodeId w2 = g.input(params_[2].shape(), "W2");
    const NodeId b2 = g.input(params_[3].shape(), "b2");
    fg.params = {w1, b1, w2, b2};
    const NodeId b1r = g.broadcast(b1, {rows, h});
    const NodeId b2r = g.broadcast(b2, {rows, 1});
    NodeId window = fg.x;
    for (std::size_t s = 0; s < config_.m; ++s) {
      if (s > 0) window = roll_window(g, window, fg.outputs.back(), config_.k);
      NodeId hidden = g.add(g.matmul(window, w1), b1r);
      if (!config_.linear_hidden) hidden = g.relu(hidden);
      if (train && config_.dropout > 0.0) {
        const NodeId mask = g.input({rows, h}, "dropout");
        fg.dropout_masks.push_back(mask);
        hidden = g.mul(hidden, mask);
      }
      fg.outputs.push_back(g.add(g.matmul(hidden, w2), b2r));
    }
  }
};

// Gated recurrent cell shared by GRU and T-GCN:
//   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br)
//   c = tanh(x Wc + (r * h) Uc + bc), h' = c + z * (h - c)
struct CellNodes {
  NodeId wz, uz, bz, wr, ur, br, wc, uc, bc;
};

// Biases in `p` are already broadcast to the state shape.
NodeId gru_step(ExprGraph& g, const CellNodes& p, NodeId x, NodeId h) {
  const NodeId bz = p.bz;
  const NodeId bc = p.bc;
  if (h == diff::kNoNode) {
    const NodeId z = g.sigmoid(g.add(g.matmul(x, p.wz), bz));
    const NodeId c = g.tanh(g.add(g.matmul(x, p.wc), bc));
    return g.sub(c, g.mul(z, c));
  }
  const NodeId br = p.br;
  const NodeId z = g.sigmoid(g.add(g.add(g.matmul(x, p.wz), g.matmul(h, p.uz)), bz));
  const NodeId r = g.sigmoid(g.add(g.add(g.matmul(x, p.wr), g.matmul(h, p.ur)), br));
  const NodeId c = g.tanh(g.add(g.add(g.matmul(x, p.wc), g.matmul(g.mul(r, h), p.uc)), bc));
  return g.add(c, g.mul(z, g.sub(h, c)));
}

class Recurrent : public Model {
 public:
  // input_dim is 1 for GRU and the convolution width for T-GCN.
  Recurrent(const ModelConfig& c, std::size_t n, std::size_t input_dim, const Tensor* propagation)
      : Model(c, n) {
    const std::size_t h = c.hidden_size();
    std::mt19937_64 rng(c.seed);
    if (propagation) {
      if (propagation->rows() != n || propagation->cols() != n) {
        throw ValidationError("T-GCN: propagation matrix does not match the node count");
      }
      propagation_ = *propagation;
      glorot(add_parameter("Theta", 1, input_dim), rng);
    }
    for (const char* gate : {"z", "r", "c"}) {
      glorot(add_parameter(std::string("W") + gate, input_dim, h), rng);
      glorot(add_parameter(std::string("U") + gate, h, h), rng);
      add_parameter(std::string("b") + gate, 1, h);
    }
    glorot(add_parameter("Wo", h, 1), rng);
    add_parameter("bo", 1, 1);
  }

  void build(ForwardGraph& fg, std::size_t batch, bool) const override {
    auto& g = fg.graph;
    const std::size_t rows = batch * nodes_;
    const std::size_t h = config_.hidden_size();
    const bool conv = propagation_.size() > 0;
    fg.batch = batch;
    fg.x = g.input({rows, config_.k}, "x");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      fg.params.push_back(g.input(params_[i].shape(), names_[i]));
    }
    std::size_t at = 0;
    const NodeId theta = conv ? fg.params[at++] : diff::kNoNode;
    CellNodes cell{};
    NodeId* slots[] = {&cell.wz, &cell.uz, &cell.bz, &cell.wr, &cell.ur,
                       &cell.br, &cell.wc, &cell.uc, &cell.bc};
    for (NodeId* s : slots) *s = fg.params[at++];
    const Shape hs{rows, h};
    cell.bz = g.broadcast(cell.bz, hs);
    cell.br = g.broadcast(cell.br, hs);
    cell.bc = g.broadcast(cell.bc, hs);
    const NodeId wo = fg.params[at++];
    const NodeId bo = fg.params[at++];
    const NodeId a_hat = conv ? g.constant(propagation_) : diff::kNoNode;

    auto input_at = [&](NodeId col) {
      if (!conv) return col;
      const NodeId per_sample = g.reshape(col, {batch, nodes_});
      const NodeId mixed = g.reshape(g.matmul(per_sample, a_hat), {rows, 1});
      return g.matmul(mixed, theta);
    };

    NodeId state = diff::kNoNode;
    for (std::size_t c = 0; c < config_.k; ++c) {
      Tensor sel(config_.k, 1);
      sel[c] = 1.0;
      const NodeId col = g.matmul(fg.x, g.constant(std::move(sel)));
      state = gru_step(g, cell, input_at(col), state);
    }
    const NodeId bor = g.broadcast(bo, {rows, 1});
    fg.outputs.push_back(g.add(g.matmul(state, wo), bor));
    for (std::size_t s = 1; s < config_.m; ++s) {
      state = gru_step(g, cell, input_at(fg.outputs.back()), state);
      fg.outputs.push_back(g.add(g.matmul(state, wo), bor));
    }
  }

 private:
  Tensor propagation_;  // symmetric, so x A^T = x A per sample row
};

}  // namespace

std::unique_ptr<Model> Model::create(const ModelConfig& config, std::size_t nodes,
                                     const Tensor* propagation) {
  config.validate();
  switch (config.kind) {
    case ModelKind::ha: return std::make_unique<HistoricalAverage>(config, nodes);
    case ModelKind::arima: return std::make_unique<Arima>(config, nodes);
    case ModelKind::mlr: return std::make_unique<LinearRegression>(config, nodes);
    case ModelKind::mlp: return std::make_unique<Perceptron>(config, nodes);
    case ModelKind::gru: return std::make_unique<Recurrent>(config, nodes, 1, nullptr);
    case ModelKind::tgcn: {
      if (!propagation) throw ValidationError("T-GCN needs a propagation matrix");
      return std::make_unique<Recurrent>(config, nodes, config.gcn_features, propagation);
    }
  }
  throw ValidationError("unknown model kind");
}

}  // namespace fairdemand::models
