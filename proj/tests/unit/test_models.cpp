#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fairdemand/error.hpp"
#include "fairdemand/finite_diff.hpp"
#include "fairdemand/graph.hpp"
#include "fairdemand/models.hpp"

using namespace fairdemand;
using namespace fairdemand::models;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

Tensor random_tensor(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(r, c);
  for (auto& v : t.values()) v = g(rng);
  return t;
}

ModelConfig config(ModelKind kind, std::size_t k, std::size_t m, std::size_t hidden = 0) {
  ModelConfig c;
  c.kind = kind;
  c.k = k;
  c.m = m;
  c.hidden = hidden;
  c.seed = 17;
  return c;
}

std::size_t param_index(const Model& model, const std::string& name) {
  const auto& names = model.parameter_names();
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

// Checks d mean((f(x) - target)^2) / d params against central differences.
double worst_gradient_error(Model& model, std::size_t batch, std::mt19937_64& rng) {
  const std::size_t rows = batch * model.nodes();
  const Tensor x = random_tensor(rows, model.config().k, rng);
  const Tensor target = random_tensor(rows, 1, rng);
  ForwardGraph fg;
  model.build(fg, batch, false);
  auto& g = fg.graph;
  NodeId loss = g.mean(g.square(g.sub(fg.outputs.back(), g.constant(target))));
  g.set_output(loss);
  diff::Bindings b;
  model.bind(fg, x, b);
  const auto grads = diff::gradients(g, b, fg.params);

  double worst = 0.0;
  for (std::size_t p = 0; p < fg.params.size(); ++p) {
    const auto f = [&](const Tensor& v) {
      diff::Bindings bb = b;
      bb[fg.params[p]] = v;
      return diff::evaluate(g, bb);
    };
    const Tensor fd = diff::finite_diff_gradient(f, model.parameters()[p]);
    worst = std::max(worst, diff::max_relative_error(grads.at(fg.params[p]), fd, 1e-6));
  }
  return worst;
}

// Rows b*N + perm[i] of the result hold rows b*N + i of x.
Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm, std::size_t batch) {
  const std::size_t n = perm.size();
  Tensor out(x.rows(), x.cols());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < x.cols(); ++c) out(b * n + perm[i], c) = x(b * n + i, c);
  return out;
}

}  // namespace

TEST_CASE("model names") {
  for (const auto k : {ModelKind::ha, ModelKind::mlr, ModelKind::arima, ModelKind::mlp, ModelKind::gru,
                       ModelKind::tgcn})
    CHECK(parse_model_kind(to_string(k)) == k);
  CHECK(parse_model_kind("tgcn") == ModelKind::tgcn);
  CHECK_THROWS_AS(parse_model_kind("lstm"), ValidationError);
}

TEST_CASE("historical average") {
  CHECK(ha_forecast(Tensor::row({2.0, 4.0, 6.0}), 1).item() == 4.0);
  CHECK(ha_forecast(Tensor(1, 12, 3.25), 2) == Tensor(1, 2, 3.25));

  std::mt19937_64 rng(40);
  const Tensor x = random_tensor(5, 12, rng);
  const Tensor f = ha_forecast(x, 1);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 12; ++c) s += x(r, c);
    CHECK(f(r, 0) == s / 12.0);
  }
  const auto model = Model::create(config(ModelKind::ha, 12, 1), 5);
  CHECK(model->predict(x, 1) == f);
}

TEST_CASE("linear regression toy parameters") {
  auto model = Model::create(config(ModelKind::mlr, 4, 1), 3);
  auto& p = model->parameters();
  std::mt19937_64 rng(41);
  const Tensor x = random_tensor(6, 4, rng);

  p[0].fill(0.0);
  p[0](3, 0) = 1.0;
  p[1].fill(0.0);
  const Tensor last = model->predict(x, 2);
  for (std::size_t r = 0; r < 6; ++r) CHECK(last(r, 0) == x(r, 3));

  p[0].fill(0.0);
  p[1].fill(7.0);
  CHECK(model->predict(x, 2) == Tensor(6, 1, 7.0));
}

TEST_CASE("MLR MSE gradient agrees with finite differences") {
  std::mt19937_64 rng(42);
  auto model = Model::create(config(ModelKind::mlr, 6, 1), 4);
  CHECK(worst_gradient_error(*model, 2, rng) <= 1e-5);
}

TEST_CASE("parameter counts") {
  // K*H + H + H*M + M
  CHECK(Model::create(config(ModelKind::mlp, 12, 1, 300), 10)->parameter_count() == 12 * 300 + 300 + 300 * 1 + 1);
  CHECK(Model::create(config(ModelKind::mlp, 12, 1), 10)->parameter_count() == 4201);
  CHECK(Model::create(config(ModelKind::mlr, 12, 3), 10)->parameter_count() == 12 * 3 + 3);
  const std::size_t h = 64;
  CHECK(Model::create(config(ModelKind::gru, 12, 1), 10)->parameter_count() == 3 * (h + h * h + h) + h + 1);
  const Tensor a = graph::propagation_matrix(graph::binary_adjacency(10, {{0, 1}}));
  const std::size_t f = 8;
  CHECK(Model::create(config(ModelKind::tgcn, 12, 1), 10, &a)->parameter_count() ==
        f + 3 * (f * h + h * h + h) + h + 1);
}

TEST_CASE("MLP with zero weights outputs its output bias") {
  auto model = Model::create(config(ModelKind::mlp, 6, 1, 8), 4);
  auto& p = model->parameters();
  for (auto& t : p) t.fill(0.0);
  p[3].fill(2.5);
  std::mt19937_64 rng(43);
  CHECK(model->predict(random_tensor(4, 6, rng), 1) == Tensor(4, 1, 2.5));
}

TEST_CASE("forward passes are deterministic") {
  std::mt19937_64 rng(44);
  const Tensor a = graph::propagation_matrix(graph::binary_adjacency(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
  for (const auto kind : {ModelKind::mlr, ModelKind::mlp, ModelKind::gru, ModelKind::tgcn}) {
    const auto model = Model::create(config(kind, 5, 2, 6), 4, &a);
    const Tensor x = random_tensor(8, 5, rng);
    CHECK(model->predict(x, 2) == model->predict(x, 2));

    ForwardGraph f1, f2;
    model->build(f1, 2, true);
    model->build(f2, 2, true);
    std::mt19937_64 r1(5), r2(5);
    diff::Bindings b1, b2;
    model->bind_dropout(f1, r1, b1);
    model->bind_dropout(f2, r2, b2);
    for (std::size_t i = 0; i < f1.dropout_masks.size(); ++i)
      CHECK(b1.at(f1.dropout_masks[i]) == b2.at(f2.dropout_masks[i]));
  }
}

TEST_CASE("MLP gradient check on a 4x6 window with hidden 8") {
  std::mt19937_64 rng(45);
  auto model = Model::create(config(ModelKind::mlp, 6, 1, 8), 4);
  CHECK(worst_gradient_error(*model, 1, rng) <= 1e-4);
  auto multi = Model::create(config(ModelKind::mlp, 6, 3, 8), 4);
  CHECK(worst_gradient_error(*multi, 2, rng) <= 1e-4);
}

TEST_CASE("GRU with zero input and zero biases outputs zero") {
  auto model = Model::create(config(ModelKind::gru, 4, 2, 3), 2);
  for (const char* b : {"bz", "br", "bc", "bo"}) model->parameters()[param_index(*model, b)].fill(0.0);
  const Tensor y = model->predict(Tensor(2, 4, 0.0), 1);
  CHECK(y == Tensor(2, 2, 0.0));
}

TEST_CASE("GRU matches hand-evaluated cell equations on a 2-unit toy") {
  auto model = Model::create(config(ModelKind::gru, 1, 1, 2), 1);
  auto& p = model->parameters();
  const auto set = [&](const char* name, std::vector<double> v) {
    Tensor& t = p[param_index(*model, name)];
    REQUIRE(t.size() == v.size());
    for (std::size_t i = 0; i < v.size(); ++i) t[i] = v[i];
  };
  set("Wz", {0.5, -0.3});
  set("bz", {0.1, 0.2});
  set("Wr", {0.7, 0.4});
  set("br", {-0.1, 0.3});
  set("Wc", {-0.6, 0.9});
  set("bc", {0.05, -0.2});
  set("Uz", {0.2, -0.1, 0.3, 0.4});
  set("Ur", {-0.5, 0.1, 0.2, 0.3});
  set("Uc", {0.6, -0.2, 0.1, 0.5});
  set("Wo", {1.5, -0.8});
  set("bo", {0.25});

  // K = 1 from a zero state: the reset gate has nothing to act on.
  const double x = 0.8;
  double h[2];
  const double wz[] = {0.5, -0.3}, bz[] = {0.1, 0.2}, wc[] = {-0.6, 0.9}, bc[] = {0.05, -0.2};
  for (int u = 0; u < 2; ++u) {
    const double z = sigmoid(x * wz[u] + bz[u]);
    const double c = std::tanh(x * wc[u] + bc[u]);
    h[u] = (1.0 - z) * c;
  }
  const double expected = h[0] * 1.5 + h[1] * -0.8 + 0.25;
  CHECK(model->predict(Tensor::scalar(x), 1).item() == doctest::Approx(expected).epsilon(1e-14));

  // A second step exercises the recurrent weights and the reset gate.
  ModelConfig c2 = model->config();
  c2.k = 2;
  auto two = Model::create(c2, 1);
  two->parameters() = model->parameters();
  const double x2 = -0.4;
  const double uz[2][2] = {{0.2, -0.1}, {0.3, 0.4}}, ur[2][2] = {{-0.5, 0.1}, {0.2, 0.3}},
               uc[2][2] = {{0.6, -0.2}, {0.1, 0.5}};
  const double wr[] = {0.7, 0.4}, br[] = {-0.1, 0.3};
  double r[2], h2[2];
  for (int u = 0; u < 2; ++u) r[u] = sigmoid(x2 * wr[u] + h[0] * ur[0][u] + h[1] * ur[1][u] + br[u]);
  for (int u = 0; u < 2; ++u) {
    const double z = sigmoid(x2 * wz[u] + h[0] * uz[0][u] + h[1] * uz[1][u] + bz[u]);
    const double c = std::tanh(x2 * wc[u] + r[0] * h[0] * uc[0][u] + r[1] * h[1] * uc[1][u] + bc[u]);
    h2[u] = z * h[u] + (1.0 - z) * c;
  }
  const double expected2 = h2[0] * 1.5 + h2[1] * -0.8 + 0.25;
  CHECK(two->predict(Tensor::row({x, x2}), 1).item() == doctest::Approx(expected2).epsilon(1e-14));
}

TEST_CASE("GRU gradient check with hidden 4 and K 5") {
  std::mt19937_64 rng(46);
  auto model = Model::create(config(ModelKind::gru, 5, 1, 4), 3);
  CHECK(worst_gradient_error(*model, 2, rng) <= 1e-4);
  auto multi = Model::create(config(ModelKind::gru, 5, 2, 4), 3);
  CHECK(worst_gradient_error(*multi, 1, rng) <= 1e-4);
}

TEST_CASE("T-GCN with identity propagation and unit Theta equals the GRU") {
  std::mt19937_64 rng(47);
  const Tensor eye = Tensor::identity(3);
  ModelConfig tc = config(ModelKind::tgcn, 6, 2, 5);
  tc.gcn_features = 1;
  auto tgcn = Model::create(tc, 3, &eye);
  auto gru = Model::create(config(ModelKind::gru, 6, 2, 5), 3);
  REQUIRE(tgcn->parameter_names().front() == "Theta");
  tgcn->parameters()[0].fill(1.0);
  for (std::size_t i = 0; i < gru->parameters().size(); ++i) gru->parameters()[i] = tgcn->parameters()[i + 1];
  const Tensor x = random_tensor(6, 6, rng);
  CHECK(tgcn->predict(x, 2) == gru->predict(x, 2));
}

TEST_CASE("connected nodes with identical history forecast alike") {
  const Tensor a = graph::propagation_matrix(graph::binary_adjacency(2, {{0, 1}}));
  auto model = Model::create(config(ModelKind::tgcn, 4, 1, 6), 2, &a);
  const Tensor x = Tensor::from_rows({{0.1, 0.5, -0.2, 0.3}, {0.1, 0.5, -0.2, 0.3}});
  const Tensor y = model->predict(x, 1);
  CHECK(y(0, 0) == y(1, 0));
}

TEST_CASE("T-GCN gradient check on a 4-node ring") {
  std::mt19937_64 rng(48);
  const Tensor a = graph::propagation_matrix(graph::binary_adjacency(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}));
  ModelConfig c = config(ModelKind::tgcn, 4, 1, 4);
  c.gcn_features = 3;
  auto model = Model::create(c, 4, &a);
  CHECK(worst_gradient_error(*model, 2, rng) <= 1e-4);
}

TEST_CASE("permuting nodes permutes forecasts") {
  std::mt19937_64 rng(49);
  const std::size_t n = 5, batch = 2, k = 6;
  const std::vector<std::pair<std::size_t, std::size_t>> edges = {{0, 1}, {1, 2}, {2, 4}, {3, 4}};
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  std::vector<std::pair<std::size_t, std::size_t>> moved;
  for (const auto& [i, j] : edges) moved.emplace_back(perm[i], perm[j]);
  const Tensor a = graph::propagation_matrix(graph::binary_adjacency(n, edges));
  const Tensor pa = graph::propagation_matrix(graph::binary_adjacency(n, moved));

  Tensor series = random_tensor(n, 200, rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 1; t < 200; ++t) series(i, t) += 0.6 * series(i, t - 1);
  const Tensor x = random_tensor(batch * n, k, rng);

  for (const auto kind :
       {ModelKind::ha, ModelKind::mlr, ModelKind::arima, ModelKind::mlp, ModelKind::gru, ModelKind::tgcn}) {
    CAPTURE(to_string(kind));
    ModelConfig c = config(kind, k, 2, 5);
    auto m1 = Model::create(c, n, &a);
    auto m2 = Model::create(c, n, &pa);
    m1->fit(series);
    m2->fit(permute_rows(series, perm, 1));
    const Tensor y1 = m1->predict(x, batch);
    const Tensor y2 = m2->predict(permute_rows(x, perm, batch), batch);
    const Tensor moved_y1 = permute_rows(y1, perm, batch);
    if (kind == ModelKind::tgcn) {
      // The graph product sums neighbours in a different order.
      CHECK(diff::max_relative_error(moved_y1, y2, 1e-6) <= 1e-12);
    } else {
      CHECK(moved_y1 == y2);
    }
  }
}

TEST_CASE("ARIMA special orders") {
  std::mt19937_64 rng(50);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> walk(300);
  for (std::size_t t = 1; t < walk.size(); ++t) walk[t] = walk[t - 1] + g(rng);

  const auto rw = arima_fit_series(walk, 0, 1, 0);
  const auto f = arima_forecast_series(rw, walk, 1, 3);
  for (const double v : f) CHECK(v == walk.back());

  const auto mean_fit = arima_fit_series(walk, 0, 0, 0);
  const double mean = std::accumulate(walk.begin(), walk.end(), 0.0) / static_cast<double>(walk.size());
  const auto fm = arima_forecast_series(mean_fit, walk, 0, 2);
  for (const double v : fm) CHECK(v == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("ARIMA recovers an AR(1) coefficient") {
  for (const std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> s(2000);
    for (std::size_t t = 1; t < s.size(); ++t) s[t] = 0.8 * s[t - 1] + g(rng);
    const auto fit = arima_fit_series(s, 1, 0, 0);
    REQUIRE(fit.phi.size() == 1);
    CHECK(std::fabs(fit.phi[0] - 0.8) <= 0.05);
    CHECK_FALSE(fit.fallback);
  }
}

TEST_CASE("ARIMA(1,0,1) fits an ARMA series") {
  std::mt19937_64 rng(51);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> s(3000);
  double prev_e = 0.0;
  for (std::size_t t = 1; t < s.size(); ++t) {
    const double e = g(rng);
    s[t] = 0.6 * s[t - 1] + e + 0.3 * prev_e;
    prev_e = e;
  }
  const auto fit = arima_fit_series(s, 1, 0, 1);
  CHECK(std::fabs(fit.phi[0] - 0.6) <= 0.08);
  CHECK(std::fabs(fit.theta[0] - 0.3) <= 0.08);
}

TEST_CASE("checkpoint round trip") {
  std::mt19937_64 rng(52);
  const Tensor a = graph::propagation_matrix(graph::binary_adjacency(3, {{0, 1}}));
  for (const auto kind : {ModelKind::mlr, ModelKind::mlp, ModelKind::gru, ModelKind::tgcn}) {
    const auto model = Model::create(config(kind, 5, 2, 4), 3, &a);
    for (auto& p : model->parameters())
      for (auto& v : p.values()) v = std::normal_distribution<double>(0.0, 1.0)(rng) / 3.0;
    std::stringstream buf;
    save_checkpoint(buf, *model);
    const auto back = load_checkpoint(buf, 3, &a);
    CHECK(back->config().kind == kind);
    CHECK(back->parameters() == model->parameters());
    const Tensor x = random_tensor(6, 5, rng);
    CHECK(back->predict(x, 2) == model->predict(x, 2));
  }
  std::istringstream junk("not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(junk, 3), ValidationError);
}

TEST_CASE("model config validation and JSON") {
  ModelConfig c = config(ModelKind::gru, 12, 3, 32);
  c.dropout = 0.2;
  const ModelConfig back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  ModelConfig bad = c;
  bad.k = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(Model::create(config(ModelKind::tgcn, 4, 1), 3), ValidationError);
}
