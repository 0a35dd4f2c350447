#include "fairdemand/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"

namespace fairdemand::training {

using diff::NodeId;

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ValidationError("lambda must lie in [0,1], got " + csv::format_exact(lambda));
  }
  if (mode == Regularizer::none && lambda != 0.0) {
    throw ValidationError("fairness mode 'none' requires lambda = 0");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
  if (batch_size == 0) throw ValidationError("batch size must be positive");
  if (max_epochs == 0) throw ValidationError("max epochs must be positive");
  if (patience == 0) throw ValidationError("patience must be positive");
  if (!(clip_norm > 0.0)) throw ValidationError("clip norm must be positive");
}

nlohmann::json to_json(const LossConfig& c) {
  return {{"lambda", c.lambda}, {"mode", fairness::to_string(c.mode)}, {"attribute", c.attribute}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},       {"patience", c.patience},
          {"seed", c.seed},                   {"clip_norm", c.clip_norm}};
}

LossConfig loss_config_from_json(const nlohmann::json& j) {
  LossConfig c;
  try {
    c.lambda = j.value("lambda", c.lambda);
    if (j.contains("mode")) c.mode = fairness::parse_regularizer(j.at("mode").get<std::string>());
    c.attribute = j.value("attribute", c.attribute);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("loss config: ") + e.what());
  }
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

namespace {

SampleSet window_split(const Tensor& raw, const Tensor& norm, std::size_t k, std::size_t m) {
  const auto wr = data::make_windows(raw, k, m);
  const auto wn = data::make_windows(norm, k, m);
  SampleSet s;
  for (std::size_t i = 0; i < wr.samples.size(); ++i) {
    s.x.push_back(wn.samples[i].x);
    s.y_norm.push_back(wn.samples[i].y);
    s.y.push_back(wr.samples[i].y);
  }
  return s;
}

}  // namespace

ExperimentData prepare_experiment(const data::DemandTensor& demand,
                                  const data::ProtectedAttributeTable& attributes, std::size_t k,
                                  std::size_t m, const data::SplitSpec& split,
                                  data::NormalizerMode mode) {
  if (demand.node_ids() != attributes.node_ids) {
    throw ValidationError("demand tensor and attribute table disagree on node order");
  }
  attributes.validate();
  const data::Splits parts = data::chronological_split(demand, split);
  ExperimentData d;
  d.nodes = demand.nodes();
  d.k = k;
  d.m = m;
  const Tensor train_raw = parts.train.as_matrix();
  d.normalizer = data::Normalizer::fit(train_raw, mode);
  d.train_series = d.normalizer.apply(train_raw);
  d.train = window_split(train_raw, d.train_series, k, m);
  const Tensor val_raw = parts.val.as_matrix();
  d.val = window_split(val_raw, d.normalizer.apply(val_raw), k, m);
  const Tensor test_raw = parts.test.as_matrix();
  d.test = window_split(test_raw, d.normalizer.apply(test_raw), k, m);
  d.attributes = attributes;
  d.labels = data::label_groups(attributes);
  d.correlation = fairness::attribute_corr_matrix(attributes.z);
  d.fairness.z = attributes.z;
  d.fairness.omega_inv = d.correlation.omega_inv;
  d.fairness.labels = d.labels;
  d.fairness.node_mean.resize(d.nodes);
  for (std::size_t i = 0; i < d.nodes; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < train_raw.cols(); ++t) s += train_raw(i, t);
    d.fairness.node_mean[i] = s / static_cast<double>(train_raw.cols());
  }
  return d;
}

// ---------------------------------------------------------------------------

LossGraph::LossGraph(const models::Model& model, const ExperimentData& data,
                     const LossConfig& loss, std::size_t batch, bool train)
    : term_(data.fairness, loss.mode, loss.attribute), nodes_(data.nodes) {
  loss.validate();
  model.build(fg_, batch, train);
  auto& g = fg_.graph;
  const std::size_t rows = batch * nodes_;
  const std::size_t steps = fg_.outputs.size();
  const double inv_steps = 1.0 / static_cast<double>(steps);

  Tensor mean_row(1, nodes_), std_row(1, nodes_);
  for (std::size_t i = 0; i < nodes_; ++i) {
    mean_row[i] = data.normalizer.mean()[i];
    std_row[i] = data.normalizer.std()[i];
  }
  const diff::Shape bn{batch, nodes_};
  const NodeId mean_b = g.broadcast(g.constant(std::move(mean_row)), bn);
  const NodeId std_b = g.broadcast(g.constant(std::move(std_row)), bn);

  NodeId mse_sum = diff::kNoNode;
  NodeId fair_sum = diff::kNoNode;
  for (std::size_t s = 0; s < steps; ++s) {
    const NodeId target = g.input({rows, 1}, "target");
    targets_.push_back(target);
    const NodeId step_mse = g.mean(g.square(g.sub(fg_.outputs[s], target)));
    mse_sum = mse_sum == diff::kNoNode ? step_mse : g.add(mse_sum, step_mse);

    const NodeId pred = g.add(g.mul(g.reshape(fg_.outputs[s], bn), std_b), mean_b);
    const NodeId term = term_.build(g, pred, batch);
    fair_sum = fair_sum == diff::kNoNode ? term : g.add(fair_sum, term);
  }
  mse_ = steps == 1 ? mse_sum : g.scale(mse_sum, inv_steps);
  fair_ = steps == 1 ? fair_sum : g.scale(fair_sum, inv_steps);
  const NodeId total = g.add(g.scale(mse_, 1.0 - loss.lambda), g.scale(fair_, loss.lambda));
  g.set_output(total);
}

void LossGraph::bind(const models::Model& model, const SampleSet& set,
                     std::span<const std::size_t> idx, diff::Bindings& b) const {
  const std::size_t batch = fg_.batch;
  if (idx.size() != batch) throw ValidationError("loss graph: batch size mismatch");
  const std::size_t k = set.x.front().cols();
  Tensor x(batch * nodes_, k);
  for (std::size_t s = 0; s < batch; ++s) {
    const Tensor& xs = set.x[idx[s]];
    std::copy(xs.values().begin(), xs.values().end(), x.values().begin() + static_cast<std::ptrdiff_t>(s * nodes_ * k));
  }
  model.bind(fg_, x, b);
  for (std::size_t step = 0; step < targets_.size(); ++step) {
    Tensor target(batch * nodes_, 1);
    Tensor truth(batch, nodes_);
    for (std::size_t s = 0; s < batch; ++s) {
      for (std::size_t i = 0; i < nodes_; ++i) {
        target[s * nodes_ + i] = set.y_norm[idx[s]](i, step);
        truth(s, i) = set.y[idx[s]](i, step);
      }
    }
    b[targets_[step]] = std::move(target);
    term_.bind(step, truth, b);
  }
}

// ---------------------------------------------------------------------------

void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "epoch,train_loss,val_loss,val_fairness,best\n";
  for (const auto& e : h.epochs) {
    out << e.epoch << ',' << csv::format_exact(e.train_loss) << ','
        << csv::format_exact(e.val_loss) << ',' << csv::format_exact(e.val_fairness) << ','
        << (e.epoch == h.best_epoch ? 1 : 0) << '\n';
  }
}

bool EarlyStopping::update(std::size_t epoch, double val_loss) {
  improved_ = val_loss < best_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    since_ = 0;
    return false;
  }
  return ++since_ >= patience_;
}

void Adam::step(std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].values();
    const auto g = grads[k].values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double clip_gradients(std::vector<Tensor>& grads, double max_norm) {
  double ss = 0.0;
  for (const auto& g : grads)
    for (const double v : g.values()) ss += v * v;
  const double norm = std::sqrt(ss);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& g : grads)
      for (auto& v : g.values()) v *= f;
  }
  return norm;
}

namespace {

using GraphCache = std::map<std::size_t, std::unique_ptr<LossGraph>>;

LossGraph& cached(GraphCache& cache, const models::Model& model, const ExperimentData& data,
                  const LossConfig& loss, std::size_t batch, bool train) {
  auto& slot = cache[batch];
  if (!slot) slot = std::make_unique<LossGraph>(model, data, loss, batch, train);
  return *slot;
}

std::pair<double, double> loss_over(const models::Model& model, const ExperimentData& data,
                                    const LossConfig& loss, const SampleSet& set,
                                    std::size_t batch_size, GraphCache& cache) {
  if (set.size() == 0) throw ValidationError("cannot evaluate an empty split");
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0.0, fair = 0.0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    const std::size_t bs = std::min(batch_size, idx.size() - start);
    LossGraph& lg = cached(cache, model, data, loss, bs, false);
    diff::Bindings b;
    lg.bind(model, set, std::span(idx).subspan(start, bs), b);
    const double v = diff::evaluate(lg.forward().graph, b);
    total += v * static_cast<double>(bs);
    fair += lg.forward().graph.value(lg.fairness_term())[0] * static_cast<double>(bs);
  }
  const double n = static_cast<double>(set.size());
  return {total / n, fair / n};
}

}  // namespace

std::pair<double, double> evaluate_loss(const models::Model& model, const ExperimentData& data,
                                        const LossConfig& loss, const SampleSet& set,
                                        std::size_t batch_size) {
  GraphCache cache;
  return loss_over(model, data, loss, set, batch_size, cache);
}

TrainHistory train(models::Model& model, const ExperimentData& data, const LossConfig& loss,
                   const TrainConfig& cfg, const EpochCallback& on_epoch) {
  loss.validate();
  cfg.validate();
  TrainHistory history;
  if (!model.trainable()) {
    model.fit(data.train_series);
    return history;
  }
  if (data.train.size() == 0 || data.val.size() == 0) {
    throw ValidationError("training needs non-empty train and validation windows");
  }
  std::mt19937_64 rng(cfg.seed);
  GraphCache train_graphs, eval_graphs;
  Adam adam(cfg.learning_rate);
  EarlyStopping stopper(cfg.patience);
  std::vector<Tensor> best = model.parameters();
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Tensor> grads(model.parameters().size());

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t batch_id = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_id) {
      const std::size_t bs = std::min(cfg.batch_size, order.size() - start);
      LossGraph& lg = cached(train_graphs, model, data, loss, bs, true);
      auto& fg = lg.forward();
      diff::Bindings b;
      lg.bind(model, data.train, std::span(order).subspan(start, bs), b);
      model.bind_dropout(fg, rng, b);
      diff::GradientSet gs;
      try {
        gs = diff::gradients(fg.graph, b, fg.params);
      } catch (const NonFiniteError& e) {
        throw RuntimeFailure("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_id) + " (" + e.what() + ")");
      }
      total += fg.graph.value(fg.graph.output())[0] * static_cast<double>(bs);
      for (std::size_t k = 0; k < fg.params.size(); ++k) grads[k] = std::move(gs.at(fg.params[k]));
      clip_gradients(grads, cfg.clip_norm);
      adam.step(model.parameters(), grads);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(order.size());
    try {
      std::tie(rec.val_loss, rec.val_fairness) =
          loss_over(model, data, loss, data.val, 64, eval_graphs);
    } catch (const NonFiniteError& e) {
      throw RuntimeFailure("non-finite validation loss in epoch " + std::to_string(epoch) + " (" +
                           e.what() + ")");
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(epoch, model);
    const bool stop = stopper.update(epoch, rec.val_loss);
    if (stopper.improved()) best = model.parameters();
    if (stop) {
      history.stopped_early = true;
      break;
    }
  }
  model.parameters() = std::move(best);
  history.best_epoch = stopper.best_epoch();
  return history;
}

std::vector<Tensor> predict(const models::Model& model, const ExperimentData& data,
                            const SampleSet& set, std::size_t batch_size) {
  const std::size_t n = data.nodes;
  std::vector<Tensor> out;
  out.reserve(set.size());
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t bs = std::min(batch_size, set.size() - start);
    const std::size_t k = set.x[start].cols();
    Tensor x(bs * n, k);
    for (std::size_t s = 0; s < bs; ++s) {
      const Tensor& xs = set.x[start + s];
      std::copy(xs.values().begin(), xs.values().end(), x.values().begin() + static_cast<std::ptrdiff_t>(s * n * k));
    }
    const Tensor y = model.predict(x, bs);
    for (std::size_t s = 0; s < bs; ++s) {
      Tensor ys(n, y.cols());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < y.cols(); ++c) ys(i, c) = y(s * n + i, c);
      out.push_back(data.normalizer.invert(ys));
    }
  }
  return out;
}

fairness::FairnessReport evaluate(const models::Model& model, const ExperimentData& data,
                                  double lambda, const std::string& name,
                                  fairness::Pooling pooling) {
  const auto pred = predict(model, data, data.test);
  return fairness::make_report(name.empty() ? models::to_string(model.config().kind) : name,
                               lambda, data.test.y, pred, data.attributes, data.labels, pooling);
}

// ---------------------------------------------------------------------------

void GridSpec::validate() const {
  if (lambdas.empty()) throw ValidationError("lambda grid is empty");
  if (std::find(lambdas.begin(), lambdas.end(), 0.0) == lambdas.end()) {
    throw ValidationError("lambda grid must include 0");
  }
  for (const double l : lambdas) {
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("lambda grid values must lie in [0,1]");
  }
  if (!(tau >= 0.0)) throw ValidationError("tau must be non-negative");
}

void rank_entries(GridResult& result, double tau) {
  auto& e = result.entries;
  if (e.empty()) throw ValidationError("grid search produced no entries");
  std::optional<std::size_t> base;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (e[i].loss.lambda == 0.0 && (!base || e[i].report.rmse < e[*base].report.rmse)) base = i;
  }
  if (!base) throw ValidationError("grid search has no lambda = 0 entry");
  result.baseline = *base;
  const double limit = (1.0 + tau) * e[*base].report.rmse;
  std::vector<std::size_t> feasible, rest;
  for (std::size_t i = 0; i < e.size(); ++i) (e[i].report.rmse <= limit ? feasible : rest).push_back(i);
  const auto better = [&](std::size_t a, std::size_t b) {
    const double fa = e[a].report.sum_abs_corr();
    const double fb = e[b].report.sum_abs_corr();
    if (fa != fb) return fa < fb;
    if (e[a].report.rmse != e[b].report.rmse) return e[a].report.rmse < e[b].report.rmse;
    return a < b;
  };
  std::sort(feasible.begin(), feasible.end(), better);
  std::sort(rest.begin(), rest.end(), better);
  result.constraint_unmet = feasible.empty();
  result.ranking = feasible;
  result.ranking.insert(result.ranking.end(), rest.begin(), rest.end());
  result.best = result.ranking.front();
}

GridResult grid_search(const models::ModelConfig& model, const ExperimentData& data,
                       const LossConfig& loss, const TrainConfig& train_cfg, const GridSpec& grid,
                       const Tensor* propagation) {
  grid.validate();
  train_cfg.validate();
  const std::vector<double> lambdas = model.trainable() ? grid.lambdas : std::vector<double>{0.0};
  const std::vector<std::size_t> hidden =
      grid.hidden.empty() ? std::vector<std::size_t>{model.hidden_size()} : grid.hidden;
  const std::vector<std::size_t> batches = grid.batch_sizes.empty()
                                               ? std::vector<std::size_t>{train_cfg.batch_size}
                                               : grid.batch_sizes;
  GridResult result;
  for (const auto h : hidden) {
    for (const auto bs : batches) {
      for (const double l : lambdas) {
        GridEntry entry;
        entry.model = model;
        entry.model.hidden = h;
        entry.model.seed = train_cfg.seed;
        entry.loss = loss;
        entry.loss.lambda = l;
        if (l == 0.0 && loss.mode == Regularizer::none) entry.loss.mode = Regularizer::none;
        entry.loss.validate();
        entry.train = train_cfg;
        entry.train.batch_size = bs;
        result.entries.push_back(std::move(entry));
      }
    }
  }

  std::vector<std::exception_ptr> errors(result.entries.size());
  const auto count = static_cast<std::int64_t>(result.entries.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    auto& entry = result.entries[static_cast<std::size_t>(i)];
    try {
      auto m = models::Model::create(entry.model, data.nodes, propagation);
      entry.history = train(*m, data, entry.loss, entry.train);
      entry.report = evaluate(*m, data, entry.loss.lambda, models::to_string(entry.model.kind),
                              grid.pooling);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  rank_entries(result, grid.tau);
  return result;
}

void write_grid_csv(std::ostream& out, const GridResult& result) {
  out << "index,model,hidden,batch_size,lambda,mode,mae,rmse,sum_abs_corr";
  if (!result.entries.empty()) {
    for (const auto& a : result.entries.front().report.attributes) out << ",corr_" << a << ",pag_" << a;
  }
  out << ",best_epoch,rank,selected\n";
  std::vector<std::size_t> rank_of(result.entries.size());
  for (std::size_t r = 0; r < result.ranking.size(); ++r) rank_of[result.ranking[r]] = r + 1;
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    out << i << ',' << models::to_string(e.model.kind) << ',' << e.model.hidden_size() << ','
        << e.train.batch_size << ',' << csv::format_exact(e.loss.lambda) << ','
        << fairness::to_string(e.loss.mode) << ',' << csv::format_exact(e.report.mae) << ','
        << csv::format_exact(e.report.rmse) << ',' << csv::format_exact(e.report.sum_abs_corr());
    for (std::size_t j = 0; j < e.report.corr.size(); ++j) {
      out << ',' << csv::format_exact(e.report.corr[j]) << ','
          << (e.report.pag[j] ? csv::format_exact(*e.report.pag[j]) : std::string("NA"));
    }
    out << ',' << e.history.best_epoch << ',' << rank_of[i] << ',' << (i == result.best ? 1 : 0)
        << '\n';
  }
}

}  // namespace fairdemand::training
