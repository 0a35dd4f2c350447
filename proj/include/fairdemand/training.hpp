#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fairdemand/dataset.hpp"
#include "fairdemand/fairness.hpp"
#include "fairdemand/models.hpp"

namespace fairdemand::training {

using diff::Tensor;
using fairness::Regularizer;

struct LossConfig {
  double lambda = 0.0;
  Regularizer mode = Regularizer::multi;
  std::size_t attribute = 0;  // for single/em/rfg/ifg

  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 300;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  double clip_norm = 5.0;

  void validate() const;
};

nlohmann::json to_json(const LossConfig& c);
nlohmann::json to_json(const TrainConfig& c);
LossConfig loss_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Windows of one split. x and y_norm are on the normalized scale, y is raw.
struct SampleSet {
  std::vector<Tensor> x;       // N x K
  std::vector<Tensor> y_norm;  // N x M
  std::vector<Tensor> y;       // N x M

  std::size_t size() const { return x.size(); }
};

struct ExperimentData {
  std::size_t nodes = 0;
  std::size_t k = 0;
  std::size_t m = 0;
  data::Normalizer normalizer;
  Tensor train_series;  // normalized N x T_train
  SampleSet train, val, test;
  data::ProtectedAttributeTable attributes;
  data::GroupLabeling labels;
  fairness::AttributeCorrelation correlation;
  fairness::FairnessData fairness;
};

// Splits chronologically, fits the normalizer on the training split and
// windows each split separately so no sample straddles a boundary.
ExperimentData prepare_experiment(const data::DemandTensor& demand,
                                  const data::ProtectedAttributeTable& attributes, std::size_t k,
                                  std::size_t m, const data::SplitSpec& split = {},
                                  data::NormalizerMode mode = data::NormalizerMode::per_node);

// The combined loss (1 - lambda) MSE + lambda * term for one batch size.
// MSE is on the normalized scale; the fairness term sees denormalized
// predictions.
class LossGraph {
 public:
  LossGraph(const models::Model& model, const ExperimentData& data, const LossConfig& loss,
            std::size_t batch, bool train);

  // Binds samples idx[first, first + batch) and the model's parameters.
  void bind(const models::Model& model, const SampleSet& set, std::span<const std::size_t> idx,
            diff::Bindings& b) const;

  models::ForwardGraph& forward() { return fg_; }
  diff::NodeId mse() const { return mse_; }
  diff::NodeId fairness_term() const { return fair_; }
  std::size_t batch() const { return fg_.batch; }

 private:
  models::ForwardGraph fg_;
  fairness::TermBuilder term_;
  std::vector<diff::NodeId> targets_;  // (B*N) x 1 per step, normalized
  diff::NodeId mse_ = diff::kNoNode;
  diff::NodeId fair_ = diff::kNoNode;
  std::size_t nodes_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_fairness = 0.0;
  double wall_seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based, 0 when nothing was trained
  bool stopped_early = false;
};

// Wall time is left out so the file is identical across reruns.
void write_history_csv(std::ostream& out, const TrainHistory& h);

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  // Returns true when training should stop after this epoch.
  bool update(std::size_t epoch, double val_loss);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t since_ = 0;
  bool improved_ = false;
};

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<Tensor>& params, const std::vector<Tensor>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Scales the gradients so their joint L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_gradients(std::vector<Tensor>& grads, double max_norm);

// Optional per-epoch parameter snapshots, for trajectory comparisons.
using EpochCallback = std::function<void(std::size_t epoch, const models::Model& model)>;

// Fits classical kinds; trains neural kinds with Adam and early stopping
// and leaves the best-validation parameters in the model.
TrainHistory train(models::Model& model, const ExperimentData& data, const LossConfig& loss,
                   const TrainConfig& cfg, const EpochCallback& on_epoch = {});

// Mean combined loss and fairness term over a split, evaluation mode.
std::pair<double, double> evaluate_loss(const models::Model& model, const ExperimentData& data,
                                        const LossConfig& loss, const SampleSet& set,
                                        std::size_t batch_size = 64);

// Denormalized forecasts, one N x M matrix per sample.
std::vector<Tensor> predict(const models::Model& model, const ExperimentData& data,
                            const SampleSet& set, std::size_t batch_size = 64);

fairness::FairnessReport evaluate(const models::Model& model, const ExperimentData& data,
                                  double lambda, const std::string& name = {},
                                  fairness::Pooling pooling = fairness::Pooling::per_step);

// ---------------------------------------------------------------------------

struct GridSpec {
  std::vector<double> lambdas{0.0, 0.025, 0.05, 0.075, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<std::size_t> hidden;       // empty: the model config's own
  std::vector<std::size_t> batch_sizes;  // empty: the train config's own
  double tau = 0.10;
  fairness::Pooling pooling = fairness::Pooling::per_step;

  void validate() const;
};

struct GridEntry {
  models::ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  fairness::FairnessReport report;
  TrainHistory history;
};

struct GridResult {
  std::vector<GridEntry> entries;   // in enumeration order
  std::vector<std::size_t> ranking;  // best first
  std::size_t best = 0;
  std::size_t baseline = 0;  // lambda = 0 entry with the lowest RMSE
  bool constraint_unmet = false;
};

// Enumerates lambda x hidden x batch, trains every entry (in parallel when
// OpenMP is available) and ranks them: entries with RMSE within (1 + tau)
// of the baseline first, each group ordered by sum |Corr| then RMSE.
GridResult grid_search(const models::ModelConfig& model, const ExperimentData& data,
                       const LossConfig& loss, const TrainConfig& train, const GridSpec& grid,
                       const Tensor* propagation = nullptr);

// Ranks already-evaluated entries; exposed for testing the selection rule.
void rank_entries(GridResult& result, double tau);

void write_grid_csv(std::ostream& out, const GridResult& result);

}  // namespace fairdemand::training
