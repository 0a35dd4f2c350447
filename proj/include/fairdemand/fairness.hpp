#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairdemand/dataset.hpp"
#include "fairdemand/expr_graph.hpp"

namespace fairdemand::fairness {

using diff::ExprGraph;
using diff::NodeId;
using diff::Tensor;

// Pearson denominator guard.
inline const double kPearsonEps = std::exp(-20.0);
// Truths below one trip are excluded from APE.
inline constexpr double kDemandFloor = 1.0;
inline constexpr double kOmegaRidge = 1e-8;

struct AccuracyVector {
  std::vector<double> e;
  std::vector<std::uint8_t> mask;  // 1 = usable

  std::size_t size() const { return e.size(); }
  std::size_t unmasked() const;
};

AccuracyVector ape(std::span<const double> truth, std::span<const double> pred);

// Mean APE of the disadvantaged group minus the advantaged group, in
// percent. Empty when the attribute is degenerate or a group has no
// unmasked node.
std::optional<double> pag(const AccuracyVector& e, const data::AttributeLabels& labels);

// Pearson correlation over the unmasked entries, with kPearsonEps added to
// the denominator. Throws ValidationError with fewer than 2 usable entries.
double pearson(const AccuracyVector& e, std::span<const double> z);
double pearson(std::span<const double> a, std::span<const double> b);

struct AttributeCorrelation {
  Tensor omega;      // Q x Q
  Tensor omega_inv;  // (omega + ridge I)^-1
  double ridge = kOmegaRidge;
  double condition = 1.0;  // of omega + ridge I
};

// z is N x Q. Throws RuntimeFailure when omega + ridge I is numerically
// singular.
AttributeCorrelation attribute_corr_matrix(const Tensor& z, double ridge = kOmegaRidge);

// Per-attribute correlations c_j = r(e, z_j).
std::vector<double> correlation_vector(const AccuracyVector& e, const Tensor& z);

// sqrt(c' omega_inv c + kSqrtGuard)
double multiple_correlation(const AccuracyVector& e, const Tensor& z, const Tensor& omega_inv);

// ---------------------------------------------------------------------------
// Differentiable terms used inside the training loss.

enum class Regularizer : std::uint8_t { none, multi, single, em, rfg, ifg };
std::string to_string(Regularizer r);
Regularizer parse_regularizer(std::string_view s);

// Everything the terms need that is fixed for a dataset.
struct FairnessData {
  Tensor z;          // N x Q
  Tensor omega_inv;  // Q x Q
  data::GroupLabeling labels;
  std::vector<double> node_mean;  // training-split mean demand per node
};

// Builds one fairness term per forecast step into a graph. Each call to
// build() allocates a slot of per-batch inputs; bind() fills that slot
// from the batch's ground truth.
class TermBuilder {
 public:
  // `attribute` selects the column for single/em/rfg/ifg; ignored for multi.
  TermBuilder(const FairnessData& data, Regularizer kind, std::size_t attribute = 0);

  // pred: B x N denormalized predictions. Returns a 1x1 node holding the
  // term averaged over the batch.
  NodeId build(ExprGraph& g, NodeId pred, std::size_t batch);
  // truth: B x N for the slot's forecast step.
  void bind(std::size_t slot, const Tensor& truth, diff::Bindings& bindings) const;
  std::size_t slots() const { return slots_.size(); }
  Regularizer kind() const { return kind_; }

 private:
  struct Slot {
    std::size_t batch = 0;
    NodeId y = diff::kNoNode;
    NodeId inv_y = diff::kNoNode;
    NodeId mask = diff::kNoNode;
    NodeId inv_count = diff::kNoNode;
    NodeId weight = diff::kNoNode;  // 1 x B
    std::vector<NodeId> zc;         // B x N each
    std::vector<NodeId> znorm;      // B x 1 each
  };

  NodeId build_correlation(ExprGraph& g, NodeId pred, Slot& slot);
  NodeId build_group_gap(ExprGraph& g, NodeId pred, std::size_t batch);

  const FairnessData* data_;
  Regularizer kind_;
  std::vector<std::size_t> columns_;
  Tensor omega_inv_;
  std::vector<Slot> slots_;
};

// ---------------------------------------------------------------------------
// Test-split report.

enum class Pooling : std::uint8_t { per_step, pooled };

struct FairnessReport {
  std::string model;
  double lambda = 0.0;
  double mae = 0.0;
  double rmse = 0.0;
  std::vector<std::string> attributes;
  std::vector<double> corr;
  std::vector<std::optional<double>> pag;

  double mean_abs_corr() const;
  double sum_abs_corr() const;
  // Mean |PAG| over attributes where it is available.
  double mean_abs_pag() const;
};

// truth/pred: one N x S matrix per sample (S forecast steps). Each (sample,
// step) column is one time step for the per-step pooling.
FairnessReport make_report(std::string model, double lambda, std::span<const Tensor> truth,
                           std::span<const Tensor> pred, const data::ProtectedAttributeTable& table,
                           const data::GroupLabeling& labels, Pooling pooling = Pooling::per_step);

void write_report_csv(std::ostream& out, std::span<const FairnessReport> rows);
void write_report_markdown(std::ostream& out, std::span<const FairnessReport> rows);

}  // namespace fairdemand::fairness
