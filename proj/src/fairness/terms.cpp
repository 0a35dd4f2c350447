#include <algorithm>
#include <cmath>

#include "fairdemand/error.hpp"
#include "fairdemand/fairness.hpp"

namespace fairdemand::fairness {

using diff::Axis;
using diff::Shape;

std::string to_string(Regularizer r) {
  switch (r) {
    case Regularizer::none: return "none";
    case Regularizer::multi: return "multi";
    case Regularizer::single: return "single";
    case Regularizer::em: return "em";
    case Regularizer::rfg: return "rfg";
    case Regularizer::ifg: return "ifg";
  }
  return "none";
}

Regularizer parse_regularizer(std::string_view s) {
  if (s == "none") return Regularizer::none;
  if (s == "multi") return Regularizer::multi;
  if (s == "single") return Regularizer::single;
  if (s == "em") return Regularizer::em;
  if (s == "rfg") return Regularizer::rfg;
  if (s == "ifg") return Regularizer::ifg;
  throw ValidationError("unknown fairness mode '" + std::string(s) + "'");
}

TermBuilder::TermBuilder(const FairnessData& data, Regularizer kind, std::size_t attribute)
    : data_(&data), kind_(kind) {
  const std::size_t q = data.z.cols();
  if (kind == Regularizer::multi) {
    for (std::size_t j = 0; j < q; ++j) columns_.push_back(j);
    omega_inv_ = data.omega_inv;
    if (omega_inv_.rows() != q || omega_inv_.cols() != q) {
      throw ValidationError("fairness term: omega_inv does not match attribute count");
    }
    return;
  }
  if (kind == Regularizer::none) return;
  if (attribute >= q) throw ValidationError("fairness term: attribute index out of range");
  columns_.push_back(attribute);
  // A single attribute has omega = [1].
  omega_inv_ = Tensor::scalar(1.0 / (1.0 + kOmegaRidge));
  if (kind != Regularizer::single) {
    const auto& al = data.labels.attributes.at(attribute);
    if (al.degenerate || al.count(data::Group::advantaged) == 0 ||
        al.count(data::Group::disadvantaged) == 0) {
      throw ValidationError("fairness term: attribute has an empty group");
    }
  }
}

NodeId TermBuilder::build(ExprGraph& g, NodeId pred, std::size_t batch) {
  const Shape s = g.shape(pred);
  if (s.rows != batch || s.cols != data_->z.rows()) {
    throw ValidationError("fairness term: predictions must be batch x nodes");
  }
  Slot& slot = slots_.emplace_back();
  slot.batch = batch;
  switch (kind_) {
    case Regularizer::none: return g.constant(0.0);
    case Regularizer::multi:
    case Regularizer::single: return build_correlation(g, pred, slot);
    default: return build_group_gap(g, pred, batch);
  }
}

NodeId TermBuilder::build_correlation(ExprGraph& g, NodeId pred, Slot& slot) {
  const std::size_t b = slot.batch;
  const std::size_t n = data_->z.rows();
  const std::size_t q = columns_.size();
  const Shape bn{b, n};
  const Shape b1{b, 1};
  slot.y = g.input(bn, "truth");
  slot.inv_y = g.input(bn, "inv_truth");
  slot.mask = g.input(bn, "mask");
  slot.inv_count = g.input(b1, "inv_count");
  slot.weight = g.input({1, b}, "sample_weight");

  const NodeId err = g.mul(g.abs(g.sub(slot.y, pred)), slot.inv_y);
  const NodeId mean_e = g.mul(g.sum(err, Axis::cols), slot.inv_count);
  const NodeId centered = g.mul(g.sub(err, g.broadcast(mean_e, bn)), slot.mask);
  const NodeId sd_e = g.sqrt(g.sum(g.square(centered), Axis::cols));

  NodeId c_all = diff::kNoNode;
  const NodeId eps = g.constant(Tensor(b, 1, kPearsonEps));
  for (std::size_t k = 0; k < q; ++k) {
    const NodeId zc = g.input(bn, "z_centered");
    const NodeId zn = g.input(b1, "z_norm");
    slot.zc.push_back(zc);
    slot.znorm.push_back(zn);
    const NodeId num = g.sum(g.mul(centered, zc), Axis::cols);
    const NodeId c = g.div(num, g.add(g.mul(sd_e, zn), eps));
    Tensor sel(1, q);
    sel(0, k) = 1.0;
    const NodeId placed = g.matmul(c, g.constant(std::move(sel)));
    c_all = c_all == diff::kNoNode ? placed : g.add(c_all, placed);
  }
  const NodeId quad = g.sum(g.mul(g.matmul(c_all, g.constant(omega_inv_)), c_all), Axis::cols);
  const NodeId r = g.sqrt(quad);
  return g.matmul(slot.weight, r);
}

NodeId TermBuilder::build_group_gap(ExprGraph& g, NodeId pred, std::size_t batch) {
  const std::size_t n = data_->z.rows();
  const auto& al = data_->labels.attributes.at(columns_.front());
  const double n_adv = static_cast<double>(al.count(data::Group::advantaged));
  const double n_dis = static_cast<double>(al.count(data::Group::disadvantaged));
  Tensor adv(n, 1), dis(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    if (al.labels[i] == data::Group::advantaged) adv[i] = 1.0 / n_adv;
    if (al.labels[i] == data::Group::disadvantaged) dis[i] = 1.0 / n_dis;
  }
  NodeId x = pred;
  if (kind_ != Regularizer::em) {
    if (data_->node_mean.size() != n) throw ValidationError("fairness term: missing node means");
    Tensor inv_mean(1, n);
    for (std::size_t i = 0; i < n; ++i) inv_mean[i] = 1.0 / std::max(data_->node_mean[i], kDemandFloor);
    x = g.mul(pred, g.broadcast(g.constant(std::move(inv_mean)), {batch, n}));
  }
  if (kind_ == Regularizer::ifg) {
    // Mean over cross-group pairs of (x_i - x_k)^2, expanded.
    const NodeId a = g.constant(std::move(adv));
    const NodeId d = g.constant(std::move(dis));
    const NodeId x2 = g.square(x);
    const NodeId ma = g.matmul(x, a);
    const NodeId md = g.matmul(x, d);
    const NodeId per_sample =
        g.sub(g.add(g.matmul(x2, a), g.matmul(x2, d)), g.scale(g.mul(ma, md), 2.0));
    return g.mean(per_sample);
  }
  Tensor diff_sel(n, 1);
  for (std::size_t i = 0; i < n; ++i) diff_sel[i] = adv[i] - dis[i];
  const NodeId gap = g.matmul(x, g.constant(std::move(diff_sel)));
  return g.mean(g.square(gap));
}

void TermBuilder::bind(std::size_t slot_index, const Tensor& truth,
                       diff::Bindings& bindings) const {
  const Slot& slot = slots_.at(slot_index);
  if (slot.y == diff::kNoNode) return;
  const std::size_t b = slot.batch;
  const std::size_t n = data_->z.rows();
  if (truth.rows() != b || truth.cols() != n) {
    throw ValidationError("fairness term: truth must be batch x nodes");
  }
  Tensor inv_y(b, n), mask(b, n), inv_count(b, 1), weight(1, b);
  std::vector<std::size_t> counts(b, 0);
  std::size_t usable = 0;
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      if (truth(s, i) >= kDemandFloor) {
        mask(s, i) = 1.0;
        inv_y(s, i) = 1.0 / truth(s, i);
        ++counts[s];
      }
    }
    if (counts[s] >= 2) {
      inv_count[s] = 1.0 / static_cast<double>(counts[s]);
      ++usable;
    }
  }
  for (std::size_t s = 0; s < b; ++s) {
    if (counts[s] >= 2) weight[s] = 1.0 / static_cast<double>(usable);
  }
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    const std::size_t j = columns_[k];
    Tensor zc(b, n), zn(b, 1);
    for (std::size_t s = 0; s < b; ++s) {
      if (counts[s] < 2) continue;
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (mask(s, i) != 0.0) mean += data_->z(i, j);
      mean /= static_cast<double>(counts[s]);
      double ss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (mask(s, i) == 0.0) continue;
        zc(s, i) = data_->z(i, j) - mean;
        ss += zc(s, i) * zc(s, i);
      }
      zn[s] = std::sqrt(ss);
    }
    bindings[slot.zc[k]] = std::move(zc);
    bindings[slot.znorm[k]] = std::move(zn);
  }
  bindings[slot.y] = truth;
  bindings[slot.inv_y] = std::move(inv_y);
  bindings[slot.mask] = std::move(mask);
  bindings[slot.inv_count] = std::move(inv_count);
  bindings[slot.weight] = std::move(weight);
}

}  // namespace fairdemand::fairness
