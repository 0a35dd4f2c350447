#include <algorithm>
#include <cmath>
#include <ostream>

#include <Eigen/Dense>

#include "fairdemand/csv.hpp"
#include "fairdemand/error.hpp"
#include "fairdemand/fairness.hpp"

namespace fairdemand::fairness {

std::size_t AccuracyVector::unmasked() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

AccuracyVector ape(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) throw ValidationError("ape: length mismatch");
  AccuracyVector out;
  out.e.resize(truth.size(), 0.0);
  out.mask.resize(truth.size(), 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] >= kDemandFloor) {
      out.e[i] = std::fabs(truth[i] - pred[i]) / truth[i];
      out.mask[i] = 1;
    }
  }
  return out;
}

std::optional<double> pag(const AccuracyVector& e, const data::AttributeLabels& labels) {
  if (labels.degenerate) return std::nullopt;
  if (labels.labels.size() != e.size()) throw ValidationError("pag: label count mismatch");
  double adv = 0.0, dis = 0.0;
  std::size_t n_adv = 0, n_dis = 0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (!e.mask[i]) continue;
    if (labels.labels[i] == data::Group::advantaged) {
      adv += e.e[i];
      ++n_adv;
    } else if (labels.labels[i] == data::Group::disadvantaged) {
      dis += e.e[i];
      ++n_dis;
    }
  }
  if (n_adv == 0 || n_dis == 0) return std::nullopt;
  return (dis / static_cast<double>(n_dis) - adv / static_cast<double>(n_adv)) * 100.0;
}

namespace {

double pearson_masked(std::span<const double> a, std::span<const double> b,
                      std::span<const std::uint8_t> mask) {
  if (a.size() != b.size()) throw ValidationError("pearson: length mismatch");
  double sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    sa += a[i];
    sb += b[i];
    ++n;
  }
  if (n < 2) throw ValidationError("pearson: fewer than 2 usable entries");
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  return cov / (std::sqrt(va) * std::sqrt(vb) + kPearsonEps);
}

}  // namespace

double pearson(const AccuracyVector& e, std::span<const double> z) {
  return pearson_masked(e.e, z, e.mask);
}

double pearson(std::span<const double> a, std::span<const double> b) {
  return pearson_masked(a, b, {});
}

AttributeCorrelation attribute_corr_matrix(const Tensor& z, double ridge) {
  const std::size_t n = z.rows();
  const std::size_t q = z.cols();
  if (q < 1) throw ValidationError("attribute correlation needs at least one attribute");
  if (n < 3) throw ValidationError("attribute correlation needs at least 3 nodes");
  AttributeCorrelation out;
  out.ridge = ridge;
  out.omega = Tensor(q, q);
  std::vector<std::vector<double>> cols(q, std::vector<double>(n));
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t i = 0; i < n; ++i) cols[j][i] = z(i, j);
  for (std::size_t j = 0; j < q; ++j) {
    out.omega(j, j) = 1.0;
    for (std::size_t k = j + 1; k < q; ++k) {
      const double r = pearson(cols[j], cols[k]);
      out.omega(j, k) = r;
      out.omega(k, j) = r;
    }
  }
  Eigen::MatrixXd m(q, q);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < q; ++k)
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) =
          out.omega(j, k) + (j == k ? ridge : 0.0);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(lo > 0.0) || out.condition > 1e12) {
    throw RuntimeFailure("attribute correlation matrix is singular (condition number " +
                         csv::format_exact(out.condition) + ")");
  }
  const Eigen::MatrixXd inv = m.ldlt().solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
  out.omega_inv = Tensor(q, q);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t k = 0; k < q; ++k)
      out.omega_inv(j, k) =
          0.5 * (inv(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) +
                 inv(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)));
  return out;
}

std::vector<double> correlation_vector(const AccuracyVector& e, const Tensor& z) {
  if (z.rows() != e.size()) throw ValidationError("correlation: node count mismatch");
  std::vector<double> c(z.cols());
  std::vector<double> col(z.rows());
  for (std::size_t j = 0; j < z.cols(); ++j) {
    for (std::size_t i = 0; i < z.rows(); ++i) col[i] = z(i, j);
    c[j] = pearson(e, col);
  }
  return c;
}

double multiple_correlation(const AccuracyVector& e, const Tensor& z, const Tensor& omega_inv) {
  const auto c = correlation_vector(e, z);
  if (omega_inv.rows() != c.size() || omega_inv.cols() != c.size()) {
    throw ValidationError("multiple correlation: omega_inv shape mismatch");
  }
  double quad = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j)
    for (std::size_t k = 0; k < c.size(); ++k) quad += c[j] * omega_inv(j, k) * c[k];
  return std::sqrt(quad + diff::kSqrtGuard);
}

// ---------------------------------------------------------------------------

double FairnessReport::mean_abs_corr() const {
  if (corr.empty()) return 0.0;
  return sum_abs_corr() / static_cast<double>(corr.size());
}

double FairnessReport::sum_abs_corr() const {
  double s = 0.0;
  for (const double c : corr) s += std::fabs(c);
  return s;
}

double FairnessReport::mean_abs_pag() const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& p : pag) {
    if (p) {
      s += std::fabs(*p);
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

FairnessReport make_report(std::string model, double lambda, std::span<const Tensor> truth,
                           std::span<const Tensor> pred, const data::ProtectedAttributeTable& table,
                           const data::GroupLabeling& labels, Pooling pooling) {
  if (truth.size() != pred.size()) throw ValidationError("report: truth/prediction count mismatch");
  const std::size_t n = table.nodes();
  const std::size_t q = table.attributes();
  FairnessReport r;
  r.model = std::move(model);
  r.lambda = lambda;
  r.attributes = table.names;
  r.corr.assign(q, 0.0);
  r.pag.assign(q, std::nullopt);

  double abs_sum = 0.0, sq_sum = 0.0;
  std::size_t count = 0;
  std::vector<std::vector<double>> zcols(q, std::vector<double>(n));
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t i = 0; i < n; ++i) zcols[j][i] = table.z(i, j);

  std::vector<double> corr_sum(q, 0.0), pag_sum(q, 0.0);
  std::vector<std::size_t> corr_n(q, 0), pag_n(q, 0);
  AccuracyVector pooled_e;
  std::vector<std::vector<double>> pooled_z(q);
  std::vector<std::size_t> pooled_node;

  std::vector<double> tc(n), pc(n);
  for (std::size_t s = 0; s < truth.size(); ++s) {
    const Tensor& y = truth[s];
    const Tensor& p = pred[s];
    if (y.rows() != n || p.shape() != y.shape()) throw ValidationError("report: shape mismatch");
    for (std::size_t m = 0; m < y.cols(); ++m) {
      for (std::size_t i = 0; i < n; ++i) {
        tc[i] = y(i, m);
        pc[i] = p(i, m);
        const double d = tc[i] - pc[i];
        abs_sum += std::fabs(d);
        sq_sum += d * d;
        ++count;
      }
      AccuracyVector e = ape(tc, pc);
      if (pooling == Pooling::pooled) {
        for (std::size_t i = 0; i < n; ++i) {
          pooled_e.e.push_back(e.e[i]);
          pooled_e.mask.push_back(e.mask[i]);
          pooled_node.push_back(i);
          for (std::size_t j = 0; j < q; ++j) pooled_z[j].push_back(zcols[j][i]);
        }
        continue;
      }
      const bool enough = e.unmasked() >= 2;
      for (std::size_t j = 0; j < q; ++j) {
        if (enough) {
          corr_sum[j] += pearson(e, zcols[j]);
          ++corr_n[j];
        }
        if (const auto g = pag(e, labels.attributes[j])) {
          pag_sum[j] += *g;
          ++pag_n[j];
        }
      }
    }
  }
  if (count == 0) throw ValidationError("report: no test samples");
  r.mae = abs_sum / static_cast<double>(count);
  r.rmse = std::sqrt(sq_sum / static_cast<double>(count));

  if (pooling == Pooling::pooled) {
    for (std::size_t j = 0; j < q; ++j) {
      if (pooled_e.unmasked() >= 2) r.corr[j] = pearson(pooled_e, pooled_z[j]);
      const auto& al = labels.attributes[j];
      if (al.degenerate) continue;
      data::AttributeLabels expanded;
      expanded.labels.reserve(pooled_node.size());
      for (const auto i : pooled_node) expanded.labels.push_back(al.labels[i]);
      r.pag[j] = pag(pooled_e, expanded);
    }
    return r;
  }
  for (std::size_t j = 0; j < q; ++j) {
    if (corr_n[j]) r.corr[j] = corr_sum[j] / static_cast<double>(corr_n[j]);
    if (pag_n[j]) r.pag[j] = pag_sum[j] / static_cast<double>(pag_n[j]);
  }
  return r;
}

namespace {

std::string pag_cell(const std::optional<double>& p, int digits) {
  return p ? csv::format_fixed(*p, digits) : std::string("NA");
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const FairnessReport> rows) {
  out << "model,lambda,mae,rmse";
  if (!rows.empty()) {
    for (const auto& a : rows.front().attributes) out << ",corr_" << a << ",pag_" << a;
  }
  out << '\n';
  for (const auto& r : rows) {
    out << csv::escape(r.model) << ',' << csv::format_exact(r.lambda) << ','
        << csv::format_exact(r.mae) << ',' << csv::format_exact(r.rmse);
    for (std::size_t j = 0; j < r.attributes.size(); ++j) {
      out << ',' << csv::format_exact(r.corr[j]) << ','
          << (r.pag[j] ? csv::format_exact(*r.pag[j]) : std::string("NA"));
    }
    out << '\n';
  }
}

void write_report_markdown(std::ostream& out, std::span<const FairnessReport> rows) {
  out << "| Model | λ | MAE | RMSE |";
  std::size_t q = 0;
  if (!rows.empty()) {
    q = rows.front().attributes.size();
    for (const auto& a : rows.front().attributes) out << " Corr " << a << " | PAG " << a << " (%) |";
  }
  out << "\n|---|---|---|---|";
  for (std::size_t j = 0; j < q; ++j) out << "---|---|";
  out << '\n';
  for (const auto& r : rows) {
    out << "| " << r.model << " | " << csv::format_fixed(r.lambda, 3) << " | "
        << csv::format_fixed(r.mae, 3) << " | " << csv::format_fixed(r.rmse, 3) << " |";
    for (std::size_t j = 0; j < r.attributes.size(); ++j) {
      out << ' ' << csv::format_fixed(r.corr[j], 4) << " | " << pag_cell(r.pag[j], 3) << " |";
    }
    out << '\n';
  }
}

}  // namespace fairdemand::fairness
