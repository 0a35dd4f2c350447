#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include "fairdemand/error.hpp"
#include "fairdemand/models.hpp"

namespace fairdemand::models {

namespace {

std::vector<double> difference(std::span<const double> x, int d) {
  std::vector<double> w(x.begin(), x.end());
  for (int k = 0; k < d; ++k) {
    if (w.size() < 2) return {};
    for (std::size_t t = 0; t + 1 < w.size(); ++t) w[t] = w[t + 1] - w[t];
    w.pop_back();
  }
  return w;
}

// Layout of the parameter vector: [phi_1..phi_p, theta_1..theta_q, c].
struct Layout {
  int p, q;
  bool intercept;
  int size() const { return p + q + (intercept ? 1 : 0); }
};

// One-step-ahead residuals with pre-sample residuals set to zero.
void residuals(const Layout& l, const Eigen::VectorXd& beta, const std::vector<double>& w,
               std::vector<double>& eps) {
  const std::size_t start = static_cast<std::size_t>(l.p);
  eps.assign(w.size(), 0.0);
  const double c = l.intercept ? beta(l.p + l.q) : 0.0;
  for (std::size_t t = start; t < w.size(); ++t) {
    double pred = c;
    for (int i = 0; i < l.p; ++i) pred += beta(i) * w[t - 1 - static_cast<std::size_t>(i)];
    for (int j = 0; j < l.q; ++j) {
      if (t >= static_cast<std::size_t>(j) + 1) pred += beta(l.p + j) * eps[t - 1 - static_cast<std::size_t>(j)];
    }
    eps[t] = w[t] - pred;
  }
}

double sse(const Layout& l, const Eigen::VectorXd& beta, const std::vector<double>& w,
           std::vector<double>& eps) {
  residuals(l, beta, w, eps);
  double s = 0.0;
  for (std::size_t t = static_cast<std::size_t>(l.p); t < w.size(); ++t) s += eps[t] * eps[t];
  return s;
}

// Largest root modulus of 1 - a_1 B - ... - a_n B^n, via the companion matrix.
double spectral_radius(const std::vector<double>& a) {
  if (a.empty()) return 0.0;
  const auto n = static_cast<Eigen::Index>(a.size());
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) comp(0, i) = a[static_cast<std::size_t>(i)];
  for (Eigen::Index i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::VectorXd least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
  return a.colPivHouseholderQr().solve(b);
}

}  // namespace

ArimaFit arima_fit_series(std::span<const double> series, int p, int d, int q) {
  if (p < 0 || d < 0 || q < 0) throw ValidationError("ARIMA orders must be >= 0");
  const std::size_t need = static_cast<std::size_t>(std::max(10 * (p + d + q), 10));
  if (series.size() < need) {
    throw ValidationError("ARIMA needs at least " + std::to_string(need) + " observations");
  }
  const std::vector<double> w = difference(series, d);
  const Layout l{p, q, d == 0};
  ArimaFit fit;
  auto fallback = [&](const char* why) {
    spdlog::warn("ARIMA({},{},{}) fit rejected ({}); using a random walk", p, d, q, why);
    ArimaFit rw;
    rw.fallback = true;
    return rw;
  };
  if (l.size() == 0) return fit;

  // Hannan-Rissanen start: a long autoregression supplies residual
  // estimates, then one regression on lagged values and lagged residuals.
  std::vector<double> eps0(w.size(), 0.0);
  const int long_ar = q > 0 ? std::max(p + q, std::min<int>(20, static_cast<int>(w.size() / 10))) : 0;
  if (q > 0) {
    const std::size_t rows = w.size() - static_cast<std::size_t>(long_ar);
    Eigen::MatrixXd a(rows, long_ar + 1);
    Eigen::VectorXd b(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t t = r + static_cast<std::size_t>(long_ar);
      for (int i = 0; i < long_ar; ++i) a(r, i) = w[t - 1 - static_cast<std::size_t>(i)];
      a(r, long_ar) = 1.0;
      b(r) = w[t];
    }
    const Eigen::VectorXd coef = least_squares(a, b);
    for (std::size_t r = 0; r < rows; ++r) {
      eps0[r + static_cast<std::size_t>(long_ar)] = b(r) - a.row(r).dot(coef);
    }
  }
  const std::size_t start = static_cast<std::size_t>(long_ar + std::max(p, q));
  if (w.size() <= start + static_cast<std::size_t>(l.size())) return fallback("series too short");
  const std::size_t rows = w.size() - start;
  Eigen::MatrixXd a(rows, l.size());
  Eigen::VectorXd b(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = r + start;
    for (int i = 0; i < p; ++i) a(r, i) = w[t - 1 - static_cast<std::size_t>(i)];
    for (int j = 0; j < q; ++j) a(r, p + j) = eps0[t - 1 - static_cast<std::size_t>(j)];
    if (l.intercept) a(r, p + q) = 1.0;
    b(r) = w[t];
  }
  Eigen::VectorXd beta = least_squares(a, b);

  // Gauss-Newton on the conditional sum of squares, forward-difference
  // Jacobian, step halving.
  if (q > 0) {
    std::vector<double> eps, eps_h;
    double cur = sse(l, beta, w, eps);
    const std::size_t first = static_cast<std::size_t>(p);
    const std::size_t m = w.size() - first;
    for (int iter = 0; iter < 50 && std::isfinite(cur); ++iter) {
      Eigen::MatrixXd jac(m, l.size());
      Eigen::VectorXd r(m);
      for (std::size_t t = 0; t < m; ++t) r(t) = eps[first + t];
      for (int k = 0; k < l.size(); ++k) {
        Eigen::VectorXd bh = beta;
        const double h = 1e-6 * std::max(1.0, std::fabs(beta(k)));
        bh(k) += h;
        residuals(l, bh, w, eps_h);
        for (std::size_t t = 0; t < m; ++t) jac(t, k) = (eps_h[first + t] - eps[first + t]) / h;
      }
      const Eigen::VectorXd step = least_squares(jac, -r);
      double scale = 1.0;
      bool improved = false;
      for (int half = 0; half < 20; ++half) {
        const Eigen::VectorXd trial = beta + scale * step;
        const double s = sse(l, trial, w, eps_h);
        if (std::isfinite(s) && s < cur) {
          const double gain = cur - s;
          beta = trial;
          cur = s;
          eps.swap(eps_h);
          improved = gain > 1e-12 * std::max(1.0, cur);
          break;
        }
        scale *= 0.5;
      }
      if (!improved) break;
    }
  }
  if (!beta.allFinite()) return fallback("non-finite estimate");
  fit.phi.assign(beta.data(), beta.data() + p);
  fit.theta.assign(beta.data() + p, beta.data() + p + q);
  if (l.intercept) fit.intercept = beta(p + q);
  if (spectral_radius(fit.phi) >= 1.0) return fallback("explosive AR part");
  std::vector<double> neg_theta(fit.theta.size());
  for (std::size_t j = 0; j < neg_theta.size(); ++j) neg_theta[j] = -fit.theta[j];
  if (spectral_radius(neg_theta) >= 1.0) return fallback("non-invertible MA part");
  return fit;
}

std::vector<double> arima_forecast_series(const ArimaFit& fit, std::span<const double> history,
                                          int d, std::size_t m) {
  if (history.empty()) throw ValidationError("ARIMA forecast needs history");
  std::vector<double> out(m);
  if (fit.fallback) {
    std::fill(out.begin(), out.end(), history.back());
    return out;
  }
  const int p = static_cast<int>(fit.phi.size());
  const int q = static_cast<int>(fit.theta.size());
  std::vector<double> w = difference(history, d);
  if (w.size() < static_cast<std::size_t>(p)) throw ValidationError("ARIMA history shorter than p + d");
  const Layout l{p, q, d == 0};
  Eigen::VectorXd beta(l.size());
  for (int i = 0; i < p; ++i) beta(i) = fit.phi[static_cast<std::size_t>(i)];
  for (int j = 0; j < q; ++j) beta(p + j) = fit.theta[static_cast<std::size_t>(j)];
  if (l.intercept) beta(p + q) = fit.intercept;
  std::vector<double> eps;
  residuals(l, beta, w, eps);

  // Levels needed to undo the differencing: the last value of each
  // intermediate differenced series.
  std::vector<double> tails;
  {
    std::vector<double> level(history.begin(), history.end());
    for (int k = 0; k < d; ++k) {
      tails.push_back(level.back());
      level = difference(level, 1);
    }
  }
  for (std::size_t s = 0; s < m; ++s) {
    const std::size_t t = w.size();
    double pred = l.intercept ? fit.intercept : 0.0;
    for (int i = 0; i < p; ++i) pred += fit.phi[static_cast<std::size_t>(i)] * w[t - 1 - static_cast<std::size_t>(i)];
    for (int j = 0; j < q; ++j) {
      if (t >= static_cast<std::size_t>(j) + 1) pred += fit.theta[static_cast<std::size_t>(j)] * eps[t - 1 - static_cast<std::size_t>(j)];
    }
    w.push_back(pred);
    eps.push_back(0.0);
    double v = pred;
    for (int k = d - 1; k >= 0; --k) {
      v += tails[static_cast<std::size_t>(k)];
      tails[static_cast<std::size_t>(k)] = v;
    }
    out[s] = v;
  }
  return out;
}

}  // namespace fairdemand::models
