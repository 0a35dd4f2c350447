#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairdemand/cli.hpp"
#include "fairdemand/fairness.hpp"
#include "fairdemand/finite_diff.hpp"
#include "fairdemand/graph.hpp"
#include "fairdemand/synthetic.hpp"
#include "fairdemand/training.hpp"

using namespace fairdemand;
using diff::Tensor;
using models::ModelConfig;
using models::ModelKind;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string format(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), fmt, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_z(std::size_t n, std::size_t q, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor z(n, q);
  for (auto& v : z.values()) v = u(rng);
  return z;
}

data::ProtectedAttributeTable table_of(const Tensor& z, data::Direction dir = data::Direction::high) {
  data::ProtectedAttributeTable t;
  for (std::size_t i = 0; i < z.rows(); ++i) t.node_ids.push_back("n" + std::to_string(i));
  for (std::size_t j = 0; j < z.cols(); ++j) {
    t.names.push_back("a" + std::to_string(j));
    t.directions.push_back(dir);
  }
  t.z = z;
  return t;
}

fairness::AccuracyVector unmasked(std::vector<double> e) {
  fairness::AccuracyVector a;
  a.mask.assign(e.size(), 1);
  a.e = std::move(e);
  return a;
}

// ---------------------------------------------------------------------------

// Identity normalizer, noisy affine targets, random attributes.
training::ExperimentData gradient_fixture(std::size_t n, std::size_t q, std::size_t k,
                                          std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> noise(-3.0, 3.0);
  training::ExperimentData d;
  d.nodes = n;
  d.k = k;
  d.m = 1;
  d.normalizer = data::Normalizer(std::vector<double>(n, 0.0), std::vector<double>(n, 1.0),
                                  data::NormalizerMode::per_node);
  for (std::size_t s = 0; s < 8; ++s) {
    Tensor x(n, k), y(n, 1);
    for (auto& v : x.values()) v = g(rng);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 10.0 + noise(rng);
      for (std::size_t c = 0; c < k; ++c) acc += 0.3 * x(i, c);
      y(i, 0) = acc;
    }
    d.train.x.push_back(x);
    d.train.y_norm.push_back(y);
    d.train.y.push_back(y);
  }
  d.attributes = table_of(random_z(n, q, rng));
  d.labels = data::label_groups(d.attributes);
  d.correlation = fairness::attribute_corr_matrix(d.attributes.z);
  d.fairness.z = d.attributes.z;
  d.fairness.omega_inv = d.correlation.omega_inv;
  d.fairness.labels = d.labels;
  d.fairness.node_mean.assign(n, 10.0);
  return d;
}

Outcome criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t total = 0, within = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    const auto d = gradient_fixture(8, 3, 4, rng);
    ModelConfig mc;
    mc.kind = ModelKind::mlp;
    mc.k = 4;
    mc.hidden = 8;
    mc.dropout = 0.0;
    mc.seed = seed;
    auto model = models::Model::create(mc, d.nodes);
    const std::vector<std::size_t> idx = {0, 1, 2, 3};
    for (const double lambda : {0.0, 0.5, 1.0}) {
      training::LossConfig loss;
      loss.lambda = lambda;
      loss.mode = fairness::Regularizer::multi;
      training::LossGraph lg(*model, d, loss, idx.size(), false);
      auto& fg = lg.forward();
      diff::Bindings b;
      lg.bind(*model, d.train, idx, b);
      const auto grads = diff::gradients(fg.graph, b, fg.params);
      for (std::size_t p = 0; p < fg.params.size(); ++p) {
        const auto f = [&](const Tensor& v) {
          diff::Bindings bb = b;
          bb[fg.params[p]] = v;
          return diff::evaluate(fg.graph, bb);
        };
        const Tensor fd = diff::finite_diff_gradient(f, model->parameters()[p]);
        const Tensor& an = grads.at(fg.params[p]);
        for (std::size_t i = 0; i < fd.size(); ++i) {
          ++total;
          const double scale = std::max({std::fabs(an[i]), std::fabs(fd[i]), 1e-6});
          if (std::fabs(an[i] - fd[i]) / scale <= 1e-4) ++within;
        }
      }
    }
  }
  const double secs = seconds_since(t0);
  const double frac = static_cast<double>(within) / static_cast<double>(total);
  return {frac >= 0.95 && secs < 10.0,
          format("%zu/%zu coordinates within 1e-4 (%.2f%%), %.1fs", within, total, 100.0 * frac, secs)};
}

Outcome criterion_2() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + rng() % 60;
    const Tensor z = random_z(n, 1, rng);
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) e[i] = u(rng) + (trial % 3) * z[i];
    const auto acc = unmasked(e);
    const double r = fairness::pearson(acc, z.storage());
    const double big_r =
        fairness::multiple_correlation(acc, z, fairness::attribute_corr_matrix(z).omega_inv);
    worst = std::max(worst, std::fabs(big_r - std::fabs(r)));
  }
  return {worst < 1e-6, format("max |R - |r|| = %.3e over 100 instances", worst)};
}

double ols_r2(const std::vector<double>& e, const Tensor& z) {
  const auto n = static_cast<Eigen::Index>(e.size());
  const auto q = static_cast<Eigen::Index>(z.cols());
  Eigen::MatrixXd x(n, q + 1);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < q; ++j) {
      x(i, j + 1) = z(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
    y(i) = e[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  const Eigen::VectorXd resid = y - x * beta;
  return 1.0 - resid.squaredNorm() / (y.array() - y.mean()).square().sum();
}

Outcome criterion_3() {
  std::mt19937_64 rng(3003);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor z = random_z(200, 4, rng);
    std::vector<double> e(200);
    for (std::size_t i = 0; i < 200; ++i) {
      e[i] = g(rng);
      for (std::size_t j = 0; j < 4; ++j) e[i] += (0.5 - static_cast<double>(j % 3)) * z(i, j);
    }
    const auto corr = fairness::attribute_corr_matrix(z);
    const double r = fairness::multiple_correlation(unmasked(e), z, corr.omega_inv);
    worst = std::max(worst, std::fabs(r * r - ols_r2(e, z)));
  }
  return {worst < 1e-6, format("max |R^2 - OLS R^2| = %.3e over 50 instances", worst)};
}

Outcome criterion_4() {
  data::SyntheticSpec spec;
  spec.nodes = 20;
  spec.steps = 300;
  spec.seed = 4;
  const auto syn = data::generate_synthetic(spec);
  const auto d = training::prepare_experiment(syn.demand, syn.attributes, 6, 1, {},
                                              data::NormalizerMode::global);
  training::TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  cfg.seed = 7;
  const auto run = [&](fairness::Regularizer mode) {
    ModelConfig mc;
    mc.kind = ModelKind::mlp;
    mc.k = 6;
    mc.hidden = 16;
    mc.seed = 7;
    auto m = models::Model::create(mc, d.nodes);
    training::LossConfig loss;
    loss.mode = mode;
    std::vector<std::vector<Tensor>> traj;
    training::train(*m, d, loss, cfg,
                    [&](std::size_t, const models::Model& mm) { traj.push_back(mm.parameters()); });
    return traj;
  };
  const auto aware = run(fairness::Regularizer::multi);
  const auto unaware = run(fairness::Regularizer::none);
  if (aware.size() != 50 || unaware.size() != 50) {
    return {false, format("trained %zu and %zu epochs, expected 50", aware.size(), unaware.size())};
  }
  double worst = 0.0;
  for (std::size_t e = 0; e < aware.size(); ++e)
    for (std::size_t p = 0; p < aware[e].size(); ++p)
      for (std::size_t i = 0; i < aware[e][p].size(); ++i)
        worst = std::max(worst, std::fabs(aware[e][p][i] - unaware[e][p][i]));
  return {worst <= 1e-12, format("max parameter difference over 50 epochs = %.3e", worst)};
}

// ---------------------------------------------------------------------------
// Synthetic debiasing on the N=60, T=2000 generator.

struct Setup {
  ModelConfig model;
  training::TrainConfig train;
};

Setup debias_setup(ModelKind kind, std::uint64_t seed) {
  Setup s;
  s.model.kind = kind;
  s.model.k = 12;
  s.model.seed = seed;
  s.train.seed = seed;
  s.train.patience = 10;
  if (kind == ModelKind::mlp) {
    s.model.hidden = 64;
    s.train.learning_rate = 1e-2;
    s.train.max_epochs = 120;
  } else {
    s.model.hidden = 8;
    s.train.learning_rate = 2e-2;
    s.train.max_epochs = 50;
  }
  return s;
}

training::ExperimentData debias_data(const data::SyntheticSpec& spec) {
  const auto syn = data::generate_synthetic(spec);
  return training::prepare_experiment(syn.demand, syn.attributes, 12, 1, {},
                                      data::NormalizerMode::global);
}

struct DebiasRun {
  ModelKind kind;
  std::uint64_t seed;
  fairness::FairnessReport baseline;
  fairness::FairnessReport selected;
  double lambda = 0.0;
  std::optional<fairness::FairnessReport> em;
};

std::vector<DebiasRun> debias_runs;
double debias_seconds = 0.0;

void run_debias() {
  if (!debias_runs.empty()) return;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    data::SyntheticSpec spec;
    spec.seed = seed;
    const auto d = debias_data(spec);
    for (const auto kind : {ModelKind::mlp, ModelKind::gru}) {
      const auto s = debias_setup(kind, seed);
      training::LossConfig loss;
      loss.mode = fairness::Regularizer::multi;
      training::GridSpec grid;
      grid.lambdas = {0.0, 0.025, 0.05, 0.075, 0.1};
      const auto result = training::grid_search(s.model, d, loss, s.train, grid);
      DebiasRun r{kind, seed, result.entries[result.baseline].report,
                  result.entries[result.best].report, result.entries[result.best].loss.lambda,
                  std::nullopt};
      std::printf("  seed %llu %s: lambda %.3f  mean|Corr| %.4f -> %.4f  mean|PAG| %.3f -> %.3f  RMSE %.4f -> %.4f\n",
                  static_cast<unsigned long long>(seed), models::to_string(kind).c_str(), r.lambda,
                  r.baseline.mean_abs_corr(), r.selected.mean_abs_corr(), r.baseline.mean_abs_pag(),
                  r.selected.mean_abs_pag(), r.baseline.rmse, r.selected.rmse);
      std::fflush(stdout);
      debias_runs.push_back(std::move(r));
    }
  }
  debias_seconds = seconds_since(t0);
}

Outcome criterion_5() {
  run_debias();
  std::size_t passed = 0;
  double worst_corr = 1e9, worst_pag = 1e9, worst_rmse = -1e9;
  for (const auto& r : debias_runs) {
    const double corr = 1.0 - r.selected.mean_abs_corr() / r.baseline.mean_abs_corr();
    const double pag = 1.0 - r.selected.mean_abs_pag() / r.baseline.mean_abs_pag();
    const double rmse = r.selected.rmse / r.baseline.rmse - 1.0;
    worst_corr = std::min(worst_corr, corr);
    worst_pag = std::min(worst_pag, pag);
    worst_rmse = std::max(worst_rmse, rmse);
    if (corr >= 0.60 && pag >= 0.50 && rmse <= 0.10) ++passed;
  }
  const bool all = passed == debias_runs.size();
  return {all && debias_seconds < 1800.0,
          format("%zu/%zu runs pass; worst Corr reduction %.1f%%, PAG reduction %.1f%%, RMSE change %+.1f%%; %.0fs",
                 passed, debias_runs.size(), 100.0 * worst_corr, 100.0 * worst_pag, 100.0 * worst_rmse,
                 debias_seconds)};
}

Outcome criterion_9() {
  run_debias();
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t mlp_wins = 0, gru_wins = 0;
  std::string values;
  for (auto& r : debias_runs) {
    data::SyntheticSpec spec;
    spec.seed = r.seed;
    const auto d = debias_data(spec);
    const auto s = debias_setup(r.kind, r.seed);
    training::LossConfig loss;
    loss.mode = fairness::Regularizer::em;
    loss.attribute = 0;
    loss.lambda = r.lambda;
    auto m = models::Model::create(s.model, d.nodes);
    training::train(*m, d, loss, s.train);
    r.em = training::evaluate(*m, d, r.lambda, "EM");
    const double ours = std::fabs(r.selected.pag[0].value_or(NAN));
    const double em = std::fabs(r.em->pag[0].value_or(NAN));
    if (ours < em) ++(r.kind == ModelKind::mlp ? mlp_wins : gru_wins);
    values += format(" %s/%llu %.2f<%.2f", models::to_string(r.kind).c_str(),
                     static_cast<unsigned long long>(r.seed), ours, em);
  }
  return {mlp_wins >= 2 && gru_wins >= 2,
          format("|PAG| R vs EM:%s; MLP %zu/3, GRU %zu/3; %.0fs", values.c_str(), mlp_wins, gru_wins,
                 seconds_since(t0))};
}

// ---------------------------------------------------------------------------

Outcome criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t side_effect = 0, multi_both = 0;
  std::string values;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto d = debias_data(data::opposing_bias_spec(seed));
    const auto s = debias_setup(ModelKind::mlp, seed);
    const auto fit = [&](fairness::Regularizer mode, double lambda) {
      training::LossConfig loss;
      loss.mode = mode;
      loss.attribute = 0;
      loss.lambda = lambda;
      auto m = models::Model::create(s.model, d.nodes);
      training::train(*m, d, loss, s.train);
      return training::evaluate(*m, d, lambda);
    };
    const auto base = fit(fairness::Regularizer::multi, 0.0);
    const auto single = fit(fairness::Regularizer::single, 0.2);
    const auto multi = fit(fairness::Regularizer::multi, 0.2);
    const auto abs_pag = [](const fairness::FairnessReport& r, std::size_t j) {
      return std::fabs(r.pag[j].value_or(NAN));
    };
    if (abs_pag(single, 1) > abs_pag(base, 1)) ++side_effect;
    if (abs_pag(multi, 0) < abs_pag(base, 0) && abs_pag(multi, 1) < abs_pag(base, 1)) ++multi_both;
    values += format(" seed %llu: base %.2f/%.2f single %.2f/%.2f multi %.2f/%.2f;",
                     static_cast<unsigned long long>(seed), abs_pag(base, 0), abs_pag(base, 1),
                     abs_pag(single, 0), abs_pag(single, 1), abs_pag(multi, 0), abs_pag(multi, 1));
  }
  return {side_effect >= 2 && multi_both == 3,
          format("|PAG| a1/a2%s side effect %zu/3, multi reduces both %zu/3; %.0fs", values.c_str(),
                 side_effect, multi_both, seconds_since(t0))};
}

Tensor random_distances(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 200.0);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = u(rng);
    y[i] = u(rng);
  }
  Tensor d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d(i, j) = std::hypot(x[i] - x[j], y[i] - y[j]);
  return d;
}

Outcome criterion_7() {
  std::mt19937_64 rng(7007);
  std::size_t threshold_bad = 0, scale_bad = 0, monotone_bad = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 15;
    const Tensor d = random_distances(n, rng);
    const auto w = graph::gaussian_adjacency(d).w;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double k = std::exp(-d(i, j) * d(i, j) / 1e4);
        if ((w(i, j) == 0.0) != (k < 0.5)) ++threshold_bad;
      }
    }
    for (const double c : {0.25, 0.5, 2.0, 8.0}) {
      Tensor scaled = d;
      for (auto& v : scaled.values()) v *= c;
      graph::GaussianParams p;
      p.sigma2 = 1e4 * c * c;
      if (!(graph::gaussian_adjacency(scaled, p).w == w)) ++scale_bad;
    }
    std::size_t previous = n * n;
    for (int step = 0; step < 20; ++step) {
      graph::GaussianParams p;
      p.alpha = 0.05 * step;
      const std::size_t nz = graph::gaussian_adjacency(d, p).nonzeros();
      if (nz > previous) ++monotone_bad;
      previous = nz;
    }
  }
  return {threshold_bad == 0 && scale_bad == 0 && monotone_bad == 0,
          format("threshold mismatches %zu, scale mismatches %zu, monotonicity violations %zu over 20 matrices",
                 threshold_bad, scale_bad, monotone_bad)};
}

double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sxy += (a[i] - ma) * (b[i] - mb);
    sxx += (a[i] - ma) * (a[i] - ma);
    syy += (b[i] - mb) * (b[i] - mb);
  }
  return sxy / (std::sqrt(sxx * syy) + fairness::kPearsonEps);
}

Outcome criterion_8() {
  std::mt19937_64 rng(8008);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> demand(1.0, 50.0);
  double pag_err = 0.0, pearson_err = 0.0, mae_err = 0.0, rmse_err = 0.0;
  std::size_t antisym_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 10 + rng() % 30;
    const auto table = table_of(random_z(n, 1, rng),
                                trial % 2 ? data::Direction::high : data::Direction::low);
    const auto lab = data::label_groups(table).attributes[0];
    std::vector<double> truth(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = u(rng) < 0.1 ? 0.0 : demand(rng);
      pred[i] = truth[i] + 10.0 * (u(rng) - 0.5);
    }
    const auto e = fairness::ape(truth, pred);

    double sa = 0.0, sd = 0.0;
    int na = 0, nd = 0;
    std::vector<double> ue, uz;
    for (std::size_t i = 0; i < n; ++i) {
      if (truth[i] < fairness::kDemandFloor) continue;
      const double ape = std::fabs(truth[i] - pred[i]) / truth[i];
      ue.push_back(ape);
      uz.push_back(table.z(i, 0));
      if (lab.labels[i] == data::Group::advantaged) sa += ape, ++na;
      if (lab.labels[i] == data::Group::disadvantaged) sd += ape, ++nd;
    }
    const auto got = fairness::pag(e, lab);
    if (na > 0 && nd > 0) {
      if (!got) {
        pag_err = INFINITY;
      } else {
        pag_err = std::max(pag_err, std::fabs(*got - (sd / nd - sa / na) * 100.0));
        auto swapped = lab;
        for (auto& g : swapped.labels) {
          if (g == data::Group::advantaged) g = data::Group::disadvantaged;
          else if (g == data::Group::disadvantaged) g = data::Group::advantaged;
        }
        const auto back = fairness::pag(e, swapped);
        if (!back || *back != -*got) ++antisym_bad;
      }
    } else if (got) {
      pag_err = INFINITY;
    }
    pearson_err = std::max(pearson_err, std::fabs(fairness::pearson(e, table.z.storage()) -
                                                  pearson_oracle(ue, uz)));

    Tensor ty(n, 1), py(n, 1);
    for (std::size_t i = 0; i < n; ++i) {
      ty(i, 0) = truth[i];
      py(i, 0) = pred[i];
    }
    const std::vector<Tensor> ts{ty}, ps{py};
    const auto report = fairness::make_report("oracle", 0.0, ts, ps, table, data::label_groups(table));
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      abs_sum += std::fabs(truth[i] - pred[i]);
      sq_sum += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    mae_err = std::max(mae_err, std::fabs(report.mae - abs_sum / static_cast<double>(n)));
    rmse_err = std::max(rmse_err, std::fabs(report.rmse - std::sqrt(sq_sum / static_cast<double>(n))));
  }
  const bool ok = pag_err <= 1e-12 && pearson_err <= 1e-12 && mae_err <= 1e-12 && rmse_err <= 1e-12 &&
                  antisym_bad == 0;
  return {ok, format("max error PAG %.1e, Pearson %.1e, MAE %.1e, RMSE %.1e; antisymmetry failures %zu",
                     pag_err, pearson_err, mae_err, rmse_err, antisym_bad)};
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion_10() {
  const fs::path root = fs::temp_directory_path() / "fairdemand_acceptance_replay";
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream spec(root / "spec.json");
    spec << R"({"data":{"source":"synthetic","synthetic":{"nodes":20,"steps":300,"grid_cols":5,"seed":3}},
 "k":6,"normalizer":"global",
 "models":[{"kind":"HA"},{"kind":"MLR"},{"kind":"MLP","hidden":16},{"kind":"GRU","hidden":4},{"kind":"T-GCN","hidden":4}],
 "train":{"learning_rate":0.01,"max_epochs":4},
 "grid":{"lambdas":[0,0.05,0.1]},
 "loss":{"mode":"single","attribute":1},
 "seed":5})";
  }
  std::size_t identical = 0, total = 0;
  std::string failures;
  for (const std::string cmd : {"ingest", "detect", "correct", "sweep", "compare"}) {
    const fs::path first = root / (cmd + "_1");
    const fs::path second = root / (cmd + "_2");
    std::ostringstream out, err;
    int code = cli::run({cmd, "--spec", (root / "spec.json").string(), "--out", first.string(),
                         "--format", cmd == "sweep" ? "json" : "csv"},
                        out, err);
    if (code == 0) {
      code = cli::run({cmd, "--spec", (first / "manifest.json").string(), "--out", second.string()},
                      out, err);
    }
    ++total;
    if (code != 0) {
      failures += " " + cmd + " exited " + std::to_string(code);
      continue;
    }
    bool same = true;
    std::set<std::string> names;
    for (const auto& dir : {first, second})
      for (const auto& entry : fs::directory_iterator(dir)) names.insert(entry.path().filename().string());
    for (const auto& name : names) {
      if (!fs::exists(first / name) || !fs::exists(second / name) ||
          read_bytes(first / name) != read_bytes(second / name)) {
        same = false;
        failures += " " + cmd + "/" + name;
      }
    }
    if (same) ++identical;
  }
  return {identical == total,
          format("%zu/%zu commands replay byte-identical%s", identical, total, failures.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria = {
      criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
      criterion_6, criterion_7, criterion_8, criterion_9, criterion_10};
  std::set<int> chosen;
  for (int i = 1; i < argc; ++i) chosen.insert(std::atoi(argv[i]));
  int failed = 0;
  for (int c = 1; c <= static_cast<int>(criteria.size()); ++c) {
    if (!chosen.empty() && !chosen.count(c)) continue;
    Outcome o;
    try {
      o = criteria[static_cast<std::size_t>(c - 1)]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s\n", c, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
