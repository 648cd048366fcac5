// Acceptance runner. `acceptance N [N ...]` runs the listed criteria and
// prints one PASS/FAIL line for each. Exit status: 0 when all pass, 77 when
// the only failures are hardware-limited (reported as skipped by ctest), 1
// otherwise.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "psm/data.hpp"
#include "psm/flow.hpp"
#include "psm/manifest.hpp"
#include "psm/mlp.hpp"
#include "psm/rng.hpp"
#include "psm/schedule.hpp"
#include "psm/train.hpp"
#include "test_oracles.hpp"

using namespace psm;
namespace fs = std::filesystem;

namespace {

struct Options {
  int updates = 0;  // 0: the criterion's own budget
  int workers = 0;  // 0: hardware threads
  bool keep = false;
};

struct Outcome {
  bool pass = false;
  std::string detail;
  bool hardware_limited = false;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
  return buf;
}

int hardware_threads() { return int(std::max(1u, std::thread::hardware_concurrency())); }

int workers(const Options& o) { return o.workers > 0 ? o.workers : hardware_threads(); }

int budget(const Options& o, int fallback) { return o.updates > 0 ? o.updates : fallback; }

fs::path work_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("psm_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Random biases so that every layer's offset is exercised, not just the zero init.
MlpParams<double> random_net(const MlpSpec& spec, Rng rng) {
  auto p = init_params<double>(spec, rng);
  for (auto& b : p.biases) {
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-0.5, 0.5);
  }
  return p;
}

struct Nll {
  double mean = 0.0;
  double se = 0.0;
  Eigen::Index failed = 0;
};

Nll mean_nll(const Eigen::VectorXd& logp) {
  Nll r;
  std::vector<double> v;
  for (Eigen::Index i = 0; i < logp.size(); ++i) {
    if (std::isfinite(logp(i))) {
      v.push_back(-logp(i));
    } else {
      ++r.failed;
    }
  }
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0, r.failed};
  double s = 0;
  for (double x : v) s += x;
  r.mean = s / double(v.size());
  double ss = 0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.se = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1) / double(v.size())) : 0.0;
  return r;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness(const Options&) {
  Stopwatch sw;
  const auto spec = MlpSpec::score_net(true);
  const Rng root(1001);
  double worst_params = 0, worst_input = 0;
  for (int k = 0; k < 50; ++k) {
    Rng r = root.split(std::uint64_t(k));
    const auto params = random_net(spec, r.split(0));
    const double t = r.uniform();
    Eigen::VectorXd x(4);
    x << r.normal(), r.normal(), t, t;
    Eigen::VectorXd up(2);
    up << r.normal(), r.normal();
    const auto e = oracle::max_gradient_error(params, spec, x, up, 1e-6);
    worst_params = std::max(worst_params, e.params);
    worst_input = std::max(worst_input, e.input);
  }
  const double worst = std::max(worst_params, worst_input);
  const double secs = sw.seconds();
  return {worst <= 1e-4 && secs < 60.0,
          "50 nets 4-100-150-100-2, max rel err params=" + num(worst_params) + " input=" + num(worst_input) +
              " (tol 1e-4), " + num(secs, 3) + "s (limit 60s)"};
}

// ---- 2 ---------------------------------------------------------------------

Outcome exact_divergence(const Options&) {
  const auto spec = MlpSpec::score_net(true);
  const Rng root(2002);
  double worst = 0;
  for (int k = 0; k < 100; ++k) {
    Rng r = root.split(std::uint64_t(k));
    const auto params = random_net(spec, r.split(0));
    const double t = r.uniform(0.01, 1.0);
    Eigen::VectorXd x(4);
    x << 1.5 * r.normal(), 1.5 * r.normal(), t, t;
    const double exact = input_jacobian_trace(params, spec, Eigen::MatrixXd(x))(0);
    const double fd = oracle::fd_data_jacobian(params, spec, x, 1e-5).trace();
    worst = std::max(worst, std::abs(exact - fd));
  }
  return {worst <= 1e-5, "100 (net, point) pairs, max |trace - fd trace| = " + num(worst) + " (tol 1e-5)"};
}

// ---- 3 ---------------------------------------------------------------------

Outcome marginal_identity(const Options&) {
  const Schedule<double> s;
  Rng rng(3003);
  double worst_id = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto m = marginal(s, rng.uniform());
    worst_id = std::max(worst_id, std::abs(m.mu * m.mu + m.sigma * m.sigma - 1.0));
  }
  const double eps = std::numeric_limits<double>::epsilon();
  bool ok = worst_id <= 2 * eps;

  // Moments of x_t given x0 over n = 1e5 draws, each at 4 standard errors.
  const int n = 100000;
  const Vector2d x0(1.5, -0.5);
  double worst_z = 0;
  for (double t : {0.1, 0.5, 0.9}) {
    const auto m = marginal(s, t);
    Rng r = rng.split(std::uint64_t(t * 1000));
    Vector2d sum = Vector2d::Zero(), sq = Vector2d::Zero();
    double cross = 0;
    for (int i = 0; i < n; ++i) {
      const double e0 = r.normal();
      const double e1 = r.normal();
      const Vector2d d = forward_sample(s, x0, t, Vector2d(e0, e1)) - m.mu * x0;
      sum += d;
      sq += d.cwiseAbs2();
      cross += d(0) * d(1);
    }
    const double v = m.sigma * m.sigma;
    const Vector2d mean = sum / n;
    const Vector2d var = sq / n - mean.cwiseAbs2();
    const double cov = cross / n - mean(0) * mean(1);
    const double se_mean = m.sigma / std::sqrt(double(n));
    const double se_var = v * std::sqrt(2.0 / n);
    const double se_cov = v / std::sqrt(double(n));
    for (int k = 0; k < 2; ++k) {
      worst_z = std::max(worst_z, std::abs(mean(k)) / se_mean);
      worst_z = std::max(worst_z, std::abs(var(k) - v) / se_var);
    }
    worst_z = std::max(worst_z, std::abs(cov) / se_cov);
  }
  ok = ok && worst_z <= 4.0;
  return {ok, "max |mu^2 + sigma^2 - 1| = " + num(worst_id / eps, 3) + " eps (tol 2 eps) over 1000 t; forward_sample moments max |z| = " +
                  num(worst_z, 3) + " (tol 4) at t = 0.1, 0.5, 0.9, n = 1e5"};
}

// ---- 4 ---------------------------------------------------------------------

Outcome oracle_likelihood(const Options&) {
  Stopwatch sw;
  const Schedule<double> s;
  const GaussianOracle<double> g{Vector2d(2, 0), 0.25};
  const auto model = ComposedModel::single(std::make_shared<GaussianNoiseModel>(g, s));
  const auto m1 = marginal(s, 1.0);
  const TerminalPrior exact{g.mean * m1.mu, g.diffused_var(m1)};
  Rng rng(4004);
  Matrix2Xd pts(2, 100);
  for (int j = 0; j < 100; ++j) {
    const double a = rng.normal();
    const double b = rng.normal();
    pts.col(j) = g.mean + Vector2d(a, b);
  }
  const auto cfg = IntegrationConfig::likelihood(Method::Rk4, 1000);
  const auto lp = log_likelihood(model, pts, cfg, exact);
  const auto lp_std = log_likelihood(model, pts, cfg);
  double worst = 0, worst_std = 0;
  for (int j = 0; j < 100; ++j) {
    const double truth = -(pts.col(j) - g.mean).squaredNorm() / (2 * g.var) - std::log(2 * std::numbers::pi * g.var);
    worst = std::max(worst, std::abs(lp(j) - truth));
    worst_std = std::max(worst_std, std::abs(lp_std(j) - truth));
  }
  return {worst <= 1e-3 && std::isfinite(worst),
          "RK4/1000, 100 points, max |log p - closed form| = " + num(worst) + " nats (tol 1e-3) with the exact t=1 prior; " +
              num(worst_std) + " with the N(0, I) prior; " + num(sw.seconds(), 3) + "s"};
}

// ---- 5 ---------------------------------------------------------------------

Outcome score_pde(const Options&) {
  const Schedule<double> s;
  const GaussianOracle<double> g{Vector2d(2, 0), 0.25};
  ScoreField<double> exact = [&](const Vector2d& x, double t) { return gaussian_score(g, s, x, t); };
  ScoreField<double> wrong = [](const Vector2d& x, double) { return x; };
  const double h = 1e-3;
  double worst = 0, worst_published = 0;
  std::vector<double> control;
  for (int i = 0; i <= 6; ++i) {
    for (int j = 0; j <= 6; ++j) {
      const Vector2d x(-1.0 + i, -3.0 + j);
      for (int k = 0; k < 10; ++k) {
        const double t = 0.05 + 0.1 * k;
        worst = std::max(worst, score_pde_residual(exact, s, x, t, h));
        control.push_back(score_pde_residual(wrong, s, x, t, h));
        // Right-hand side without the (I + J) s term.
        const auto m = marginal(s, t);
        const Eigen::Matrix2d jac = -Eigen::Matrix2d::Identity() / g.diffused_var(m);
        const Vector2d ds_dt = (exact(x, t + h) - exact(x, t - h)) / (2 * h);
        worst_published = std::max(worst_published, (ds_dt - 0.5 * s.rate(t) * jac * (x + exact(x, t))).norm());
      }
    }
  }
  const double ctl = median(control);
  return {worst <= 1e-3 && ctl >= 0.1,
          "490 (x, t) grid points, h = 1e-3: max residual " + num(worst) + " (tol 1e-3); s(x) = x control median " + num(ctl) +
              " (need >= 0.1), min " + num(*std::min_element(control.begin(), control.end())) +
              "; dropping the (I+J)s term gives max " + num(worst_published)};
}

// ---- 6 ---------------------------------------------------------------------

Outcome trained_oracle(const Options& o) {
  Stopwatch sw;
  const int updates = budget(o, 5000);
  const Toy2D dist{GaussianDist{}, 6006};
  const Matrix2Xd train = sample(dist, 20000);
  const Matrix2Xd test = sample(Toy2D{GaussianDist{}, 6007}, 4000);
  TrainConfig cfg;
  cfg.batch_size = 512;
  cfg.lr = 1e-3;
  cfg.updates_per_block = updates;
  cfg.seed = 6;
  const auto dir = work_dir("6");
  const auto run = run_partition(TrainMode::Tpsm, BlockPartition::intervals({0, 0.1, 1}), train, cfg, MlpSpec::score_net(true),
                                 Schedule<double>{}, workers(o), dir);
  if (!run.ok()) return {false, "training failed: " + run.reports[0].error + run.reports.back().error};
  const double train_secs = sw.seconds();
  const auto model = load_composed_model(run.manifest);

  const auto lp = log_likelihood(model, test, IntegrationConfig::likelihood(Method::Rk4, 500));
  const auto nll = mean_nll(lp);
  // Same points under the true density: separates model error from sampling error.
  Eigen::VectorXd diff(test.cols());
  for (Eigen::Index j = 0; j < test.cols(); ++j) diff(j) = *exact_logp(dist, test.col(j)) - lp(j);
  const double excess = diff.mean();
  const double excess_se = std::sqrt((diff.array() - excess).square().sum() / double(diff.size() - 1) / double(diff.size()));
  // Step-doubling on a subset.
  const Matrix2Xd sub = test.leftCols(200);
  const double step_gap = (log_likelihood(model, sub, IntegrationConfig::likelihood(Method::Rk4, 500)) -
                           log_likelihood(model, sub, IntegrationConfig::likelihood(Method::Rk4, 1000)))
                              .cwiseAbs()
                              .maxCoeff();
  const double entropy = std::log(2 * std::numbers::pi * std::numbers::e);
  const double secs = sw.seconds();
  if (!o.keep) fs::remove_all(dir);
  return {nll.failed == 0 && std::abs(nll.mean - entropy) <= 0.05 && secs <= 900,
          "TPSM {0, 0.1, 1}, " + std::to_string(updates) + " updates/block, batch 512: test NLL " + num(nll.mean, 6) + " +- " +
              num(nll.se, 2) + " vs ln(2 pi e) = " + num(entropy, 6) + " (tol 0.05); paired excess over the true density " +
              num(excess, 3) + " +- " + num(excess_se, 2) + "; RK4 500 vs 1000 max gap " + num(step_gap, 2) + "; train " +
              num(train_secs, 3) + "s, total " + num(secs, 3) + "s (limit 900s)"};
}

// ---- 7 ---------------------------------------------------------------------

Outcome ordering(const Options& o) {
  Stopwatch sw;
  const int updates = budget(o, 5000);
  const auto dist = ring_mixture(8, 4.0, 0.25, 7007);
  const Matrix2Xd train = sample(dist, 20000);
  auto test_dist = dist;
  test_dist.seed = 7008;
  const Matrix2Xd test = sample(test_dist, 1000);
  const auto cfg_steps = IntegrationConfig::likelihood(Method::Rk4, 500);

  struct Method7 {
    std::string name;
    TrainMode mode;
    std::vector<double> boundaries;
  };
  const std::vector<Method7> methods = {{"SA", TrainMode::Sa, {0, 1}},
                                        {"TPSM2", TrainMode::Tpsm, {0, 0.1, 1}},
                                        {"TPSM4", TrainMode::Tpsm, {0, 0.02, 0.1, 0.3, 1}}};
  std::map<std::string, std::vector<double>> nll;
  std::ostringstream seeds;
  double max_parallel = 0;
  for (int seed = 0; seed < 3; ++seed) {
    for (const auto& m : methods) {
      TrainConfig cfg;
      cfg.updates_per_block = updates;
      cfg.seed = 70 + std::uint64_t(seed) * 1000;
      const auto dir = work_dir("7_" + m.name + "_" + std::to_string(seed));
      const auto run = run_partition(m.mode, BlockPartition::intervals(m.boundaries), train, cfg, MlpSpec::score_net(true),
                                     Schedule<double>{}, workers(o), dir);
      if (!run.ok()) return {false, m.name + " training failed"};
      max_parallel = std::max(max_parallel, run.max_block_seconds());
      const auto r = mean_nll(log_likelihood(load_composed_model(run.manifest), test, cfg_steps));
      if (r.failed) return {false, m.name + " likelihood failed on " + std::to_string(r.failed) + " points"};
      nll[m.name].push_back(r.mean);
      if (!o.keep) fs::remove_all(dir);
    }
  }
  for (const auto& m : methods) {
    seeds << ' ' << m.name << '=';
    for (std::size_t i = 0; i < nll[m.name].size(); ++i) seeds << (i ? "/" : "") << num(nll[m.name][i], 5);
  }
  const double sa = median(nll["SA"]), t2 = median(nll["TPSM2"]), t4 = median(nll["TPSM4"]);
  const auto h = differential_entropy_mc(dist, 100000);
  const double secs = sw.seconds();
  return {t4 <= t2 && t2 <= sa + 0.02 && secs <= 7200,
          "8-ring mixture, " + std::to_string(updates) + " updates/block, 3 seeds, 1000 test points, RK4/500: median NLL TPSM4 " +
              num(t4, 5) + " <= TPSM2 " + num(t2, 5) + " <= SA " + num(sa, 5) + " + 0.02; per-seed" + seeds.str() +
              "; entropy " + num(h->value, 5) + "; slowest block " + num(max_parallel, 3) + "s; total " + num(secs, 4) +
              "s (limit 7200s)"};
}

// ---- 8 ---------------------------------------------------------------------

Outcome rk4_order(const Options&) {
  const Schedule<double> s;
  const GaussianOracle<double> g{Vector2d(2, 0), 0.25};
  const auto model = ComposedModel::single(std::make_shared<GaussianNoiseModel>(g, s));
  const double tf = model.t_floor;
  auto v = [&](double t) { return g.diffused_var(marginal(s, t)); };
  Rng rng(8008);
  std::vector<Vector2d> starts;
  for (int i = 0; i < 10; ++i) {
    const double a = rng.normal();
    const double b = rng.normal();
    starts.push_back(g.mean + 0.5 * Vector2d(a, b));
  }
  // Exact affine flow map from t_floor to 1.
  auto error = [&](int steps) {
    double worst = 0;
    for (const auto& x0 : starts) {
      const Vector2d exact = g.mean * marginal(s, 1.0).mu + std::sqrt(v(1.0) / v(tf)) * (x0 - g.mean * marginal(s, tf).mu);
      worst = std::max(worst, (integrate(model, x0, IntegrationConfig::likelihood(Method::Rk4, steps), false).terminal_state - exact).norm());
    }
    return worst;
  };
  std::ostringstream detail;
  bool ok = true;
  double prev = error(8);
  detail << "terminal error e(8)=" << num(prev, 3);
  for (int steps : {16, 32, 64}) {
    const double e = error(steps);
    const double ratio = prev / e;
    ok = ok && ratio >= 12 && ratio <= 20;
    detail << ", e(" << steps << ")=" << num(e, 3) << " ratio " << num(ratio, 4);
    prev = e;
  }
  detail << " (each ratio in [12, 20])";
  return {ok, detail.str()};
}

// ---- 9 ---------------------------------------------------------------------

Outcome dpsm_convergence(const Options& o) {
  Stopwatch sw;
  const int updates = budget(o, 300);
  const auto dist = ring_mixture(8, 4.0, 0.25, 9009);
  const Matrix2Xd train = sample(dist, 20000);
  auto test_dist = dist;
  test_dist.seed = 9010;
  const Matrix2Xd test = sample(test_dist, 300);
  TrainConfig cfg;
  cfg.updates_per_block = updates;
  cfg.seed = 9;
  const auto dir = work_dir("9");
  const auto run = run_partition(TrainMode::Dpsm, BlockPartition::grid(100), train, cfg, MlpSpec::score_net(false),
                                 Schedule<double>{}, workers(o), dir);
  if (!run.ok()) return {false, "training failed"};
  const auto model = load_composed_model(run.manifest);
  std::map<int, double> nll;
  for (int steps : {1000, 5000, 10000}) {
    const auto r = mean_nll(log_likelihood(model, test, IntegrationConfig::likelihood(Method::Euler, steps)));
    if (r.failed) return {false, "likelihood failed at " + std::to_string(steps) + " steps"};
    nll[steps] = r.mean;
  }
  if (!o.keep) fs::remove_all(dir);
  const double d1 = std::abs(nll[1000] - nll[5000]), d2 = std::abs(nll[5000] - nll[10000]);
  return {d2 <= d1, "100-point DPSM grid, " + std::to_string(updates) + " updates/block, 300 test points: NLL Euler 1k " +
                        num(nll[1000], 6) + ", 5k " + num(nll[5000], 6) + ", 10k " + num(nll[10000], 6) + "; |5k-10k| " + num(d2, 3) +
                        " <= |1k-5k| " + num(d1, 3) + "; " + num(sw.seconds(), 4) + "s"};
}

// ---- 10 --------------------------------------------------------------------

Outcome parallel_speedup(const Options& o) {
  const int updates = budget(o, 250);
  const Matrix2Xd train = sample(ring_mixture(8, 4.0, 0.25, 1010), 10000);
  TrainConfig cfg;
  cfg.updates_per_block = updates;
  cfg.seed = 10;
  const auto part = BlockPartition::uniform_intervals(8);
  const auto d1 = work_dir("10_w1"), d8 = work_dir("10_w8");
  const auto serial = run_partition(TrainMode::Tpsm, part, train, cfg, MlpSpec::score_net(true), Schedule<double>{}, 1, d1);
  const auto parallel = run_partition(TrainMode::Tpsm, part, train, cfg, MlpSpec::score_net(true), Schedule<double>{}, 8, d8);
  if (!serial.ok() || !parallel.ok()) return {false, "training failed"};
  bool identical = true;
  for (int i = 0; i < 8; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "blocks/block_%04d.psm", i);
    identical = identical && slurp(d1 / name) == slurp(d8 / name) && !slurp(d1 / name).empty();
  }
  const double slowest = serial.max_block_seconds();
  const double ratio = parallel.wall_seconds / slowest;
  if (!o.keep) {
    fs::remove_all(d1);
    fs::remove_all(d8);
  }
  const int hw = hardware_threads();
  Outcome out{ratio <= 1.25 && identical,
              "8 blocks x " + std::to_string(updates) + " updates: 8-worker wall " + num(parallel.wall_seconds, 4) +
                  "s / slowest single block " + num(slowest, 4) + "s = " + num(ratio, 3) + " (tol 1.25); checkpoints " +
                  (identical ? "bit-identical" : "DIFFER") + " to workers=1; " + std::to_string(hw) + " hardware thread(s)"};
  out.hardware_limited = !out.pass && identical && hw < 8;
  return out;
}

// ---- 11 --------------------------------------------------------------------

Outcome reverse_sde(const Options&) {
  Stopwatch sw;
  const auto model = ComposedModel::single(std::make_shared<GaussianNoiseModel>(GaussianOracle<double>{}, Schedule<double>{}));
  const int n = 100000;
  Rng rng(1111);
  Matrix2Xd z(2, n);
  for (int j = 0; j < n; ++j) {
    const double a = rng.normal();
    const double b = rng.normal();
    z.col(j) = Vector2d(a, b);
  }
  const Matrix2Xd x = generate_sde(model, z, 1000, 1112);
  const Vector2d mean = x.rowwise().mean();
  const Matrix2Xd c = x.colwise() - mean;
  const Eigen::Matrix2d cov = c * c.transpose() / double(n - 1);
  const double se_mean = 1 / std::sqrt(double(n)), se_var = std::sqrt(2.0 / n), se_cov = 1 / std::sqrt(double(n));
  double worst = 0;
  for (int k = 0; k < 2; ++k) {
    worst = std::max(worst, std::abs(mean(k)) / se_mean);
    worst = std::max(worst, std::abs(cov(k, k) - 1) / se_var);
  }
  worst = std::max(worst, std::abs(cov(0, 1)) / se_cov);
  return {worst <= 4, "1e5 samples, Euler-Maruyama 1000 steps: mean (" + num(mean(0), 3) + ", " + num(mean(1), 3) + "), cov [[" +
                          num(cov(0, 0), 4) + ", " + num(cov(0, 1), 3) + "], [., " + num(cov(1, 1), 4) + "]], max |z| " +
                          num(worst, 3) + " (tol 4); " + num(sw.seconds(), 3) + "s"};
}

struct Criterion {
  const char* title;
  std::function<Outcome(const Options&)> run;
};

const std::map<int, Criterion>& criteria() {
  static const std::map<int, Criterion> table = {
      {1, {"gradient correctness", gradient_correctness}},
      {2, {"exact divergence", exact_divergence}},
      {3, {"marginal identity", marginal_identity}},
      {4, {"CNF oracle likelihood", oracle_likelihood}},
      {5, {"score PDE residual", score_pde}},
      {6, {"trained-model oracle", trained_oracle}},
      {7, {"ordering experiment", ordering}},
      {8, {"RK4 order", rk4_order}},
      {9, {"DPSM step-count convergence", dpsm_convergence}},
      {10, {"parallel speedup", parallel_speedup}},
      {11, {"reverse-SDE sampler", reverse_sde}},
  };
  return table;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> ids;
  Options opt;
  app.add_option("criteria", ids, "criterion numbers (default: all)");
  app.add_option("--updates", opt.updates, "override the training budget per block");
  app.add_option("--workers", opt.workers, "training workers (default: hardware threads)");
  app.add_flag("--keep", opt.keep, "keep training outputs");
  CLI11_PARSE(app, argc, argv);
  if (ids.empty()) {
    for (const auto& [id, c] : criteria()) ids.push_back(id);
  }

  bool hard_fail = false, limited = false;
  for (int id : ids) {
    const auto it = criteria().find(id);
    if (it == criteria().end()) {
      std::cerr << "unknown criterion " << id << '\n';
      return 1;
    }
    Outcome r;
    try {
      r = it->second.run(opt);
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    std::cout << "criterion " << id << " (" << it->second.title << "): " << (r.pass ? "PASS" : "FAIL") << "  " << r.detail
              << (r.hardware_limited ? "  [hardware-limited]" : "") << std::endl;
    if (!r.pass) (r.hardware_limited ? limited : hard_fail) = true;
  }
  return hard_fail ? 1 : (limited ? 77 : 0);
}
