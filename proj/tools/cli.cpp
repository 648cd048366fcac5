#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "psm/data.hpp"
#include "psm/flow.hpp"
#include "psm/manifest.hpp"
#include "psm/mlp_io.hpp"

namespace psm::cli {
namespace fs = std::filesystem;

namespace {

// Prior draws for `sample` use a stream far above any per-sample SDE stream.
constexpr std::uint64_t kPriorStream = 0x8000000000000000ull;

Method parse_method(const std::string& s) { return s == "euler" ? Method::Euler : Method::Rk4; }

Vector2d parse_point(const std::string& text, const std::string& field) {
  const auto v = parse_reals(text, field);
  if (v.size() != 2) throw ValidationError(field, "expected two comma-separated reals");
  return {v[0], v[1]};
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  Eigen::Index n = 0;
  Eigen::Index failed = 0;
};

MeanSe mean_nll(const ComposedModel& model, const Matrix2Xd& data, const IntegrationConfig& cfg,
                const TerminalPrior& prior) {
  const Eigen::VectorXd lp = log_likelihood(model, data, cfg, prior);
  MeanSe r;
  double sum = 0.0, sq = 0.0;
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    if (!std::isfinite(lp(i))) {
      ++r.failed;
      continue;
    }
    sum += -lp(i);
    sq += lp(i) * lp(i);
    ++r.n;
  }
  if (r.n > 0) {
    r.mean = sum / double(r.n);
    const double var = r.n > 1 ? (sq - double(r.n) * r.mean * r.mean) / double(r.n - 1) : 0.0;
    r.se = std::sqrt(std::max(0.0, var) / double(r.n));
  }
  return r;
}

TerminalPrior make_prior(const std::string& mean, double var) {
  if (!(var > 0)) throw ValidationError("prior-var", "must be positive");
  return {parse_point(mean, "prior-mean"), var};
}

void print_summary(std::ostream& out, const Matrix2Xd& pts) {
  const Vector2d mu = pts.rowwise().mean();
  const Matrix2Xd c = pts.colwise() - mu;
  const Eigen::Matrix2d cov = c * c.transpose() / double(std::max<Eigen::Index>(1, pts.cols() - 1));
  out << "n=" << pts.cols() << " mean=(" << fmt(mu(0)) << ", " << fmt(mu(1)) << ") cov=[[" << fmt(cov(0, 0)) << ", "
      << fmt(cov(0, 1)) << "], [" << fmt(cov(1, 0)) << ", " << fmt(cov(1, 1)) << "]]\n";
}

// ---- make-data -------------------------------------------------------------

struct DataOptions {
  std::string kind = "gaussian";
  Eigen::Index n = 1000;
  std::uint64_t seed = 0;
  std::string out;
  std::string mean = "0,0";
  double var = 1.0;
  std::string weights, means, vars;
  int components = 8;
  double radius = 4.0;
  int cells = 4;
  double scale = 2.0;
  double noise = 0.1;
  std::string radii = "1,2";
  std::string mask;
  std::string bounds = "-4,4,-4,4";
};

Toy2D build_dist(const DataOptions& o) {
  Toy2D d;
  d.seed = o.seed;
  if (o.kind == "gaussian") {
    d.kind = GaussianDist{parse_point(o.mean, "mean"), o.var};
  } else if (o.kind == "mixture") {
    const auto w = parse_reals(o.weights, "weights");
    const auto v = parse_reals(o.vars, "vars");
    std::vector<Vector2d> mus;
    std::istringstream in(o.means);
    for (std::string item; std::getline(in, item, ';');) mus.push_back(parse_point(item, "means"));
    if (w.size() != mus.size() || w.size() != v.size()) {
      throw ValidationError("weights", "weights, means and vars must have the same number of components");
    }
    MixtureDist m;
    for (std::size_t k = 0; k < w.size(); ++k) m.components.push_back({w[k], mus[k], v[k]});
    d.kind = m;
  } else if (o.kind == "ring") {
    if (o.components < 1) throw ValidationError("components", "must be at least 1");
    d = ring_mixture(o.components, o.radius, o.var, o.seed);
  } else if (o.kind == "checkerboard") {
    d.kind = CheckerboardDist{o.cells, o.scale};
  } else if (o.kind == "moons") {
    d.kind = TwoMoonsDist{o.noise};
  } else if (o.kind == "rings") {
    d.kind = RingsDist{parse_reals(o.radii, "radii"), o.noise};
  } else if (o.kind == "glyph") {
    if (o.mask.empty()) throw ValidationError("mask", "glyph data needs --mask");
    const auto b = parse_reals(o.bounds, "bounds");
    if (b.size() != 4) throw ValidationError("bounds", "expected x_min,x_max,y_min,y_max");
    d.kind = GlyphDist{GlyphMask::load_pgm(o.mask), b[0], b[1], b[2], b[3]};
  } else {
    throw ValidationError("kind", "unknown distribution '" + o.kind + "'");
  }
  d.validate();
  return d;
}

int cmd_make_data(const DataOptions& o, std::ostream& out) {
  const auto dist = build_dist(o);
  if (o.n < 1) throw ValidationError("n", "must be at least 1");
  const auto pts = sample(dist, o.n);
  write_points(o.out, pts, "psm points kind=" + dist.name() + " n=" + std::to_string(o.n) + " seed=" + std::to_string(o.seed));
  out << "wrote " << o.out << ": ";
  print_summary(out, pts);
  if (auto h = differential_entropy_mc(dist, std::min<Eigen::Index>(o.n, 100000))) {
    out << "entropy_nats=" << fmt(h->value) << " se=" << fmt(h->std_error, 3) << '\n';
  }
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

int cmd_train(const RunConfig& rc, const std::string& resolved, std::ostream& out) {
  rc.validate();
  const auto partition = rc.partition();
  const auto spec = rc.spec();
  const auto tcfg = rc.train_config();
  const fs::path dir(rc.out);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run_config.toml", std::ios::trunc);
    cfg << resolved;
    if (!cfg) throw std::runtime_error("cannot write " + (dir / "run_config.toml").string());
  }
  const Matrix2Xd data = read_points(rc.dataset);
  Schedule<double> sched;
  sched.c = rc.c;

  out << "training " << partition.block_count() << " block(s), mode=" << rc.mode << ", workers=" << rc.workers
      << ", n=" << data.cols() << '\n';
  const auto run = run_partition(rc.train_mode(), partition, data, tcfg, spec, sched, rc.workers, dir,
                                 fs::absolute(rc.dataset).string());
  auto manifest = read_manifest(run.manifest);
  manifest.label = rc.label.empty() ? fs::absolute(dir).lexically_normal().filename().string() : rc.label;
  if (manifest.label.empty()) manifest.label = fs::absolute(dir).lexically_normal().parent_path().filename().string();
  write_manifest(run.manifest, manifest);
  for (std::size_t i = 0; i < run.reports.size(); ++i) {
    const auto& r = run.reports[i];
    const auto& b = manifest.blocks[i];
    out << "block " << r.block_index << " t=[" << fmt(b.t_lo) << ", " << fmt(b.t_hi) << "] ";
    if (r.status == BlockStatus::Ok) {
      out << "loss " << fmt(r.initial_loss, 4) << " -> " << fmt(r.final_loss, 4) << " curve";
      for (double l : r.loss_curve) out << ' ' << fmt(l, 3);
      out << " time " << fmt(r.wall_seconds, 3) << "s\n";
    } else {
      out << "FAILED: " << r.error << '\n';
    }
  }
  out << "wall " << fmt(run.wall_seconds, 4) << "s, max_block " << fmt(run.max_block_seconds(), 4)
      << "s, total_block " << fmt(run.total_block_seconds(), 4) << "s\n";
  out << "manifest " << run.manifest.string() << '\n';
  return run.ok() ? kExitOk : kExitRuntime;
}

// ---- nll / sample / grid / compare -----------------------------------------

struct EvalOptions {
  std::string manifest;
  std::vector<std::string> manifests;
  std::string data;
  std::string method = "rk4";
  int steps = 1000;
  std::string prior_mean = "0,0";
  double prior_var = 1.0;
  Eigen::Index n = 1000;
  std::string via = "ode";
  std::uint64_t seed = 0;
  std::string out;
  std::string bounds = "-4,4,-4,4";
  int res = 100;
  int parallel = 1;
};

int cmd_nll(const EvalOptions& o, std::ostream& out) {
  const auto model = load_composed_model(fs::path(o.manifest));
  const auto data = read_points(o.data);
  const auto r = mean_nll(model, data, IntegrationConfig::likelihood(parse_method(o.method), o.steps, model.t_floor),
                          make_prior(o.prior_mean, o.prior_var));
  out << "n=" << r.n << " failed=" << r.failed << " nll_nats=" << fmt(r.mean, 8) << " se=" << fmt(r.se, 4)
      << " bits_per_dim=" << fmt(nats_to_bits_per_dim(r.mean, 2), 8) << '\n';
  return r.failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_sample(const EvalOptions& o, std::ostream& out) {
  if (o.n < 1) throw ValidationError("n", "must be at least 1");
  if (o.via != "ode" && o.via != "sde") throw ValidationError("via", "expected ode or sde");
  const auto model = load_composed_model(fs::path(o.manifest));
  const auto prior = make_prior(o.prior_mean, o.prior_var);
  const Rng root = Rng(o.seed).split(kPriorStream);
  Matrix2Xd z(2, o.n);
  for (Eigen::Index j = 0; j < o.n; ++j) {
    Rng r = root.split(std::uint64_t(j));
    const double a = r.normal();
    const double b = r.normal();
    z.col(j) = prior.mean + std::sqrt(prior.var) * Vector2d(a, b);
  }
  const Matrix2Xd x = o.via == "ode"
                          ? generate_ode(model, z, IntegrationConfig::generation(parse_method(o.method), o.steps, model.t_floor))
                          : generate_sde(model, z, o.steps, o.seed);
  write_points(o.out, x, "psm samples via=" + o.via + " steps=" + std::to_string(o.steps) + " seed=" + std::to_string(o.seed) +
                             " manifest=" + o.manifest);
  out << "wrote " << o.out << ": ";
  print_summary(out, x);
  return kExitOk;
}

int cmd_grid(const EvalOptions& o, std::ostream& out) {
  const auto b = parse_reals(o.bounds, "bounds");
  if (b.size() != 4) throw ValidationError("bounds", "expected x_min,x_max,y_min,y_max");
  if (o.res < 2) throw ValidationError("res", "must be at least 2");
  if (o.parallel < 1) throw ValidationError("parallel", "must be at least 1");
  const auto model = load_composed_model(fs::path(o.manifest));
  const auto grid = density_grid(model, {b[0], b[1], b[2], b[3]}, o.res,
                                 IntegrationConfig::likelihood(parse_method(o.method), o.steps, model.t_floor),
                                 make_prior(o.prior_mean, o.prior_var), o.parallel);
  write_density_grid(o.out, grid);
  out << "wrote " << o.out << ": resolution=" << o.res << " mass=" << fmt(grid.trapezoid_mass()) << " failed=" << grid.failed_cells()
      << '\n';
  return kExitOk;
}

int cmd_compare(const EvalOptions& o, std::ostream& out) {
  if (o.manifests.empty()) throw ValidationError("manifest", "need at least one manifest");
  std::vector<Manifest> ms;
  for (const auto& p : o.manifests) ms.push_back(read_manifest(p));
  for (const auto& m : ms) {
    if (m.schedule.c != ms.front().schedule.c || m.config.t_floor != ms.front().config.t_floor) {
      throw ValidationError("manifest", "manifests use different schedules; results are not comparable");
    }
  }
  const auto data = read_points(o.data);
  const auto prior = make_prior(o.prior_mean, o.prior_var);
  std::ostringstream table;
  table << "method\tnll\tse\tmax_block_seconds\ttotal_block_seconds\tblocks\tparallel\n";
  bool ok = true;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const auto& m = ms[i];
    const auto model = load_composed_model(m, fs::path(o.manifests[i]).parent_path());
    const auto r = mean_nll(model, data, IntegrationConfig::likelihood(parse_method(o.method), o.steps, model.t_floor), prior);
    ok = ok && r.failed == 0;
    table << m.label << '\t' << fmt(r.mean, 8) << '\t' << fmt(r.se, 4) << '\t' << fmt(m.max_block_seconds(), 6) << '\t'
          << fmt(m.total_block_seconds(), 6) << '\t' << m.blocks.size() << '\t' << m.blocks.size() << "x"
          << fmt(m.max_block_seconds(), 4) << "s\n";
  }
  if (!o.out.empty()) {
    std::ofstream f(o.out, std::ios::trunc);
    f << table.str();
    if (!f) throw std::runtime_error("cannot write " + o.out);
  }
  out << table.str();
  return ok ? kExitOk : kExitRuntime;
}

void add_eval_options(CLI::App* app, EvalOptions& o) {
  app->add_option("--method", o.method, "ODE integrator")->check(CLI::IsMember({"euler", "rk4"}))->capture_default_str();
  app->add_option("--steps", o.steps, "integration steps")->check(CLI::PositiveNumber)->capture_default_str();
  app->add_option("--prior-mean", o.prior_mean, "terminal prior mean x,y")->capture_default_str();
  app->add_option("--prior-var", o.prior_var, "terminal prior variance")->capture_default_str();
}

// Maps the in-flight exception to an exit code.
int report_error(std::ostream& err) {
  try {
    throw;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::logic_error& e) {  // ValidationError, DomainError, ShapeError
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run_train(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig rc;
  rc.workers = default_workers();
  CLI::App app{"Train the blocks of a partition in parallel", args[0]};
  app.set_config("--config", "", "TOML file with the keys below; flags override it");
  app.add_option("--c", rc.c, "schedule slope: b(t) = c t")->capture_default_str();
  app.add_option("--mode", rc.mode, "sa|tpsm|dpsm")->capture_default_str();
  app.add_option("--boundaries", rc.boundaries, "t0,...,1 or uniform:N")->capture_default_str();
  app.add_option("--hidden", rc.hidden, "hidden layer widths")->delimiter(',')->capture_default_str();
  app.add_option("--batch_size", rc.batch_size, "samples per update")->capture_default_str();
  app.add_option("--lr", rc.lr, "Adam learning rate")->capture_default_str();
  app.add_option("--updates", rc.updates, "updates per block")->capture_default_str();
  app.add_option("--seed", rc.seed, "run seed; block i uses seed xor i")->capture_default_str();
  app.add_option("--t_floor", rc.t_floor, "smallest training / integration time")->capture_default_str();
  app.add_option("--label", rc.label, "run label shown by compare (default: output directory name)");
  app.add_option("--dataset", rc.dataset, "training points file");
  app.add_option("--out", rc.out, "output directory");
  app.add_option("--workers", rc.workers, "worker threads (default: $PSM_WORKERS or all cores)")->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }
  try {
    return cmd_train(rc, app.config_to_str(true, false), out);
  } catch (...) {
    return report_error(err);
  }
}

}  // namespace

TrainMode RunConfig::train_mode() const {
  try {
    return parse_train_mode(mode);
  } catch (const std::invalid_argument& e) {
    throw ValidationError("mode", "expected sa, tpsm or dpsm");
  }
}

BlockPartition RunConfig::partition() const {
  const auto kind = train_mode() == TrainMode::Dpsm ? PartitionKind::Grid : PartitionKind::Interval;
  BlockPartition p;
  if (boundaries.rfind("uniform:", 0) == 0) {
    int n = 0;
    try {
      n = std::stoi(boundaries.substr(8));
    } catch (const std::exception&) {
      throw ValidationError("boundaries", "bad block count in '" + boundaries + "'");
    }
    if (n < 1) throw ValidationError("boundaries", "block count must be at least 1");
    p = BlockPartition::uniform_intervals(n);
  } else {
    p.boundaries = parse_reals(boundaries, "boundaries");
  }
  p.kind = kind;
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw ValidationError("boundaries", e.what());
  }
  return p;
}

MlpSpec RunConfig::spec() const {
  const bool tc = train_mode() != TrainMode::Dpsm;
  MlpSpec s;
  s.time_conditioned = tc;
  s.widths.push_back(tc ? 2 + MlpSpec::kTimeInputs : 2);
  for (int h : hidden) s.widths.push_back(h);
  s.widths.push_back(2);
  try {
    s.validate();
  } catch (const std::exception& e) {
    throw ValidationError("hidden", e.what());
  }
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.lr = lr;
  t.updates_per_block = updates;
  t.seed = seed;
  t.t_floor = t_floor;
  return t;
}

void RunConfig::validate() const {
  if (!(c > 0)) throw ValidationError("c", "must be positive");
  if (dataset.empty()) throw ValidationError("dataset", "required");
  if (out.empty()) throw ValidationError("out", "required");
  if (workers < 1) throw ValidationError("workers", "must be at least 1");
  const auto mode_ = train_mode();
  const auto p = partition();
  if (mode_ == TrainMode::Sa && p.block_count() != 1) throw ValidationError("boundaries", "sa trains a single block; use 0,1");
  spec();
  train_config().validate();
}

int default_workers() {
  if (const char* env = std::getenv("PSM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return int(v);
  }
  return int(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<double> parse_reals(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ValidationError(field, "'" + item + "' is not a number");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw ValidationError(field, "'" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError(field, "expected comma-separated reals");
  return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parallel score matching: train and evaluate diffusion-based density models"};
  app.require_subcommand(1);

  DataOptions dopt;
  auto* make_data = app.add_subcommand("make-data", "sample a synthetic 2-D dataset");
  make_data->add_option("--kind", dopt.kind, "gaussian|mixture|ring|checkerboard|moons|rings|glyph")->capture_default_str();
  make_data->add_option("--n", dopt.n, "number of samples")->capture_default_str();
  make_data->add_option("--seed", dopt.seed, "dataset seed")->capture_default_str();
  make_data->add_option("--out", dopt.out, "output points file")->required();
  make_data->add_option("--mean", dopt.mean, "gaussian mean x,y")->capture_default_str();
  make_data->add_option("--var", dopt.var, "gaussian / ring component variance")->capture_default_str();
  make_data->add_option("--weights", dopt.weights, "mixture weights w1,w2,...");
  make_data->add_option("--means", dopt.means, "mixture means x1,y1;x2,y2;...");
  make_data->add_option("--vars", dopt.vars, "mixture variances v1,v2,...");
  make_data->add_option("--components", dopt.components, "ring component count")->capture_default_str();
  make_data->add_option("--radius", dopt.radius, "ring radius")->capture_default_str();
  make_data->add_option("--cells", dopt.cells, "checkerboard cells per side")->capture_default_str();
  make_data->add_option("--scale", dopt.scale, "checkerboard half-width")->capture_default_str();
  make_data->add_option("--noise", dopt.noise, "moons / rings noise")->capture_default_str();
  make_data->add_option("--radii", dopt.radii, "rings radii r1,r2,...")->capture_default_str();
  make_data->add_option("--mask", dopt.mask, "glyph mask (text PGM)");
  make_data->add_option("--bounds", dopt.bounds, "glyph box x_min,x_max,y_min,y_max")->capture_default_str();

  // Parsed by its own root-level app so that --config applies to it.
  app.add_subcommand("train", "train the blocks of a partition in parallel (see train --help)")
      ->prefix_command()
      ->allow_extras();

  EvalOptions eopt;
  auto* nll = app.add_subcommand("nll", "mean negative log-likelihood of a dataset");
  nll->add_option("--manifest", eopt.manifest, "manifest.json of a trained run")->required();
  nll->add_option("--data", eopt.data, "points file")->required();
  add_eval_options(nll, eopt);

  auto* samp = app.add_subcommand("sample", "generate samples");
  samp->add_option("--manifest", eopt.manifest, "manifest.json of a trained run")->required();
  samp->add_option("--n", eopt.n, "number of samples")->capture_default_str();
  samp->add_option("--via", eopt.via, "ode|sde")->capture_default_str();
  samp->add_option("--seed", eopt.seed, "sampling seed")->capture_default_str();
  samp->add_option("--out", eopt.out, "output points file")->required();
  add_eval_options(samp, eopt);

  auto* grid = app.add_subcommand("grid", "density on a regular grid");
  grid->add_option("--manifest", eopt.manifest, "manifest.json of a trained run")->required();
  grid->add_option("--bounds", eopt.bounds, "x_min,x_max,y_min,y_max")->capture_default_str();
  grid->add_option("--res", eopt.res, "nodes per side")->capture_default_str();
  grid->add_option("--parallel", eopt.parallel, "worker threads for grid evaluation")->capture_default_str();
  grid->add_option("--out", eopt.out, "output grid file")->required();
  add_eval_options(grid, eopt);

  auto* compare = app.add_subcommand("compare", "NLL and timing table for several runs");
  compare->add_option("--manifest", eopt.manifests, "manifest.json (repeatable)")->required();
  compare->add_option("--data", eopt.data, "test points file")->required();
  compare->add_option("--out", eopt.out, "also write the TSV table here");
  add_eval_options(compare, eopt);

  if (args.size() > 1 && args[1] == "train") {
    std::vector<std::string> rest(args.begin() + 1, args.end());
    rest[0] = args[0] + " train";
    return run_train(rest, out, err);
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*make_data) return cmd_make_data(dopt, out);
    if (*nll) return cmd_nll(eopt, out);
    if (*samp) return cmd_sample(eopt, out);
    if (*grid) return cmd_grid(eopt, out);
    if (*compare) return cmd_compare(eopt, out);
  } catch (...) {
    return report_error(err);
  }
  return kExitValidation;
}

}  // namespace psm::cli
