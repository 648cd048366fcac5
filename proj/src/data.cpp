#include "psm/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "psm/rng.hpp"

namespace psm {
namespace {

constexpr std::uint64_t kEntropyStream = 0xe27c0911ULL;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

double log_normal_iso(const Vector2d& x, const Vector2d& mean, double var) {
  return -(x - mean).squaredNorm() / (2.0 * var) - std::log(2.0 * std::numbers::pi * var);
}

Vector2d sample_one(const GaussianDist& d, Rng& rng) {
  const double sd = std::sqrt(d.var);
  const double a = rng.normal();
  const double b = rng.normal();
  return d.mean + sd * Vector2d(a, b);
}

Vector2d sample_one(const MixtureDist& d, Rng& rng) {
  double u = rng.uniform();
  std::size_t k = 0;
  for (; k + 1 < d.components.size(); ++k) {
    if (u < d.components[k].weight) break;
    u -= d.components[k].weight;
  }
  const auto& c = d.components[k];
  return sample_one(GaussianDist{c.mean, c.var}, rng);
}

Vector2d sample_one(const CheckerboardDist& d, Rng& rng) {
  const int active = (d.cells * d.cells + 1) / 2;
  const auto pick = int(rng.index(std::size_t(active)));
  // Enumerate active cells row by row.
  int seen = 0;
  int ci = 0, cj = 0;
  for (int i = 0; i < d.cells; ++i) {
    for (int j = 0; j < d.cells; ++j) {
      if ((i + j) % 2 != 0) continue;
      if (seen++ == pick) {
        ci = i;
        cj = j;
      }
    }
  }
  const double cell = 2.0 * d.scale / d.cells;
  const double x = -d.scale + (cj + rng.uniform()) * cell;
  const double y = -d.scale + (ci + rng.uniform()) * cell;
  return {x, y};
}

Vector2d sample_one(const TwoMoonsDist& d, Rng& rng) {
  const double a = std::numbers::pi * rng.uniform();
  const bool upper = rng.uniform() < 0.5;
  Vector2d p = upper ? Vector2d(std::cos(a), std::sin(a)) : Vector2d(1.0 - std::cos(a), 0.5 - std::sin(a));
  const double n0 = rng.normal();
  const double n1 = rng.normal();
  return p + d.noise * Vector2d(n0, n1);
}

Vector2d sample_one(const RingsDist& d, Rng& rng) {
  const double r = d.radii[rng.index(d.radii.size())];
  const double a = 2.0 * std::numbers::pi * rng.uniform();
  const double n0 = rng.normal();
  const double n1 = rng.normal();
  return r * Vector2d(std::cos(a), std::sin(a)) + d.noise * Vector2d(n0, n1);
}

Vector2d sample_one(const GlyphDist& d, Rng& rng) {
  const double cw = (d.x_max - d.x_min) / d.mask.width;
  const double ch = (d.y_max - d.y_min) / d.mask.height;
  for (;;) {
    const double x = rng.uniform(d.x_min, d.x_max);
    const double y = rng.uniform(d.y_min, d.y_max);
    const int col = std::min(d.mask.width - 1, int((x - d.x_min) / cw));
    const int row = std::min(d.mask.height - 1, int((d.y_max - y) / ch));
    if (d.mask.at(row, col)) return {x, y};
  }
}

}  // namespace

std::size_t GlyphMask::active_count() const {
  std::size_t n = 0;
  for (auto a : active) n += a != 0;
  return n;
}

GlyphMask GlyphMask::parse_pgm(const std::string& text) {
  // Strip comments, then read whitespace-separated tokens.
  std::string clean;
  clean.reserve(text.size());
  bool comment = false;
  for (char ch : text) {
    if (ch == '#') comment = true;
    if (ch == '\n') comment = false;
    if (!comment) clean.push_back(ch);
  }
  std::istringstream in(clean);
  std::string magic;
  in >> magic;
  if (magic != "P2") throw ValidationError("mask", "expected a text PGM (P2)");
  int width = 0, height = 0, maxval = 0;
  if (!(in >> width >> height >> maxval) || width <= 0 || height <= 0 || maxval <= 0) {
    throw ValidationError("mask", "bad PGM header");
  }
  GlyphMask mask;
  mask.width = width;
  mask.height = height;
  mask.active.resize(std::size_t(width) * std::size_t(height));
  for (auto& a : mask.active) {
    int v = 0;
    if (!(in >> v) || v < 0 || v > maxval) throw ValidationError("mask", "bad or missing PGM pixel");
    a = 2 * v <= maxval ? 1 : 0;
  }
  return mask;
}

GlyphMask GlyphMask::load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("mask", "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_pgm(buf.str());
}

void Toy2D::validate() const {
  std::visit(overloaded{
                 [](const GaussianDist& d) {
                   if (!(d.var > 0)) throw ValidationError("var", "must be positive");
                 },
                 [](const MixtureDist& d) {
                   if (d.components.empty()) throw ValidationError("components", "mixture needs at least one component");
                   double total = 0.0;
                   for (const auto& c : d.components) {
                     if (!(c.weight > 0)) throw ValidationError("weights", "must be positive");
                     if (!(c.var > 0)) throw ValidationError("var", "must be positive");
                     total += c.weight;
                   }
                   if (std::abs(total - 1.0) > 1e-9) {
                     throw ValidationError("weights", "must sum to 1 (sum is " + std::to_string(total) + ")");
                   }
                 },
                 [](const CheckerboardDist& d) {
                   if (d.cells < 1) throw ValidationError("cells", "must be at least 1");
                   if (!(d.scale > 0)) throw ValidationError("scale", "must be positive");
                 },
                 [](const TwoMoonsDist& d) {
                   if (!(d.noise >= 0)) throw ValidationError("noise", "must be non-negative");
                 },
                 [](const RingsDist& d) {
                   if (d.radii.empty()) throw ValidationError("radii", "need at least one radius");
                   if (!(d.noise >= 0)) throw ValidationError("noise", "must be non-negative");
                 },
                 [](const GlyphDist& d) {
                   if (d.mask.active_count() == 0) throw ValidationError("mask", "has no active pixels");
                   if (!(d.x_max > d.x_min && d.y_max > d.y_min)) throw ValidationError("bounds", "empty box");
                 },
             },
             kind);
}

std::string Toy2D::name() const {
  static constexpr const char* kNames[] = {"gaussian", "mixture", "checkerboard", "moons", "rings", "glyph"};
  return kNames[kind.index()];
}

Toy2D ring_mixture(int components, double radius, double var, std::uint64_t seed) {
  MixtureDist mix;
  for (int k = 0; k < components; ++k) {
    const double a = 2.0 * std::numbers::pi * k / components;
    mix.components.push_back({1.0 / components, radius * Vector2d(std::cos(a), std::sin(a)), var});
  }
  return {mix, seed};
}

Matrix2Xd sample(const Toy2D& dist, Eigen::Index n, std::uint64_t stream) {
  dist.validate();
  if (n < 1) throw ValidationError("n", "must be at least 1");
  const Rng base = Rng(dist.seed).split(stream);
  Matrix2Xd out(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = base.split(std::uint64_t(i));
    out.col(i) = std::visit([&](const auto& d) { return sample_one(d, rng); }, dist.kind);
  }
  return out;
}

std::optional<double> exact_logp(const Toy2D& dist, const Vector2d& x) {
  if (const auto* g = std::get_if<GaussianDist>(&dist.kind)) return log_normal_iso(x, g->mean, g->var);
  if (const auto* m = std::get_if<MixtureDist>(&dist.kind)) {
    std::vector<double> terms;
    double top = -std::numeric_limits<double>::infinity();
    for (const auto& c : m->components) {
      terms.push_back(std::log(c.weight) + log_normal_iso(x, c.mean, c.var));
      top = std::max(top, terms.back());
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - top);
    return top + std::log(acc);
  }
  return std::nullopt;
}

std::optional<EntropyEstimate> differential_entropy_mc(const Toy2D& dist, Eigen::Index n) {
  if (!exact_logp(dist, Vector2d::Zero())) return std::nullopt;
  const Matrix2Xd pts = sample(dist, n, kEntropyStream);
  Eigen::VectorXd nlp(n);
  for (Eigen::Index i = 0; i < n; ++i) nlp(i) = -*exact_logp(dist, pts.col(i));
  const double mean = nlp.mean();
  const double var = n > 1 ? (nlp.array() - mean).square().sum() / double(n - 1) : 0.0;
  return EntropyEstimate{mean, std::sqrt(var / double(n))};
}

void write_points(const std::filesystem::path& path, const Matrix2Xd& points, const std::string& header) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (!header.empty()) {
    std::istringstream lines(header);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  char buf[64];
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    for (int k = 0; k < 2; ++k) {
      auto res = std::to_chars(buf, buf + sizeof(buf), points(k, j));
      out.write(buf, res.ptr - buf);
      out.put(k == 0 ? ' ' : '\n');
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Matrix2Xd read_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double a = 0, b = 0;
    std::string extra;
    if (!(ls >> a >> b) || (ls >> extra)) {
      throw ValidationError("dataset", path.string() + ":" + std::to_string(lineno) + ": expected two reals");
    }
    values.push_back(a);
    values.push_back(b);
  }
  if (values.empty()) throw ValidationError("dataset", path.string() + " is empty");
  return Eigen::Map<Matrix2Xd>(values.data(), 2, Eigen::Index(values.size() / 2));
}

}  // namespace psm
