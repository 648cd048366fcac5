#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "psm/schedule.hpp"

namespace psm {

class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct GaussianDist {
  Vector2d mean = Vector2d::Zero();
  double var = 1.0;
};

struct MixtureComponent {
  double weight = 1.0;
  Vector2d mean = Vector2d::Zero();
  double var = 1.0;
};

struct MixtureDist {
  std::vector<MixtureComponent> components;
};

// cells x cells board over [-scale, scale]^2; cell (i, j) is active when i + j is even.
struct CheckerboardDist {
  int cells = 4;
  double scale = 2.0;
};

struct TwoMoonsDist {
  double noise = 0.1;
};

struct RingsDist {
  std::vector<double> radii = {1.0, 2.0};
  double noise = 0.05;
};

// Binary raster, row 0 at the top. Built from a text PGM: pixels at or below
// half of maxval (ink) are active.
struct GlyphMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> active;  // row-major

  bool at(int row, int col) const { return active[std::size_t(row) * std::size_t(width) + std::size_t(col)] != 0; }
  std::size_t active_count() const;

  static GlyphMask parse_pgm(const std::string& text);
  static GlyphMask load_pgm(const std::filesystem::path& path);
};

struct GlyphDist {
  GlyphMask mask;
  double x_min = -4.0, x_max = 4.0, y_min = -4.0, y_max = 4.0;
};

using Toy2DKind = std::variant<GaussianDist, MixtureDist, CheckerboardDist, TwoMoonsDist, RingsDist, GlyphDist>;

struct Toy2D {
  Toy2DKind kind;
  std::uint64_t seed = 0;

  void validate() const;
  std::string name() const;
};

// K equal-weight components evenly spaced on a circle.
Toy2D ring_mixture(int components, double radius, double var, std::uint64_t seed = 0);

// Sample i depends only on (seed, stream, i), so a shorter draw is a prefix of a longer one.
Matrix2Xd sample(const Toy2D& dist, Eigen::Index n, std::uint64_t stream = 0);

std::optional<double> exact_logp(const Toy2D& dist, const Vector2d& x);

struct EntropyEstimate {
  double value;
  double std_error;
};

// -mean(log p) over n fresh samples drawn from a stream disjoint from sample()'s default.
std::optional<EntropyEstimate> differential_entropy_mc(const Toy2D& dist, Eigen::Index n);

// Two whitespace-separated reals per line. Blank lines and lines starting
// with '#' are ignored on read; `header` lines are written that way.
void write_points(const std::filesystem::path& path, const Matrix2Xd& points, const std::string& header = {});
Matrix2Xd read_points(const std::filesystem::path& path);

}  // namespace psm
