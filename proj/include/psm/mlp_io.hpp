#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "psm/mlp.hpp"

namespace psm {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint layout, all little-endian:
//   "PSM1" | u32 width count | u32 widths[count] | u8 time_conditioned
//   then per layer: weight rows (f64, row-major) followed by the bias (f64).
struct Checkpoint {
  MlpSpec spec;
  MlpParams<double> params;
};

void write_checkpoint(std::ostream& out, const MlpSpec& spec, const MlpParams<double>& params);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const MlpSpec& spec, const MlpParams<double>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace psm
