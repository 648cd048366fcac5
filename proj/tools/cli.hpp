#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "psm/mlp.hpp"
#include "psm/train.hpp"

namespace psm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Everything needed to reproduce a training run. Each field is also a
// `train` flag and a config-file key of the same name.
struct RunConfig {
  double c = 10.0;
  std::string mode = "tpsm";
  std::string boundaries = "0,1";  // "t0,t1,...,1" or "uniform:N"
  std::vector<int> hidden = {100, 150, 100};
  int batch_size = 512;
  double lr = 1e-3;
  int updates = 1000;
  std::uint64_t seed = 0;
  double t_floor = 1e-5;
  std::string label;  // empty: the output directory name
  std::string dataset;
  std::string out;
  int workers = 1;

  TrainMode train_mode() const;
  BlockPartition partition() const;
  MlpSpec spec() const;
  TrainConfig train_config() const;
  void validate() const;
};

// PSM_WORKERS if set, else the hardware thread count.
int default_workers();

// Comma-separated reals; errors name `field`.
std::vector<double> parse_reals(const std::string& text, const std::string& field);

// args[0] is the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace psm::cli
