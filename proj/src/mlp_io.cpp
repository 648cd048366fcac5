#include "psm/mlp_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace psm {
namespace {

constexpr std::array<char, 4> kMagic = {'P', 'S', 'M', '1'};
constexpr std::uint32_t kMaxWidths = 1024;
constexpr std::uint32_t kMaxWidth = 1u << 20;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw FormatError("checkpoint: unexpected end of file");
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace

void write_checkpoint(std::ostream& out, const MlpSpec& spec, const MlpParams<double>& params) {
  spec.validate();
  if (!params.matches(spec)) throw ShapeError("write_checkpoint: parameters do not match spec");
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, std::uint32_t(spec.widths.size()));
  for (int w : spec.widths) put_le<std::uint32_t>(out, std::uint32_t(w));
  put_le<std::uint8_t>(out, spec.time_conditioned ? 1 : 0);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    const auto& w = params.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) put_le<double>(out, w(r, c));
    }
    for (Eigen::Index r = 0; r < params.biases[l].size(); ++r) put_le<double>(out, params.biases[l](r));
  }
  if (!out) throw FormatError("checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw FormatError("checkpoint: bad magic");
  }
  Checkpoint ck;
  const auto count = get_le<std::uint32_t>(in);
  if (count < 2 || count > kMaxWidths) throw FormatError("checkpoint: bad width count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto w = get_le<std::uint32_t>(in);
    if (w == 0 || w > kMaxWidth) throw FormatError("checkpoint: bad layer width");
    ck.spec.widths.push_back(int(w));
  }
  const auto flag = get_le<std::uint8_t>(in);
  if (flag > 1) throw FormatError("checkpoint: bad time_conditioned flag");
  ck.spec.time_conditioned = flag == 1;
  try {
    ck.spec.validate();
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  ck.params = MlpParams<double>::zeros(ck.spec);
  ck.params.for_each([&](double& v) { v = get_le<double>(in); });
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const MlpSpec& spec, const MlpParams<double>& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
  write_checkpoint(out, spec, params);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace psm
