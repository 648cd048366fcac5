#include "psm/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "psm/flow.hpp"
#include "psm/mlp_io.hpp"

namespace psm {
namespace {

using nlohmann::json;

json spec_to_json(const MlpSpec& s) {
  return {{"widths", s.widths}, {"activation", "elu"}, {"time_conditioned", s.time_conditioned}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec s;
  s.widths = j.at("widths").get<std::vector<int>>();
  if (j.value("activation", std::string("elu")) != "elu") throw FormatError("manifest: unsupported activation");
  s.time_conditioned = j.at("time_conditioned").get<bool>();
  s.validate();
  return s;
}

}  // namespace

bool Manifest::ok() const {
  return std::all_of(blocks.begin(), blocks.end(), [](const auto& b) { return b.status == BlockStatus::Ok; });
}

double Manifest::max_block_seconds() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.wall_seconds);
  return m;
}

double Manifest::total_block_seconds() const {
  double s = 0.0;
  for (const auto& b : blocks) s += b.wall_seconds;
  return s;
}

std::string manifest_to_json(const Manifest& m) {
  json blocks = json::array();
  for (const auto& b : m.blocks) {
    json jb = {{"index", b.index},
               {"t_lo", b.t_lo},
               {"t_hi", b.t_hi},
               {"seed", b.seed},
               {"updates", b.updates},
               {"status", b.status == BlockStatus::Ok ? "ok" : "failed"},
               {"initial_loss", b.initial_loss},
               {"final_loss", b.final_loss},
               {"wall_seconds", b.wall_seconds}};
    if (b.oracle) {
      jb["model"] = {{"kind", "gaussian"},
                     {"mean", {b.oracle->mean(0), b.oracle->mean(1)}},
                     {"var", b.oracle->var}};
    } else {
      jb["model"] = {{"kind", "mlp"}, {"checkpoint", b.checkpoint}, {"spec", spec_to_json(b.spec)}};
    }
    if (!b.error.empty()) jb["error"] = b.error;
    blocks.push_back(std::move(jb));
  }
  json j = {{"format_version", m.format_version},
            {"label", m.label},
            {"mode", to_string(m.mode)},
            {"schedule", {{"kind", "linear"}, {"c", m.schedule.c}}},
            {"partition",
             {{"kind", m.partition.kind == PartitionKind::Grid ? "grid" : "interval"},
              {"boundaries", m.partition.boundaries}}},
            {"train",
             {{"batch_size", m.config.batch_size},
              {"lr", m.config.lr},
              {"updates_per_block", m.config.updates_per_block},
              {"seed", m.config.seed},
              {"t_floor", m.config.t_floor}}},
            {"dataset", m.dataset},
            {"blocks", std::move(blocks)}};
  return j.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
  Manifest m;
  try {
    const json j = json::parse(text);
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kManifestFormatVersion) {
      throw FormatError("manifest: unsupported format_version " + std::to_string(m.format_version));
    }
    m.label = j.value("label", std::string{});
    m.mode = parse_train_mode(j.at("mode").get<std::string>());
    const auto& js = j.at("schedule");
    if (js.value("kind", std::string("linear")) != "linear") throw FormatError("manifest: unsupported schedule kind");
    m.schedule.c = js.at("c").get<double>();
    const auto& jp = j.at("partition");
    const auto kind = jp.at("kind").get<std::string>();
    if (kind != "grid" && kind != "interval") throw FormatError("manifest: bad partition kind '" + kind + "'");
    m.partition.kind = kind == "grid" ? PartitionKind::Grid : PartitionKind::Interval;
    m.partition.boundaries = jp.at("boundaries").get<std::vector<double>>();
    m.partition.validate();
    const auto& jt = j.at("train");
    m.config.batch_size = jt.value("batch_size", m.config.batch_size);
    m.config.lr = jt.value("lr", m.config.lr);
    m.config.updates_per_block = jt.value("updates_per_block", m.config.updates_per_block);
    m.config.seed = jt.value("seed", m.config.seed);
    m.config.t_floor = jt.value("t_floor", m.config.t_floor);
    m.dataset = j.value("dataset", std::string{});
    for (const auto& jb : j.at("blocks")) {
      ManifestBlock b;
      b.index = jb.at("index").get<int>();
      b.t_lo = jb.at("t_lo").get<double>();
      b.t_hi = jb.at("t_hi").get<double>();
      b.seed = jb.value("seed", std::uint64_t{0});
      b.updates = jb.value("updates", 0);
      b.status = jb.value("status", std::string("ok")) == "ok" ? BlockStatus::Ok : BlockStatus::Failed;
      b.error = jb.value("error", std::string{});
      b.initial_loss = jb.value("initial_loss", 0.0);
      b.final_loss = jb.value("final_loss", 0.0);
      b.wall_seconds = jb.value("wall_seconds", 0.0);
      const auto& model = jb.at("model");
      const auto mk = model.at("kind").get<std::string>();
      if (mk == "gaussian") {
        GaussianOracle<double> o;
        const auto mean = model.at("mean").get<std::vector<double>>();
        if (mean.size() != 2) throw FormatError("manifest: gaussian mean must have two entries");
        o.mean = Vector2d(mean[0], mean[1]);
        o.var = model.at("var").get<double>();
        b.oracle = o;
      } else if (mk == "mlp") {
        b.checkpoint = model.at("checkpoint").get<std::string>();
        b.spec = spec_from_json(model.at("spec"));
      } else {
        throw FormatError("manifest: unknown block model kind '" + mk + "'");
      }
      m.blocks.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  if (m.blocks.size() != m.partition.block_count()) {
    throw FormatError("manifest: block count does not match partition");
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("manifest: cannot open " + path.string() + " for writing");
  out << manifest_to_json(m);
  if (!out) throw FormatError("manifest: write failed");
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("manifest: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return manifest_from_json(buf.str());
}

ComposedModel load_composed_model(const Manifest& m, const std::filesystem::path& base_dir) {
  if (!m.ok()) throw FormatError("manifest: contains failed blocks");
  ComposedModel model;
  model.schedule = m.schedule;
  model.t_floor = m.config.t_floor;
  const bool grid = m.partition.kind == PartitionKind::Grid;
  model.mode = grid ? FlowMode::PiecewiseConstant : FlowMode::Interval;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const auto& b = m.blocks[i];
    FlowBlock fb;
    fb.t_lo = std::max(m.partition.boundaries[i], model.t_floor);
    fb.t_hi = m.partition.boundaries[i + 1];
    fb.anchor = fb.t_hi;
    if (b.oracle) {
      fb.model = std::make_shared<GaussianNoiseModel>(*b.oracle, m.schedule);
    } else {
      auto ck = load_checkpoint(base_dir / b.checkpoint);
      if (!(ck.spec == b.spec)) throw FormatError("manifest: checkpoint spec differs for block " + std::to_string(i));
      if (ck.spec.time_conditioned == grid) {
        throw FormatError("manifest: block " + std::to_string(i) + " has the wrong time conditioning for its partition");
      }
      fb.model = std::make_shared<MlpNoiseModel>(ck.spec, std::move(ck.params));
    }
    model.blocks.push_back(std::move(fb));
  }
  model.validate();
  return model;
}

ComposedModel load_composed_model(const std::filesystem::path& manifest_path) {
  return load_composed_model(read_manifest(manifest_path), manifest_path.parent_path());
}

}  // namespace psm
