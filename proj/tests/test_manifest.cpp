#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "psm/flow.hpp"
#include "psm/manifest.hpp"
#include "psm/mlp_io.hpp"

using namespace psm;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("psm_test_manifest_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

Manifest oracle_manifest() {
  Manifest m;
  m.label = "oracle";
  m.partition = BlockPartition::intervals({0, 0.4, 1});
  for (int i = 0; i < 2; ++i) {
    ManifestBlock b;
    b.index = i;
    b.t_lo = i == 0 ? m.config.t_floor : 0.4;
    b.t_hi = i == 0 ? 0.4 : 1.0;
    b.oracle = GaussianOracle<double>{Vector2d(2, 0), 0.25};
    m.blocks.push_back(b);
  }
  return m;
}

}  // namespace

TEST_CASE("manifest JSON round trip") {
  auto m = oracle_manifest();
  m.blocks[1].oracle.reset();
  m.blocks[1].checkpoint = "blocks/block_0001.psm";
  m.blocks[1].spec = MlpSpec::score_net(true);
  m.blocks[1].seed = 0xdeadbeefcafe;
  m.blocks[1].final_loss = 0.123456789012345;
  m.config.lr = 3e-4;
  m.dataset = "train.txt";

  const auto back = manifest_from_json(manifest_to_json(m));
  CHECK(back.label == "oracle");
  CHECK(back.mode == TrainMode::Tpsm);
  CHECK(back.partition.boundaries == m.partition.boundaries);
  CHECK(back.config.lr == 3e-4);
  CHECK(back.dataset == "train.txt");
  REQUIRE(back.blocks.size() == 2);
  CHECK(back.blocks[0].oracle->mean == Vector2d(2, 0));
  CHECK(back.blocks[1].spec == MlpSpec::score_net(true));
  CHECK(back.blocks[1].seed == 0xdeadbeefcafe);
  CHECK(back.blocks[1].final_loss == 0.123456789012345);
  CHECK(manifest_to_json(back) == manifest_to_json(m));
}

TEST_CASE("malformed manifests are rejected") {
  CHECK_THROWS_AS(manifest_from_json("{"), FormatError);
  CHECK_THROWS_AS(manifest_from_json("{}"), FormatError);

  auto m = oracle_manifest();
  m.blocks.pop_back();
  CHECK_THROWS_AS(manifest_from_json(manifest_to_json(m)), FormatError);

  auto text = manifest_to_json(oracle_manifest());
  text.replace(text.find("\"format_version\": 1"), 19, "\"format_version\": 9");
  CHECK_THROWS_AS(manifest_from_json(text), FormatError);

  CHECK_THROWS_AS(read_manifest("/nonexistent/manifest.json"), FormatError);
}

TEST_CASE("composed model from oracle blocks") {
  const auto dir = fresh_dir("oracle");
  write_manifest(dir / "manifest.json", oracle_manifest());
  const auto model = load_composed_model(dir / "manifest.json");
  CHECK(model.mode == FlowMode::Interval);
  REQUIRE(model.blocks.size() == 2);
  CHECK(model.blocks[0].t_lo == model.t_floor);
  CHECK(model.blocks[1].t_lo == 0.4);

  const auto single = ComposedModel::single(std::make_shared<GaussianNoiseModel>(GaussianOracle<double>{Vector2d(2, 0), 0.25}, Schedule<double>{}));
  const auto cfg = IntegrationConfig::likelihood(Method::Rk4, 100);
  CHECK(log_likelihood(model, Vector2d(1, 1), cfg) == doctest::Approx(log_likelihood(single, Vector2d(1, 1), cfg)).epsilon(1e-12));
}

TEST_CASE("composed model from checkpoints") {
  const auto dir = fresh_dir("mlp");
  std::filesystem::create_directories(dir / "blocks");
  Manifest m;
  m.mode = TrainMode::Dpsm;
  m.partition = BlockPartition::grid(2);
  const MlpSpec spec = MlpSpec::score_net(false);
  for (int i = 0; i < 2; ++i) {
    Rng rng{std::uint64_t(i)};
    const auto params = init_params<double>(spec, rng);
    ManifestBlock b;
    b.index = i;
    b.t_lo = b.t_hi = 0.5 * (i + 1);
    b.checkpoint = "blocks/b" + std::to_string(i) + ".psm";
    b.spec = spec;
    save_checkpoint(dir / b.checkpoint, spec, params);
    m.blocks.push_back(b);
  }
  write_manifest(dir / "manifest.json", m);
  const auto model = load_composed_model(dir / "manifest.json");
  CHECK(model.mode == FlowMode::PiecewiseConstant);
  CHECK(model.blocks[0].anchor == 0.5);
  CHECK(model.blocks[1].anchor == 1.0);

  SUBCASE("failed blocks cannot be loaded") {
    auto bad = m;
    bad.blocks[1].status = BlockStatus::Failed;
    CHECK_THROWS_AS(load_composed_model(bad, dir), FormatError);
  }
  SUBCASE("spec mismatch is detected") {
    auto bad = m;
    bad.blocks[0].spec = MlpSpec{{2, 10, 2}, Activation::Elu, false};
    CHECK_THROWS_AS(load_composed_model(bad, dir), FormatError);
  }
  SUBCASE("time-conditioned nets do not fit a grid") {
    auto bad = m;
    const MlpSpec tc = MlpSpec::score_net(true);
    Rng rng(0);
    save_checkpoint(dir / "blocks/tc.psm", tc, init_params<double>(tc, rng));
    bad.blocks[0].checkpoint = "blocks/tc.psm";
    bad.blocks[0].spec = tc;
    CHECK_THROWS_AS(load_composed_model(bad, dir), FormatError);
  }
  SUBCASE("missing checkpoint") {
    std::filesystem::remove(dir / "blocks/b1.psm");
    CHECK_THROWS(load_composed_model(m, dir));
  }
}
