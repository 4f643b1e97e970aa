#include <doctest.h>

#include <filesystem>

#include "stagenet/checkpoint.hpp"
#include "stagenet/error.hpp"

using namespace stagenet;
using nlohmann::json;

namespace {

Checkpoint sample() {
  ModelConfig c;
  c.n_features = 3;
  c.hidden = 8;
  c.chunk = 2;
  c.window = 3;
  StageNetModel model(c);
  Rng rng(5);
  model.initialize(rng);
  for (Param* p : model.parameters()) {
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      p->adam_m[i] = uniform(rng, -1, 1) * 1e-3;
      p->adam_v[i] = uniform(rng, 0, 1) * 1e-6;
    }
  }
  return capture(model, 17, NormStats{{0.1, 1.0 / 3.0, -2.5}, {1.0, 0.7, 1e-6}});
}

}  // namespace

TEST_CASE("save, load, save is byte-identical") {
  const Checkpoint a = sample();
  const std::string text = serialize_checkpoint(a);
  const Checkpoint b = parse_checkpoint(text);
  CHECK(serialize_checkpoint(b) == text);
  CHECK(b.step == 17);
  REQUIRE(b.norm);
  CHECK(b.norm->mean[1] == 1.0 / 3.0);

  const auto dir = std::filesystem::temp_directory_path() / "stagenet_test_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(a, dir / "a.json");
  save_checkpoint(load_checkpoint(dir / "a.json"), dir / "b.json");
  CHECK(serialize_checkpoint(load_checkpoint(dir / "b.json")) == text);
  std::filesystem::remove_all(dir);
}

TEST_CASE("restored model predicts identically") {
  const Checkpoint ckpt = sample();
  StageNetModel model(ckpt.config);
  restore(model, ckpt);
  CHECK(serialize_checkpoint(capture(model, 17, ckpt.norm)) == serialize_checkpoint(ckpt));
}

TEST_CASE("shape edits name the parameter") {
  json j = json::parse(serialize_checkpoint(sample()));
  j["parameters"]["cell.forget.w"]["shape"] = {4, 4};
  try {
    parse_checkpoint(j.dump());
    FAIL("expected CheckpointError");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("cell.forget.w") != std::string::npos);
  }

  // Consistent shape and data, but not what the config builds.
  json k = json::parse(serialize_checkpoint(sample()));
  k["config"]["hidden"] = 6;
  k["config"]["chunk"] = 3;
  CHECK_THROWS_AS(parse_checkpoint(k.dump()), CheckpointError);
}

TEST_CASE("version, syntax and config errors") {
  json j = json::parse(serialize_checkpoint(sample()));
  j["format_version"] = 0;
  CHECK_THROWS_AS(parse_checkpoint(j.dump()), CheckpointError);
  CHECK_THROWS_AS(parse_checkpoint("{\"format_version\": 1, "), ParseError);
  CHECK_THROWS_AS(parse_checkpoint("[]"), ParseError);
  json k = json::parse(serialize_checkpoint(sample()));
  k["config"]["colour"] = "blue";
  CHECK_THROWS_AS(parse_checkpoint(k.dump()), ConfigError);
  json m = json::parse(serialize_checkpoint(sample()));
  m.erase("parameters");
  CHECK_THROWS_AS(parse_checkpoint(m.dump()), ParseError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.json"), CheckpointError);
}

TEST_CASE("config json round trip") {
  ModelConfig c;
  c.hidden = 12;
  c.chunk = 3;
  c.variant = ModelVariant::kLstm;
  c.seed = 0xFFFFFFFFFFFFull;
  ModelConfig d;
  merge_config(d, config_to_json(c));
  CHECK(config_to_json(d) == config_to_json(c));
  CHECK_THROWS_AS(merge_config(d, json{{"hidden", "big"}}), ConfigError);
  CHECK_THROWS_AS(merge_config(d, json::array()), ConfigError);
}
