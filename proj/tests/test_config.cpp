#include "disco/config.hpp"

#include "disco/errors.hpp"
#include "disco/jsonl.hpp"
#include "disco/losses.hpp"
#include "disco/train.hpp"

#include <doctest.h>

#include <fstream>
#include <string>

#include "test_util.hpp"

namespace config = disco::config;
using disco::Json;

namespace {

void expect_parse_error(const std::string& text, const std::string& needle) {
  try {
    config::parse_sections_text(text, "test.conf");
    FAIL_CHECK("expected a parse error for: ", text);
  } catch (const disco::Error& err) {
    CHECK(err.kind() == disco::ErrorKind::parse);
    CHECK_MESSAGE(std::string(err.what()).find(needle) != std::string::npos,
                  "message was: ", err.what());
  }
}

}  // namespace

TEST_CASE("the sectioned dialect parses keys, sections, comments and strings") {
  const std::string text =
      "# a full example\n"
      "lr = 0.05\n"
      "epochs = 24   # trailing comment\n"
      "stage = \"sft\"\n"
      "note = \"quoted # not a comment\"\n"
      "escaped = \"a \\\" b\"\n"
      "flag = true\n"
      "\n"
      "[model]\n"
      "vocab = 256\n"
      "\n"
      "[loss]\n"
      "gamma = 5.4\n";
  const Json doc = config::parse_sections_text(text, "test.conf");
  CHECK(doc.at("lr") == 0.05);
  CHECK(doc.at("epochs") == 24);
  CHECK(doc.at("stage") == "sft");
  CHECK(doc.at("note") == "quoted # not a comment");
  CHECK(doc.at("escaped") == "a \" b");
  CHECK(doc.at("flag") == true);
  CHECK(doc.at("model").at("vocab") == 256);
  CHECK(doc.at("loss").at("gamma") == 5.4);
}

TEST_CASE("dialect errors carry the offending line number") {
  expect_parse_error("a = 1\nb = 2\na2@ = 3\n", "test.conf:3");
  expect_parse_error("a = 1\na = 2\n", "duplicate key 'a'");
  expect_parse_error("just words\n", "expected 'key = value'");
  expect_parse_error("[model\n", "unterminated section");
  expect_parse_error("[mo del]\n", "bad section name");
  expect_parse_error("v = nope\n", "cannot parse value");
  expect_parse_error("v =\n", "missing value");
  expect_parse_error("x = 1\n[x]\n", "both a key and a section");
}

TEST_CASE("config files load as json or as the dialect by extension") {
  testutil::TempDir dir;
  const auto json_path = dir.file("train.json");
  std::ofstream(json_path) << R"({"lr": 0.02, "model": {"vocab": 64}})";
  const Json from_json = config::load_config_file(json_path);
  CHECK(from_json.at("lr") == 0.02);
  CHECK(from_json.at("model").at("vocab") == 64);

  const auto bad_json = dir.file("list.json");
  std::ofstream(bad_json) << "[1, 2, 3]";
  CHECK_THROWS_AS(config::load_config_file(bad_json), disco::Error);

  const auto conf_path = dir.file("train.conf");
  std::ofstream(conf_path) << "lr = 0.02\n[model]\nvocab = 64\n";
  CHECK(config::load_config_file(conf_path) == from_json);
}

TEST_CASE("merging overlays sections and replaces scalars") {
  const Json base{{"lr", 0.05}, {"model", {{"vocab", 256}, {"d_model", 64}}}};
  const Json patch{{"model", {{"vocab", 16}}}, {"epochs", 3}};
  const Json merged = config::merge_config(base, patch);
  CHECK(merged.at("lr") == 0.05);
  CHECK(merged.at("epochs") == 3);
  CHECK(merged.at("model").at("vocab") == 16);
  CHECK(merged.at("model").at("d_model") == 64);
  CHECK(config::merge_config(base, Json(7)) == 7);
}

TEST_CASE("training configs reject unknown keys wherever they hide") {
  CHECK_THROWS_AS(config::train_config_from_json(Json{{"lr_rate", 0.1}}), disco::Error);
  CHECK_THROWS_AS(config::train_config_from_json(Json{{"model", {{"width", 64}}}}),
                  disco::Error);
  CHECK_THROWS_AS(config::train_config_from_json(Json{{"loss", {{"beta2", 1.0}}}}),
                  disco::Error);
  CHECK_THROWS_AS(config::train_config_from_json(Json::array()), disco::Error);
  CHECK_THROWS_AS(config::train_config_from_json(Json{{"seed", 1.5}}), disco::Error);
  CHECK_THROWS_AS(config::train_config_from_json(Json{{"stage", "adamw"}}), disco::Error);
  CHECK_THROWS_AS(
      config::train_config_from_json(Json{{"loss", {{"delta_norm", "codeish"}}}}),
      disco::Error);
}

TEST_CASE("an empty object yields the documented defaults") {
  const auto built = config::train_config_from_json(Json::object());
  CHECK(built.stage == disco::train::Stage::sft);
  CHECK(built.lr == 0.05);
  CHECK(built.batch_size == 8);
  CHECK(built.momentum == 0.9);
  CHECK(built.clip_norm == 1.0);
  CHECK(built.model.vocab == 256);
  CHECK(built.model.d_model == 64);
  CHECK(built.model.n_layers == 2);
  CHECK(built.model.n_heads == 4);
  CHECK(built.model.context == 512);
  CHECK(built.lpo.beta == 10.0);
  CHECK(built.lpo.gamma == 5.4);
  CHECK(built.lpo.alpha == 0.05);
  CHECK(built.lpo.delta_norm == disco::losses::DeltaNorm::code);
  CHECK(built.simpo.beta == 2.0);
  CHECK(built.simpo.gamma == 0.5);
  CHECK(built.dpo_beta == 0.1);
  CHECK(!built.allow_no_sft);
}

TEST_CASE("a customized config survives the json round trip") {
  disco::train::TrainConfig config;
  config.stage = disco::train::Stage::lpo;
  config.lr = 0.02;
  config.batch_size = 4;
  config.epochs = 7;
  config.seed = 99;
  config.momentum = 0.8;
  config.clip_norm = 5.0;
  config.sft_target = disco::train::SftTarget::minus_bare;
  config.allow_no_sft = true;
  config.log_every = 3;
  config.dpo_beta = 0.4;
  config.model = {32, 16, 1, 2, 128};
  config.lpo.beta = 8.0;
  config.lpo.gamma = 2.5;
  config.lpo.alpha = 0.01;
  config.lpo.delta_norm = disco::losses::DeltaNorm::full;
  config.simpo.beta = 3.0;
  config.simpo.gamma = 0.25;

  const auto back = config::train_config_from_json(config::train_config_to_json(config));
  CHECK(back.stage == config.stage);
  CHECK(back.lr == config.lr);
  CHECK(back.batch_size == config.batch_size);
  CHECK(back.epochs == config.epochs);
  CHECK(back.seed == config.seed);
  CHECK(back.momentum == config.momentum);
  CHECK(back.clip_norm == config.clip_norm);
  CHECK(back.sft_target == config.sft_target);
  CHECK(back.allow_no_sft == config.allow_no_sft);
  CHECK(back.log_every == config.log_every);
  CHECK(back.dpo_beta == config.dpo_beta);
  CHECK(back.model == config.model);
  CHECK(back.lpo.beta == config.lpo.beta);
  CHECK(back.lpo.gamma == config.lpo.gamma);
  CHECK(back.lpo.alpha == config.lpo.alpha);
  CHECK(back.lpo.delta_norm == config.lpo.delta_norm);
  CHECK(back.simpo.beta == config.simpo.beta);
  CHECK(back.simpo.gamma == config.simpo.gamma);
}
