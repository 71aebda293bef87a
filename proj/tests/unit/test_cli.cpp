#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "fixtures.hpp"
#include "lungcadex/cli.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/nn/checkpoint.hpp"

using namespace lungcadex;
using namespace lungcadex::cli;

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  return nlohmann::json::parse(in);
}

std::vector<std::string> quiet(std::vector<std::string> args) {
  args.insert(args.begin(), {"--log-level", "off"});
  return args;
}

}  // namespace

TEST_CASE("exceptions map onto exit codes") {
  CHECK(exit_code_for(ConfigError("x")) == kExitConfig);
  CHECK(exit_code_for(ParameterError("x")) == kExitConfig);
  CHECK(exit_code_for(StateError("x")) == kExitConfig);
  CHECK(exit_code_for(InputError("x")) == kExitData);
  CHECK(exit_code_for(ValidationError("x")) == kExitData);
  CHECK(exit_code_for(MissingFileError("x")) == kExitData);
  CHECK(exit_code_for(SchemaError("x")) == kExitData);
  CHECK(exit_code_for(DanglingReferenceError("x")) == kExitData);
  CHECK(exit_code_for(TrainingError("x")) == kExitTraining);
  CHECK(exit_code_for(UndefinedMetricError("x")) == kExitUndefinedMetric);
  CHECK(exit_code_for(ContractError("x")) == kExitRuntime);
  CHECK(exit_code_for(std::runtime_error("x")) == kExitRuntime);
}

TEST_CASE("usage errors") {
  CHECK(run(quiet({})) == kExitUsage);
  CHECK(run(quiet({"bogus"})) == kExitUsage);
  CHECK(run(quiet({"phantom", "--volumes", "many"})) == kExitUsage);
  CHECK(run(quiet({"evaluate", "--k"})) == kExitUsage);
  CHECK(run(quiet({"--help"})) == kExitOk);
}

TEST_CASE("missing required settings are configuration errors") {
  const auto dir = testing::scratch_dir("cli_missing");
  CHECK(run(quiet({"phantom"})) == kExitConfig);
  CHECK(run(quiet({"train-cadx", "--out", dir.string()})) == kExitConfig);
  CHECK(run(quiet({"evaluate", "--manifest", testing::shared_phantom().manifest.string(), "--out", dir.string()})) ==
        kExitConfig);
  const auto summary = read_json(dir / "summary.json");
  CHECK(summary.at("exit_code") == kExitConfig);
  CHECK(summary.contains("error"));
  CHECK(run(quiet({"train-cade", "--profile", "huge", "--out", dir.string()})) == kExitUsage);
  {
    std::ofstream cfg(dir / "huge.json");
    cfg << R"({"profile": "huge"})";
  }
  CHECK(run(quiet({"train-cade", "--config", (dir / "huge.json").string(), "--out", dir.string()})) == kExitConfig);
}

TEST_CASE("missing inputs are data errors") {
  const auto dir = testing::scratch_dir("cli_data");
  CHECK(run(quiet({"ingest-check", "--manifest", (dir / "absent.json").string(), "--out", dir.string()})) ==
        kExitData);
  CHECK(run(quiet({"train-clf", "--manifest", testing::shared_phantom().manifest.string(), "--cadx",
                   (dir / "absent.ckpt").string(), "--out", dir.string()})) == kExitData);
}

TEST_CASE("explicit flags override the config file, which overrides the profile") {
  const auto dir = testing::scratch_dir("cli_precedence");
  {
    std::ofstream cfg(dir / "config.json");
    cfg << R"({"phantom": {"num_volumes": 3, "seed": 5, "dims": [8, 48, 48]}, "threads": 2})";
  }
  const auto out = dir / "out";
  CHECK(run(quiet({"phantom", "--config", (dir / "config.json").string(), "--volumes", "2", "--out", out.string()})) ==
        kExitOk);
  const auto summary = read_json(out / "summary.json");
  const auto& phantom = summary.at("config").at("phantom");
  CHECK(phantom.at("num_volumes") == 2);
  CHECK(phantom.at("seed") == 5);
  CHECK(phantom.at("dims") == nlohmann::json::array({8, 48, 48}));
  CHECK(summary.at("config").at("threads") == 2);
  CHECK(summary.at("config").at("profile") == "toy");
  CHECK(summary.at("metrics").at("n_volumes") == 2);
  {
    std::ofstream cfg(dir / "bad.json");
    cfg << "{not json";
  }
  CHECK(run(quiet({"phantom", "--config", (dir / "bad.json").string(), "--out", out.string()})) == kExitConfig);
}

TEST_CASE("summary records the command, configuration and artifacts") {
  const auto dir = testing::scratch_dir("cli_summary");
  const auto ph = dir / "phantom";
  REQUIRE(run(quiet({"phantom", "--volumes", "6", "--out", ph.string()})) == kExitOk);
  const auto ing = dir / "ingest";
  REQUIRE(run(quiet({"ingest-check", "--manifest", (ph / "manifest.json").string(), "--out", ing.string()})) ==
          kExitOk);
  const auto summary = read_json(ing / "summary.json");
  for (const char* key : {"command", "config", "metrics", "artifacts", "exit_code", "wall_time_seconds"}) {
    CHECK(summary.contains(key));
  }
  CHECK(summary.at("command") == "ingest-check");
  CHECK(summary.at("exit_code") == 0);
  CHECK(summary.at("wall_time_seconds").get<double>() >= 0.0);
  for (const auto& [name, path] : summary.at("artifacts").items()) {
    CHECK_MESSAGE(std::filesystem::exists(path.get<std::string>()), name);
  }
}

TEST_CASE("training starts from imported encoder weights") {
  const auto dir = testing::scratch_dir("cli_init_weights");
  const cadx::AlignedEncoders donor(cadx::AlignConfig::toy(), 42);
  nn::ParameterStore encoder_only;
  for (const auto& e : donor.parameters().entries()) {
    if (e.name.rfind(cadx::kPatchEncoderPrefix, 0) == 0) encoder_only.create(e.name, e.var.value());
  }
  nn::write_checkpoint(dir / "encoder.ckpt", {}, encoder_only);
  const auto out = dir / "cadx";
  REQUIRE(run(quiet({"train-cadx", "--manifest", testing::shared_phantom().manifest.string(), "--epochs", "0",
                     "--init-weights", (dir / "encoder.ckpt").string(), "--out", out.string()})) == kExitOk);
  const cadx::AlignedEncoders trained = cadx::load_cadx(out / "cadx.ckpt");
  CHECK(trained.parameters().checksum(cadx::kPatchEncoderPrefix) ==
        donor.parameters().checksum(cadx::kPatchEncoderPrefix));
  CHECK(read_json(out / "summary.json").at("metrics").at("imported_tensors") == encoder_only.entries().size());
  CHECK(run(quiet({"train-cadx", "--manifest", testing::shared_phantom().manifest.string(), "--init-weights",
                   (dir / "absent.ckpt").string(), "--out", out.string()})) == kExitData);
}
