// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "evomerge/archive.hpp"
#include "evomerge/merge_ops.hpp"
#include "evomerge/rng.hpp"
#include "evomerge/subprocess.hpp"
#include "oracles.hpp"

using namespace evomerge;
namespace fs = std::filesystem;

namespace {

const char* kCli = EVOMERGE_CLI_PATH;

std::string work_dir() {
  auto dir = fs::temp_directory_path() / "evomerge_cli_tests";
  fs::create_directories(dir);
  return dir.string();
}

std::string wpath(const std::string& name) {
  return (fs::path(work_dir()) / name).string();
}

std::string write_file(const std::string& name, const std::string& content) {
  auto path = wpath(name);
  std::ofstream out(path);
  out << content;
  return path;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ProcessResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), kCli);
  return run_process(args, "", 120.0);
}

}  // namespace

TEST_CASE("cli version") {
  auto r = cli({"--version"});
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("evomerge") != std::string::npos);
}

TEST_CASE("cli without a subcommand fails with usage") {
  auto r = cli({});
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli unknown flag is a usage error") {
  auto r = cli({"score", "--bogus"});
  CHECK(r.exit_code == 2);
}

TEST_CASE("cli diff") {
  SplitMix64 rng(21);
  auto base_values = oracle::random_grid_values(rng, 16);
  auto model_values = oracle::random_grid_values(rng, 16);
  TensorMap base = oracle::map_from_flat(base_values);
  TensorMap model = oracle::map_from_flat(model_values);
  auto base_path = wpath("diff_base.safetensors");
  auto model_path = wpath("diff_model.safetensors");
  save_archive(base, base_path);
  save_archive(model, model_path);

  SECTION("writes model minus base") {
    auto out = wpath("diff_out.safetensors");
    auto r = cli({"diff", "--base", base_path, "--model", model_path, "--out", out});
    REQUIRE(r.exit_code == 0);
    TensorMap tau = load_archive(out);
    auto expected = oracle::naive_task_vector(model_values, base_values);
    CHECK(oracle::flatten(tau) == expected);
  }
  SECTION("alignment mismatch exits 2") {
    TensorMap other;
    Tensor t{{2}, {0.0f, 0.0f}};
    other.set("other_key", t);
    auto other_path = wpath("diff_other.safetensors");
    save_archive(other, other_path);
    auto r = cli({"diff", "--base", base_path, "--model", other_path,
                  "--out", wpath("unused.safetensors")});
    CHECK(r.exit_code == 2);
  }
  SECTION("empty merge domain exits 2") {
    auto r = cli({"diff", "--base", base_path, "--model", model_path,
                  "--out", wpath("unused.safetensors"), "--exclude", "*"});
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("cli merge") {
  SplitMix64 rng(22);
  auto init_values = oracle::random_grid_values(rng, 32);
  auto ft_values = oracle::random_grid_values(rng, 32);
  TensorMap init = oracle::map_from_flat(init_values);
  TensorMap ft = oracle::map_from_flat(ft_values);
  auto init_path = wpath("merge_base.safetensors");
  auto ft_path = wpath("merge_ft.safetensors");
  save_archive(init, init_path);
  save_archive(ft, ft_path);

  SECTION("identity config recovers the fine-tuned model bit for bit") {
    auto config = write_file("merge_identity.json",
                             R"({"alpha": 0, "k": [1.0], "c": [1.0], "lambda": 1.0})");
    auto out = wpath("merge_out.safetensors");
    auto r = cli({"merge", "--config", config, "--base", init_path,
                  "--out", out, ft_path});
    REQUIRE(r.exit_code == 0);
    CHECK(oracle::flatten(load_archive(out)) == ft_values);
    CHECK(fs::exists(out + ".manifest.json"));
  }
  SECTION("repeated runs are byte identical") {
    auto config = write_file("merge_seeded.json",
                             R"({"alpha": 0.3, "k": [0.8], "c": [1.0], "lambda": 1.0, "seed": 9})");
    auto out1 = wpath("merge_det1.safetensors");
    auto out2 = wpath("merge_det2.safetensors");
    REQUIRE(cli({"merge", "--config", config, "--base", init_path, "--out", out1, ft_path}).exit_code == 0);
    REQUIRE(cli({"merge", "--config", config, "--base", init_path, "--out", out2, ft_path}).exit_code == 0);
    CHECK(file_bytes(out1) == file_bytes(out2));
  }
  SECTION("--set overrides a config field") {
    auto config = write_file("merge_override.json",
                             R"({"alpha": 0, "k": [1.0], "c": [1.0], "lambda": 1.0})");
    auto out = wpath("merge_lambda0.safetensors");
    auto r = cli({"merge", "--config", config, "--base", init_path,
                  "--out", out, ft_path, "--set", "lambda=0"});
    REQUIRE(r.exit_code == 0);
    CHECK(oracle::flatten(load_archive(out)) == init_values);
  }
  SECTION("task count mismatch exits 2") {
    auto config = write_file("merge_two_tasks.json",
                             R"({"alpha": 0, "k": [1.0, 1.0], "c": [1.0, 1.0], "lambda": 1.0})");
    auto r = cli({"merge", "--config", config, "--base", init_path,
                  "--out", wpath("unused.safetensors"), ft_path});
    CHECK(r.exit_code == 2);
  }
  SECTION("slerp needs exactly two models") {
    auto config = write_file("slerp.json", R"({"t": 0.5})");
    auto r = cli({"merge", "--config", config, "--base", init_path,
                  "--method", "slerp", "--out", wpath("unused.safetensors"),
                  ft_path, ft_path, ft_path});
    CHECK(r.exit_code == 2);
  }
  SECTION("shape mismatch between base and model exits 3") {
    TensorMap small;
    Tensor t{{2}, {0.0f, 0.0f}};
    small.set("w", t);
    auto small_path = wpath("merge_small.safetensors");
    save_archive(small, small_path);
    auto config = write_file("merge_identity2.json",
                             R"({"alpha": 0, "k": [1.0], "c": [1.0], "lambda": 1.0})");
    auto r = cli({"merge", "--config", config, "--base", init_path,
                  "--out", wpath("unused.safetensors"), small_path});
    CHECK(r.exit_code == 3);
  }
}

TEST_CASE("cli score") {
  SECTION("identical files") {
    auto hyp = write_file("score_hyp.txt", "a b c d\ne f g h\n");
    auto ref = write_file("score_ref.txt", "a b c d\ne f g h\n");
    auto r = cli({"score", "--hyp", hyp, "--ref", ref});
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("bleu1").get<double>() == 1.0);
    CHECK(j.at("bleu4").get<double>() == 1.0);
    CHECK(j.at("rouge_l").get<double>() == 1.0);
    CHECK_THAT(j.at("meteor").get<double>(),
               Catch::Matchers::WithinAbs(0.9921875, 1e-12));
  }
  SECTION("line count mismatch exits 2") {
    auto hyp = write_file("score_hyp2.txt", "a\nb\n");
    auto ref = write_file("score_ref2.txt", "a\n");
    CHECK(cli({"score", "--hyp", hyp, "--ref", ref}).exit_code == 2);
  }
  SECTION("character tokenizer") {
    auto hyp = write_file("score_hyp3.txt", "abcd\n");
    auto ref = write_file("score_ref3.txt", "acbd\n");
    auto r = cli({"score", "--hyp", hyp, "--ref", ref, "--tokenizer", "char"});
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(nlohmann::json::parse(r.out).at("rouge_l").get<double>(),
               Catch::Matchers::WithinAbs(0.75, 1e-12));
  }
}

TEST_CASE("cli inspect") {
  SECTION("reports densities, weights, and shares") {
    auto config = write_file(
        "inspect.json",
        R"({"alpha": 0.2, "k": [0.8, 0.4], "c": [0.5, 1.5], "lambda": 1.5, "seed": 7})");
    auto r = cli({"inspect", "--config", config, "--json"});
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("alpha").get<double>() == 0.2);
    CHECK(j.at("lambda").get<double>() == 1.5);
    REQUIRE(j.at("models").size() == 2);
    CHECK(j["models"][0].at("density").get<double>() == 0.8);
    CHECK(j["models"][0].at("weight").get<double>() == 0.5);
    CHECK(j["models"][0].at("weight_share").get<double>() == 0.25);
    CHECK(j["models"][1].at("weight_share").get<double>() == 0.75);
  }
  SECTION("zero total weight gives zero shares") {
    auto config = write_file("inspect_zero.json",
                             R"({"k": [0.5], "c": [0.0], "lambda": 1.0})");
    auto r = cli({"inspect", "--config", config, "--json"});
    REQUIRE(r.exit_code == 0);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["models"][0].at("weight_share").get<double>() == 0.0);
  }
  SECTION("invalid config exits 2") {
    auto config = write_file("inspect_bad.json", R"({"k": [2.0], "c": [1.0]})");
    CHECK(cli({"inspect", "--config", config}).exit_code == 2);
  }
}

TEST_CASE("cli gen-fixture is deterministic") {
  auto dir1 = wpath("fixture1");
  auto dir2 = wpath("fixture2");
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  REQUIRE(cli({"gen-fixture", "--seed", "5", "--tasks", "2", "--features", "4",
               "--samples", "12", "--out-dir", dir1}).exit_code == 0);
  REQUIRE(cli({"gen-fixture", "--seed", "5", "--tasks", "2", "--features", "4",
               "--samples", "12", "--out-dir", dir2}).exit_code == 0);
  int files = 0;
  for (const auto& entry : fs::directory_iterator(dir1)) {
    auto name = entry.path().filename().string();
    // fitness.json embeds the (different) output directories by design
    if (name != "fitness.json") {
      CHECK(file_bytes(entry.path().string()) ==
            file_bytes((fs::path(dir2) / name).string()));
    }
    ++files;
  }
  CHECK(files == 7);  // base + 2*(model,data) + eval + fitness.json
  CHECK(fs::exists(fs::path(dir2) / "fitness.json"));
}

TEST_CASE("cli optimize small run is deterministic") {
  SplitMix64 rng(77);
  auto init_values = oracle::random_grid_values(rng, 24);
  auto ft_values = oracle::random_grid_values(rng, 24);
  TensorMap init = oracle::map_from_flat(init_values);
  TensorMap ft = oracle::map_from_flat(ft_values);
  auto init_path = wpath("opt_base.safetensors");
  auto ft_path = wpath("opt_ft.safetensors");
  save_archive(init, init_path);
  save_archive(ft, ft_path);
  // target the fine-tuned model itself so the optimum is known
  auto target_path = wpath("opt_target.safetensors");
  save_archive(ft, target_path);

  auto run = [&](const std::string& out_dir) {
    nlohmann::json config{
        {"base", init_path},
        {"models", {ft_path}},
        {"fitness", {{"kind", "vector_target"}, {"target", target_path}}},
        {"merge", {{"seed", 11}}},
        {"cma", {{"seed", 3}, {"max_generations", 5}}},
        {"out_dir", out_dir}};
    auto path = write_file("opt_config_" + fs::path(out_dir).filename().string() + ".json",
                           config.dump());
    return cli({"optimize", "--config", path, "--jobs", "2"});
  };

  auto dir1 = wpath("opt_run1");
  auto dir2 = wpath("opt_run2");
  auto r1 = run(dir1);
  auto r2 = run(dir2);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  CHECK(file_bytes((fs::path(dir1) / "history.jsonl").string()) ==
        file_bytes((fs::path(dir2) / "history.jsonl").string()));
  CHECK(file_bytes((fs::path(dir1) / "best_merged.safetensors").string()) ==
        file_bytes((fs::path(dir2) / "best_merged.safetensors").string()));
  auto s1 = nlohmann::json::parse(r1.out);
  auto s2 = nlohmann::json::parse(r2.out);
  CHECK(s1.at("best_fitness") == s2.at("best_fitness"));
  CHECK(s1.at("generations").get<int>() == 5);
  CHECK(fs::exists(fs::path(dir1) / "best_config.json"));
  CHECK(fs::exists(fs::path(dir1) / "checkpoint.json"));
  CHECK(fs::exists(fs::path(dir1) / "manifest.json"));
}
