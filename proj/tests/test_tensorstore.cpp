// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "evomerge/archive.hpp"
#include "evomerge/rng.hpp"
#include "evomerge/tensor_map.hpp"
#include "oracles.hpp"

using namespace evomerge;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "evomerge_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool bit_equal(const TensorMap& a, const TensorMap& b) {
  if (a.names() != b.names()) return false;
  for (const auto& [name, ta] : a.entries()) {
    const Tensor& tb = b.at(name);
    if (ta.shape != tb.shape) return false;
    if (std::memcmp(ta.data.data(), tb.data.data(), ta.data.size() * 4) != 0) {
      return false;
    }
  }
  return a.metadata() == b.metadata();
}

TensorMap random_map(std::uint64_t seed, int n_tensors) {
  SplitMix64 rng(seed);
  TensorMap map;
  for (int i = 0; i < n_tensors; ++i) {
    Tensor t;
    auto rows = static_cast<std::int64_t>(rng.next_u64() % 5 + 1);
    auto cols = static_cast<std::int64_t>(rng.next_u64() % 7 + 1);
    t.shape = {rows, cols};
    for (std::int64_t j = 0; j < rows * cols; ++j) {
      t.data.push_back(static_cast<float>(rng.next_double() * 4.0 - 2.0));
    }
    map.set("tensor_" + std::to_string(i), std::move(t));
  }
  return map;
}

}  // namespace

TEST_CASE("glob matching") {
  CHECK(glob_match("*", "anything"));
  CHECK(glob_match("a*", "abc"));
  CHECK_FALSE(glob_match("a*", "ba"));
  CHECK(glob_match("a?c", "abc"));
  CHECK_FALSE(glob_match("a?c", "abbc"));
  CHECK(glob_match("**", "model.layers.0.weight"));
  CHECK(glob_match("model.*.weight", "model.layers.weight"));
  CHECK(glob_match("", ""));
  CHECK_FALSE(glob_match("", "x"));
}

TEST_CASE("key filter include/exclude") {
  KeyFilter f;
  CHECK(f.selects("anything"));  // empty include matches all
  f.include_globs = {"llm.*"};
  CHECK(f.selects("llm.layer0"));
  CHECK_FALSE(f.selects("vision.layer0"));
  f.exclude_globs = {"*.bias"};
  CHECK_FALSE(f.selects("llm.layer0.bias"));
  CHECK(f.selects("llm.layer0.weight"));
}

TEST_CASE("tensor shape/data consistency enforced") {
  TensorMap m;
  Tensor t;
  t.shape = {2, 2};
  t.data = {1, 2, 3};
  CHECK_THROWS_AS(m.set("w", t), FormatError);
  t.data = {1, 2, 3, 4};
  m.set("w", t);
  CHECK(m.at("w").numel() == 4);

  Tensor scalar;  // empty shape = one element
  scalar.data = {7.0f};
  m.set("s", scalar);
  CHECK(m.at("s").numel() == 1);
}

TEST_CASE("single tensor round trip") {
  TensorMap m;
  Tensor t;
  t.shape = {2, 2};
  t.data = {1, 2, 3, 4};
  m.set("w", t);
  auto path = temp_path("single.safetensors");
  save_archive(m, path);
  TensorMap loaded = load_archive(path);
  CHECK(bit_equal(m, loaded));
}

TEST_CASE("round trip is bit exact for random maps") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    TensorMap m = random_map(seed, static_cast<int>(seed % 6));
    m.metadata()["seed"] = std::to_string(seed);
    auto path = temp_path("roundtrip.safetensors");
    save_archive(m, path);
    CHECK(bit_equal(m, load_archive(path)));
  }
}

TEST_CASE("serialization is canonical") {
  // same value, different construction order
  TensorMap a, b;
  Tensor t1{{2}, {1.0f, 2.0f}};
  Tensor t2{{3}, {3.0f, 4.0f, 5.0f}};
  a.set("alpha", t1);
  a.set("beta", t2);
  b.set("beta", t2);
  b.set("alpha", t1);
  auto pa = temp_path("canon_a.safetensors");
  auto pb = temp_path("canon_b.safetensors");
  save_archive(a, pa);
  save_archive(b, pb);
  CHECK(file_bytes(pa) == file_bytes(pb));

  // save(load(p)) reproduces p exactly for canonical files
  save_archive(load_archive(pa), pb);
  CHECK(file_bytes(pa) == file_bytes(pb));
}

TEST_CASE("empty map produces a valid archive") {
  auto path = temp_path("empty.safetensors");
  save_archive(TensorMap{}, path);
  CHECK(load_archive(path).empty());
}

TEST_CASE("malformed headers are rejected") {
  auto path = temp_path("bad.safetensors");

  SECTION("zero header length") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::uint64_t n = 0;
    out.write(reinterpret_cast<char*>(&n), 8);
    out.close();
    CHECK_THROWS_AS(load_archive(path), FormatError);
  }
  SECTION("header length past end of file") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::uint64_t n = 1000;
    out.write(reinterpret_cast<char*>(&n), 8);
    out << "{}";
    out.close();
    CHECK_THROWS_AS(load_archive(path), FormatError);
  }
  SECTION("truncated data region") {
    std::string header = R"({"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::uint64_t n = header.size();
    out.write(reinterpret_cast<char*>(&n), 8);
    out << header << "xx";  // 2 bytes instead of 16
    out.close();
    CHECK_THROWS_AS(load_archive(path), FormatError);
  }
  SECTION("duplicate tensor names") {
    std::string header =
        R"({"w":{"dtype":"F32","shape":[1],"data_offsets":[0,4]},)"
        R"("w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::uint64_t n = header.size();
    out.write(reinterpret_cast<char*>(&n), 8);
    out << header;
    float data[2] = {1.0f, 2.0f};
    out.write(reinterpret_cast<char*>(data), 8);
    out.close();
    CHECK_THROWS_WITH(load_archive(path),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  }
  SECTION("offset gap") {
    std::string header = R"({"w":{"dtype":"F32","shape":[1],"data_offsets":[4,8]}})";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::uint64_t n = header.size();
    out.write(reinterpret_cast<char*>(&n), 8);
    out << header;
    float data[2] = {1.0f, 2.0f};
    out.write(reinterpret_cast<char*>(data), 8);
    out.close();
    CHECK_THROWS_AS(load_archive(path), FormatError);
  }
  SECTION("unsupported dtype") {
    std::string header = R"({"w":{"dtype":"F16","shape":[2],"data_offsets":[0,4]}})";
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    std::uint64_t n = header.size();
    out.write(reinterpret_cast<char*>(&n), 8);
    out << header << "abcd";
    out.close();
    CHECK_THROWS_WITH(load_archive(path),
                      Catch::Matchers::ContainsSubstring("dtype"));
  }
}

TEST_CASE("non-finite values") {
  TensorMap m;
  Tensor t;
  t.shape = {2};
  t.data = {1.0f, std::numeric_limits<float>::quiet_NaN()};
  m.set("naughty", t);
  auto path = temp_path("nan.safetensors");
  CHECK_THROWS_WITH(save_archive(m, path),
                    Catch::Matchers::ContainsSubstring("naughty"));
  save_archive(m, path, /*allow_nonfinite=*/true);
  CHECK_THROWS_AS(load_archive(path), FormatError);
  TensorMap loaded = load_archive(path, /*allow_nonfinite=*/true);
  CHECK(std::isnan(loaded.at("naughty").data[1]));
}

TEST_CASE("aligned_keys") {
  TensorMap a, b;
  Tensor t{{2}, {1.0f, 2.0f}};
  a.set("alpha", t);
  a.set("beta", t);
  b.set("alpha", t);
  b.set("beta", t);

  SECTION("filter selects subset") {
    KeyFilter f{{"a*"}, {}};
    CHECK(aligned_keys({&a, &b}, f) == std::vector<std::string>{"alpha"});
  }
  SECTION("order insensitive in the map list") {
    CHECK(aligned_keys({&a, &b}) == aligned_keys({&b, &a}));
  }
  SECTION("missing key reported with map index") {
    TensorMap c;
    c.set("alpha", t);
    CHECK_THROWS_WITH(aligned_keys({&a, &c}),
                      Catch::Matchers::ContainsSubstring("map 1") &&
                          Catch::Matchers::ContainsSubstring("beta"));
  }
  SECTION("shape mismatch reported") {
    TensorMap c;
    c.set("alpha", t);
    Tensor wrong{{3}, {1.0f, 2.0f, 3.0f}};
    c.set("beta", wrong);
    CHECK_THROWS_WITH(aligned_keys({&a, &c}),
                      Catch::Matchers::ContainsSubstring("shape"));
  }
  SECTION("filter excluding everything yields an empty list") {
    KeyFilter f{{}, {"*"}};
    CHECK(aligned_keys({&a, &b}, f).empty());
  }
  SECTION("no maps is an error") {
    CHECK_THROWS_AS(aligned_keys({}), AlignmentError);
  }
}
