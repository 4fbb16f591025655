// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evomerge/errors.hpp"
#include "evomerge/tensor_map.hpp"

// Checkpoint archive I/O. Layout: an 8-byte little-endian header length N,
// a UTF-8 JSON header of N bytes mapping tensor names to
// {"dtype":"F32","shape":[...],"data_offsets":[begin,end]} plus an optional
// "__metadata__" object, then a contiguous little-endian f32 data region.
// Offsets are relative to the start of the data region, ascending in name
// order, and must exactly tile it. save_archive always emits the canonical
// form (names sorted, data packed in name order), so equal values produce
// identical bytes.

namespace evomerge {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

inline void save_archive(const TensorMap& map, const std::string& path,
                         bool allow_nonfinite = false) {
  if (!allow_nonfinite) map.check_finite();

  nlohmann::json header = nlohmann::json::object();
  if (!map.metadata().empty()) {
    header["__metadata__"] = map.metadata();
  }
  std::uint64_t offset = 0;
  for (const auto& [name, t] : map.entries()) {
    std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * 4;
    header[name] = {{"dtype", "F32"},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + nbytes}}};
    offset += nbytes;
  }
  std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  std::uint64_t n = header_str.size();
  out.write(reinterpret_cast<const char*>(&n), 8);
  out.write(header_str.data(), static_cast<std::streamsize>(n));
  for (const auto& [name, t] : map.entries()) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * 4));
  }
  out.flush();
  if (!out) throw Error("I/O failure writing '" + path + "'");
}

inline TensorMap load_archive(const std::string& path,
                              bool allow_nonfinite = false) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  in.seekg(0, std::ios::end);
  std::uint64_t file_size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);

  if (file_size < 8) throw FormatError("'" + path + "': truncated header length");
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), 8);
  if (header_len == 0 || header_len > file_size - 8) {
    throw FormatError("'" + path + "': malformed header length " +
                      std::to_string(header_len));
  }
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("'" + path + "': truncated header");

  // Duplicate top-level keys are silently collapsed by the JSON parser, so
  // spot them during the parse itself.
  std::set<std::string> seen;
  std::string duplicate;
  nlohmann::json header;
  try {
    nlohmann::json::parser_callback_t cb =
        [&](int depth, nlohmann::json::parse_event_t event, nlohmann::json& parsed) {
          if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
            std::string key = parsed.get<std::string>();
            if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
          }
          return true;
        };
    header = nlohmann::json::parse(header_str, cb);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("'" + path + "': malformed header JSON: " + e.what());
  }
  if (!duplicate.empty()) {
    throw FormatError("'" + path + "': duplicate tensor name '" + duplicate + "'");
  }
  if (!header.is_object()) throw FormatError("'" + path + "': header is not an object");

  std::uint64_t data_size = file_size - 8 - header_len;
  TensorMap map;
  std::uint64_t expected_begin = 0;  // offsets must tile the data region in name order
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string())
          throw FormatError("'" + path + "': __metadata__ values must be strings");
        map.metadata()[k] = v.get<std::string>();
      }
      continue;
    }
    try {
      std::string dtype = entry.at("dtype").get<std::string>();
      if (dtype != "F32") {
        throw FormatError("'" + path + "': tensor '" + name +
                          "' has unsupported dtype '" + dtype + "'");
      }
      Tensor t;
      for (const auto& d : entry.at("shape")) {
        auto dim = d.get<std::int64_t>();
        if (dim < 0) {
          throw FormatError("'" + path + "': tensor '" + name +
                            "' has negative dimension");
        }
        t.shape.push_back(dim);
      }
      auto offs = entry.at("data_offsets");
      std::uint64_t begin = offs.at(0).get<std::uint64_t>();
      std::uint64_t end = offs.at(1).get<std::uint64_t>();
      std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * 4;
      if (begin != expected_begin || end < begin || end - begin != nbytes ||
          end > data_size) {
        throw FormatError("'" + path + "': tensor '" + name +
                          "' has inconsistent data_offsets");
      }
      expected_begin = end;
      t.data.resize(static_cast<std::size_t>(t.numel()));
      in.seekg(static_cast<std::streamoff>(8 + header_len + begin));
      in.read(reinterpret_cast<char*>(t.data.data()),
              static_cast<std::streamsize>(nbytes));
      if (!in) {
        throw FormatError("'" + path + "': truncated data for tensor '" + name + "'");
      }
      map.set(name, std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("'" + path + "': tensor '" + name +
                        "': invalid header entry: " + e.what());
    }
  }
  if (expected_begin != data_size) {
    throw FormatError("'" + path + "': data region size " +
                      std::to_string(data_size) + " not covered by offsets (" +
                      std::to_string(expected_begin) + " bytes accounted)");
  }
  if (!allow_nonfinite) map.check_finite();
  return map;
}

}  // namespace evomerge
