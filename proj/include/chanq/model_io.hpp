// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

// File formats:
//   manifest  JSON {"version":1, "input":{name,dims}, "output":name?, "weights":file?,
//             "nodes":[{name,kind,inputs,outputs,attrs,params:{key:{offset,len,dims}}}]}
//             offset and len are in bytes into the weights blob; dims exclude the batch axis
//             for the input.
//   weights   raw little-endian float32, no header.
//   QTSR      "QTSR", u32 version=1, u8 dtype, u8 rank, rank x u64 dims, row-major LE data.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "json.hpp"

#include "chanq/error.hpp"
#include "chanq/graph.hpp"
#include "chanq/tensor.hpp"

namespace chanq {

namespace io {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<std::uint8_t, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.insert(out.end(), bytes.begin(), bytes.end());
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::array<std::uint8_t, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path.string() + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("short write to '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw FormatError("cannot write '" + path.string() + "'");
  f << text;
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": " + e.what());
  }
}

}  // namespace io

// ---------------------------------------------------------------------------
// QTSR tensor files

struct TensorFile {
  DType dtype = DType::f32;
  Shape dims;
  std::vector<float> f32;
  std::vector<std::int32_t> codes;
};

inline std::vector<std::uint8_t> encode_qtsr(DType dtype, const Shape& dims, std::span<const float> f32,
                                              std::span<const std::int32_t> codes) {
  std::vector<std::uint8_t> out{'Q', 'T', 'S', 'R'};
  io::put_le<std::uint32_t>(out, 1);
  out.push_back(static_cast<std::uint8_t>(dtype));
  if (dims.size() > 255) throw FormatError("QTSR rank too large");
  out.push_back(static_cast<std::uint8_t>(dims.size()));
  for (std::size_t d : dims) io::put_le<std::uint64_t>(out, d);
  switch (dtype) {
    case DType::f32:
      for (float v : f32) io::put_le<float>(out, v);
      break;
    case DType::i8:
      for (std::int32_t v : codes) io::put_le<std::int8_t>(out, static_cast<std::int8_t>(v));
      break;
    case DType::u8:
      for (std::int32_t v : codes) io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(v));
      break;
    case DType::i32:
      for (std::int32_t v : codes) io::put_le<std::int32_t>(out, v);
      break;
  }
  return out;
}

inline TensorFile decode_qtsr(const std::vector<std::uint8_t>& bytes, const std::string& what = "QTSR") {
  auto need = [&](std::size_t n) {
    if (bytes.size() < n) throw FormatError(what + ": truncated file");
  };
  need(10);
  if (std::memcmp(bytes.data(), "QTSR", 4) != 0) throw FormatError(what + ": bad magic");
  if (io::get_le<std::uint32_t>(bytes.data() + 4) != 1) throw FormatError(what + ": unsupported version");
  const std::uint8_t dt = bytes[8];
  if (dt > 3) throw FormatError(what + ": unknown dtype " + std::to_string(dt));
  TensorFile tf;
  tf.dtype = static_cast<DType>(dt);
  const std::size_t rank = bytes[9];
  need(10 + 8 * rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const auto d = io::get_le<std::uint64_t>(bytes.data() + 10 + 8 * i);
    if (d == 0) throw FormatError(what + ": zero dimension");
    tf.dims.push_back(static_cast<std::size_t>(d));
  }
  const std::size_t count = element_count(tf.dims);
  const std::size_t width = tf.dtype == DType::f32 || tf.dtype == DType::i32 ? 4 : 1;
  const std::size_t start = 10 + 8 * rank;
  if (bytes.size() != start + count * width) {
    throw FormatError(what + ": payload has " + std::to_string(bytes.size() - start) + " bytes, dims " +
                      to_string(tf.dims) + " need " + std::to_string(count * width));
  }
  const std::uint8_t* p = bytes.data() + start;
  if (tf.dtype == DType::f32) {
    tf.f32.resize(count);
    for (std::size_t i = 0; i < count; ++i) tf.f32[i] = io::get_le<float>(p + 4 * i);
  } else {
    tf.codes.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      switch (tf.dtype) {
        case DType::i8: tf.codes[i] = static_cast<std::int8_t>(p[i]); break;
        case DType::u8: tf.codes[i] = p[i]; break;
        default: tf.codes[i] = io::get_le<std::int32_t>(p + 4 * i); break;
      }
    }
  }
  return tf;
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  io::write_bytes(path, encode_qtsr(DType::f32, t.dims(), t.data(), {}));
}

inline void write_code_tensor(const std::filesystem::path& path, const CodeTensor& t, DType dtype) {
  if (dtype == DType::f32) throw ContractError("write_code_tensor: integer dtype required");
  if (!codes_fit(t, dtype)) throw ContractError(std::string("write_code_tensor: codes exceed ") + dtype_name(dtype));
  io::write_bytes(path, encode_qtsr(dtype, t.dims(), {}, t.data()));
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  TensorFile tf = decode_qtsr(io::read_bytes(path), path.string());
  if (tf.dtype != DType::f32) throw FormatError(path.string() + ": expected f32 tensor");
  return Tensor(tf.dims, std::move(tf.f32));
}

inline CodeTensor read_code_tensor(const std::filesystem::path& path, DType* dtype = nullptr) {
  TensorFile tf = decode_qtsr(io::read_bytes(path), path.string());
  if (tf.dtype == DType::f32) throw FormatError(path.string() + ": expected integer tensor");
  if (dtype) *dtype = tf.dtype;
  return CodeTensor(tf.dims, std::move(tf.codes));
}

// ---------------------------------------------------------------------------
// Model manifest + weights blob

namespace detail {

inline Shape dims_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) throw FormatError(what + ": dims must be a non-empty array");
  Shape dims;
  for (const auto& v : j) {
    if (!v.is_number_integer() || v.get<long long>() <= 0) throw FormatError(what + ": dims must be positive integers");
    dims.push_back(v.get<std::size_t>());
  }
  return dims;
}

inline Hw hw_from_json(const nlohmann::json& j, const std::string& what) {
  if (j.is_number_integer() && j.get<long long>() >= 0) return {j.get<std::size_t>(), j.get<std::size_t>()};
  if (j.is_array() && j.size() == 2 && j[0].is_number_integer() && j[1].is_number_integer() && j[0].get<long long>() >= 0 &&
      j[1].get<long long>() >= 0) {
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
  }
  throw FormatError(what + ": expected an integer or [h,w] pair");
}

}  // namespace detail

/// Parses a manifest and its weights blob into a validated graph.
/// `weights_path` overrides the manifest's "weights" entry; without either, the
/// manifest path with extension ".bin" is used.
inline Graph load_model(const std::filesystem::path& manifest_path, const std::filesystem::path& weights_path = {}) {
  using nlohmann::json;
  const json m = io::parse_json(io::read_text(manifest_path), manifest_path.string());
  try {
    if (m.value("version", 0) != 1) throw FormatError(manifest_path.string() + ": unsupported manifest version");
    std::filesystem::path blob_path = weights_path;
    if (blob_path.empty()) {
      blob_path = m.contains("weights") ? manifest_path.parent_path() / m.at("weights").get<std::string>()
                                        : std::filesystem::path(manifest_path).replace_extension(".bin");
    }
    const std::vector<std::uint8_t> blob = io::read_bytes(blob_path);

    Graph g;
    g.input_name = m.at("input").at("name").get<std::string>();
    g.input_dims = detail::dims_from_json(m.at("input").at("dims"), "input");
    if (m.contains("output")) g.output_name = m.at("output").get<std::string>();

    for (const json& jn : m.at("nodes")) {
      Node n;
      n.name = jn.at("name").get<std::string>();
      const std::string kind = jn.at("kind").get<std::string>();
      const auto k = parse_kind(kind);
      if (!k) throw FormatError("node '" + n.name + "': unknown kind '" + kind + "'");
      n.kind = *k;
      n.inputs = jn.at("inputs").get<std::vector<std::string>>();
      const auto outs = jn.at("outputs").get<std::vector<std::string>>();
      if (outs.size() != 1) throw FormatError("node '" + n.name + "': exactly one output is supported");
      n.output = outs[0];
      if (jn.contains("attrs")) {
        for (const auto& [key, val] : jn.at("attrs").items()) {
          const std::string what = "node '" + n.name + "' attr '" + key + "'";
          if (key == "stride") n.attrs.stride = detail::hw_from_json(val, what);
          else if (key == "pad") n.attrs.pad = detail::hw_from_json(val, what);
          else if (key == "window") n.attrs.window = detail::hw_from_json(val, what);
          else if (key == "epsilon") n.attrs.epsilon = val.get<double>();
          else throw FormatError(what + ": unknown attribute");
        }
      }
      if (jn.contains("params")) {
        for (const auto& [key, ref] : jn.at("params").items()) {
          const std::string what = "node '" + n.name + "' param '" + key + "'";
          const auto offset = ref.at("offset").get<std::uint64_t>();
          const auto len = ref.at("len").get<std::uint64_t>();
          const Shape dims = detail::dims_from_json(ref.at("dims"), what);
          if (len % 4 != 0 || len / 4 != element_count(dims)) {
            throw ShapeError(what + ": " + std::to_string(len) + " bytes do not hold " + to_string(dims) + " float32 values");
          }
          if (offset % 4 != 0 || offset + len > blob.size()) {
            throw FormatError(what + ": range [" + std::to_string(offset) + ", +" + std::to_string(len) +
                              ") outside weights file of " + std::to_string(blob.size()) + " bytes");
          }
          std::vector<float> values(len / 4);
          for (std::size_t i = 0; i < values.size(); ++i) values[i] = io::get_le<float>(blob.data() + offset + 4 * i);
          n.params.emplace(key, Tensor(dims, std::move(values)));
        }
      }
      g.nodes.push_back(std::move(n));
    }
    return validate(std::move(g));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
}

/// Writes the manifest and a weights blob. Parameters are laid out in node order,
/// then parameter-name order, so the output is deterministic.
inline void save_model(const Graph& g, const std::filesystem::path& manifest_path,
                       const std::filesystem::path& weights_path = {}) {
  using nlohmann::json;
  const std::filesystem::path blob_path =
      weights_path.empty() ? std::filesystem::path(manifest_path).replace_extension(".bin") : weights_path;
  std::vector<std::uint8_t> blob;
  json m;
  m["version"] = 1;
  m["input"] = {{"name", g.input_name}, {"dims", g.input_dims}};
  if (!g.output_name.empty()) m["output"] = g.output_name;
  m["weights"] = blob_path.filename().string();
  json nodes = json::array();
  for (const Node& n : g.nodes) {
    json jn;
    jn["name"] = n.name;
    jn["kind"] = kind_name(n.kind);
    jn["inputs"] = n.inputs;
    jn["outputs"] = std::vector<std::string>{n.output};
    json attrs = json::object();
    if (n.attrs.stride) attrs["stride"] = {n.attrs.stride->h, n.attrs.stride->w};
    if (n.attrs.pad) attrs["pad"] = {n.attrs.pad->h, n.attrs.pad->w};
    if (n.attrs.window) attrs["window"] = {n.attrs.window->h, n.attrs.window->w};
    if (n.attrs.epsilon) attrs["epsilon"] = *n.attrs.epsilon;
    jn["attrs"] = attrs;
    json params = json::object();
    for (const auto& [key, t] : n.params) {
      params[key] = {{"offset", blob.size()}, {"len", t.size() * 4}, {"dims", t.dims()}};
      for (float v : t.data()) io::put_le<float>(blob, v);
    }
    jn["params"] = params;
    nodes.push_back(std::move(jn));
  }
  m["nodes"] = std::move(nodes);
  io::write_text(manifest_path, m.dump(2) + "\n");
  io::write_bytes(blob_path, blob);
}

}  // namespace chanq
