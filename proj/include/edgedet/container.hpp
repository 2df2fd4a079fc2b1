#pragma once

// .edm model container:
//   bytes 0..3   magic "EDM1"
//   bytes 4..7   u32 little-endian header length
//   header       UTF-8 JSON (metadata, tensors, nodes, weight blob table, quant section)
//   blobs        16-byte aligned, little-endian, row-major; blob offsets in the header are
//                relative to the first 16-byte boundary after the header.
// Per-channel weight scales are f32 blobs. Requantization multipliers are not stored;
// they are derived from the scales on load.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "edgedet/graph.hpp"
#include "edgedet/quant/quantize.hpp"
#include "json.hpp"

namespace edgedet {

inline constexpr char kEdmMagic[4] = {'E', 'D', 'M', '1'};
inline constexpr std::size_t kBlobAlignment = 16;

inline std::size_t align_up(std::size_t n, std::size_t a) { return (n + a - 1) / a * a; }

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson quant_to_json(const QuantParams& q) {
  return ojson{{"scheme", q.scheme == QuantScheme::per_tensor_affine ? "per_tensor_affine"
                                                                      : "per_channel_symmetric"},
               {"scale", q.scale},
               {"zero_point", q.zero_point}};
}

inline QuantParams quant_from_json(const nlohmann::json& j) {
  QuantParams q;
  const std::string scheme = j.at("scheme").get<std::string>();
  if (scheme == "per_tensor_affine") q.scheme = QuantScheme::per_tensor_affine;
  else if (scheme == "per_channel_symmetric") q.scheme = QuantScheme::per_channel_symmetric;
  else throw DataError("unknown quant scheme '" + scheme + "'");
  q.scale = j.at("scale").get<std::vector<float>>();
  q.zero_point = j.at("zero_point").get<int>();
  return q;
}

inline ojson attrs_to_json(const Node& n) {
  return std::visit(
      [](const auto& a) -> ojson {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ConvAttrs>) {
          return {{"kernel", a.kernel}, {"stride", a.stride}, {"padding", a.padding}, {"groups", 1}};
        } else if constexpr (std::is_same_v<T, PoolAttrs>) {
          return {{"kernel", a.kernel}, {"stride", a.stride}, {"padding", a.padding}};
        } else if constexpr (std::is_same_v<T, BatchNormAttrs>) {
          return {{"eps", a.eps}};
        } else if constexpr (std::is_same_v<T, DetectAttrs>) {
          ojson anchors = ojson::array();
          for (const auto& p : a.anchors) anchors.push_back({p[0], p[1]});
          return {{"stride", a.stride}, {"anchors", anchors}, {"num_classes", a.num_classes}};
        } else {
          return ojson::object();
        }
      },
      n.attrs);
}

inline NodeAttrs attrs_from_json(OpKind kind, const nlohmann::json& j) {
  switch (kind) {
    case OpKind::Conv2d: {
      if (j.value("groups", 1) != 1) throw DataError("grouped convolution is not supported");
      return ConvAttrs{j.at("kernel").get<int>(), j.at("stride").get<int>(), j.at("padding").get<int>()};
    }
    case OpKind::MaxPool2d:
      return PoolAttrs{j.at("kernel").get<int>(), j.at("stride").get<int>(), j.at("padding").get<int>()};
    case OpKind::BatchNorm:
      return BatchNormAttrs{j.at("eps").get<float>()};
    case OpKind::Detect: {
      DetectAttrs d;
      d.stride = j.at("stride").get<int>();
      d.num_classes = j.at("num_classes").get<int>();
      for (const auto& p : j.at("anchors")) d.anchors.push_back({p.at(0).get<float>(), p.at(1).get<float>()});
      return d;
    }
    default:
      return std::monostate{};
  }
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, const std::vector<T>& values) {
  for (T v : values) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t b = 0; b < sizeof(T); ++b)
      out.push_back(static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFFu));
  }
}

template <typename T>
std::vector<T> read_le(const std::uint8_t* p, std::size_t count) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>;
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    U bits = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b)
      bits = static_cast<U>(bits | (static_cast<U>(p[i * sizeof(T) + b]) << (8 * b)));
    out[i] = std::bit_cast<T>(bits);
  }
  return out;
}

struct Encoded {
  std::string header;
  std::vector<std::uint8_t> blobs;
};

inline Encoded encode(const Graph& g) {
  Encoded enc;
  ojson h;
  h["format"] = "edm";
  h["version"] = 1;
  h["metadata"] = {{"num_classes", g.metadata.num_classes},
                   {"input_size", g.metadata.input_size},
                   {"width_mult", g.metadata.width_mult},
                   {"depth_mult", g.metadata.depth_mult}};
  h["input"] = g.input_id;
  h["outputs"] = g.output_ids;
  ojson tensors = ojson::array();
  ojson act_quant = ojson::object();
  for (const auto& [id, t] : g.tensors) {
    tensors.push_back({{"id", id},
                       {"dtype", std::string(to_string(t.dtype))},
                       {"shape", {t.shape.n, t.shape.c, t.shape.h, t.shape.w}}});
    if (t.quant) act_quant[std::to_string(id)] = quant_to_json(*t.quant);
  }
  h["tensors"] = std::move(tensors);

  ojson weight_quant = ojson::object();
  ojson nodes = ojson::array();
  for (const Node& n : g.nodes) {
    ojson jn{{"name", n.name},
             {"kind", std::string(to_string(n.kind))},
             {"region", std::string(to_string(n.region))},
             {"attrs", attrs_to_json(n)},
             {"inputs", n.inputs},
             {"outputs", n.outputs}};
    ojson weights = ojson::object();
    auto add_blob = [&](const auto& values) {
      enc.blobs.resize(align_up(enc.blobs.size(), kBlobAlignment), 0);
      const std::size_t offset = enc.blobs.size();
      append_le(enc.blobs, values);
      return std::pair{offset, enc.blobs.size() - offset};
    };
    for (const auto& [name, c] : n.weights) {
      const auto [offset, length] = std::visit(add_blob, c.data);
      weights[name] = {{"dtype", std::string(to_string(c.dtype()))},
                       {"dims", c.dims},
                       {"offset", offset},
                       {"length", length}};
      if (c.quant) {
        const auto [s_off, s_len] = add_blob(c.quant->scale);
        weight_quant[n.name + "/" + name] = {
            {"scheme", c.quant->scheme == QuantScheme::per_tensor_affine ? "per_tensor_affine"
                                                                         : "per_channel_symmetric"},
            {"zero_point", c.quant->zero_point},
            {"scale_offset", s_off},
            {"scale_count", s_len / 4}};
      }
    }
    jn["weights"] = std::move(weights);
    nodes.push_back(std::move(jn));
  }
  h["nodes"] = std::move(nodes);
  if (!act_quant.empty() || !weight_quant.empty())
    h["quant"] = {{"activations", act_quant}, {"weights", weight_quant}};
  enc.header = h.dump();
  return enc;
}

}  // namespace detail

// Bytes taken by the magic, length field and JSON header.
inline std::size_t edm_header_size(const Graph& g) {
  return 8 + detail::encode(g).header.size();
}

inline std::vector<std::uint8_t> save_edm(const Graph& g) {
  detail::Encoded enc = detail::encode(g);
  std::vector<std::uint8_t> out(kEdmMagic, kEdmMagic + 4);
  const auto len = static_cast<std::uint32_t>(enc.header.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((len >> (8 * b)) & 0xFFu));
  out.insert(out.end(), enc.header.begin(), enc.header.end());
  out.resize(align_up(out.size(), kBlobAlignment), 0);
  out.insert(out.end(), enc.blobs.begin(), enc.blobs.end());
  return out;
}

inline Graph load_edm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw ParseError("container truncated before header length", bytes.size());
  if (std::memcmp(bytes.data(), kEdmMagic, 4) != 0) throw ParseError("bad magic, expected EDM1", 0);
  std::uint32_t len = 0;
  for (int b = 0; b < 4; ++b) len |= static_cast<std::uint32_t>(bytes[4 + static_cast<std::size_t>(b)]) << (8 * b);
  if (8 + static_cast<std::size_t>(len) > bytes.size())
    throw ParseError("header length " + std::to_string(len) + " exceeds container size", 4);

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed header JSON: ") + e.what(), 8 + e.byte);
  }
  const std::size_t blob_base = align_up(8 + static_cast<std::size_t>(len), kBlobAlignment);

  Graph g;
  try {
    if (h.at("format") != "edm" || h.at("version") != 1) throw ParseError("unsupported container version", 8);
    const auto& m = h.at("metadata");
    g.metadata = {m.at("num_classes").get<int>(), m.at("input_size").get<int>(),
                  m.at("width_mult").get<double>(), m.at("depth_mult").get<double>()};
    g.input_id = h.at("input").get<TensorId>();
    g.output_ids = h.at("outputs").get<std::vector<TensorId>>();
    const nlohmann::json empty = nlohmann::json::object();
    const auto& quant = h.contains("quant") ? h.at("quant") : empty;
    for (const auto& t : h.at("tensors")) {
      TensorSpec s;
      s.id = t.at("id").get<TensorId>();
      s.dtype = dtype_from_string(t.at("dtype").get<std::string>());
      const auto dims = t.at("shape").get<std::vector<std::int64_t>>();
      if (dims.size() != 4) throw DataError("tensor shape must have 4 entries");
      s.shape = {dims[0], dims[1], dims[2], dims[3]};
      const std::string key = std::to_string(s.id);
      if (quant.contains("activations") && quant.at("activations").contains(key))
        s.quant = detail::quant_from_json(quant.at("activations").at(key));
      g.tensors[s.id] = s;
    }
    for (const auto& jn : h.at("nodes")) {
      Node n;
      n.name = jn.at("name").get<std::string>();
      n.kind = op_kind_from_string(jn.at("kind").get<std::string>());
      n.region = region_from_string(jn.at("region").get<std::string>());
      n.attrs = detail::attrs_from_json(n.kind, jn.at("attrs"));
      n.inputs = jn.at("inputs").get<std::vector<TensorId>>();
      n.outputs = jn.at("outputs").get<std::vector<TensorId>>();
      for (const auto& [wname, jw] : jn.at("weights").items()) {
        Constant c;
        c.dims = jw.at("dims").get<std::vector<std::int64_t>>();
        const DType dt = dtype_from_string(jw.at("dtype").get<std::string>());
        const auto offset = jw.at("offset").get<std::size_t>();
        const auto length = jw.at("length").get<std::size_t>();
        const std::size_t at = blob_base + offset;
        if (at + length > bytes.size() || at < blob_base)
          throw ParseError("weight blob '" + n.name + "/" + wname + "' out of range", at);
        const auto count = static_cast<std::size_t>(c.elements());
        if (count * dtype_size(dt) != length)
          throw ParseError("weight blob '" + n.name + "/" + wname + "' length mismatch", at);
        const std::uint8_t* p = bytes.data() + at;
        switch (dt) {
          case DType::f32: c.data = detail::read_le<float>(p, count); break;
          case DType::i8: c.data = detail::read_le<std::int8_t>(p, count); break;
          case DType::i32: c.data = detail::read_le<std::int32_t>(p, count); break;
        }
        const std::string key = n.name + "/" + wname;
        if (quant.contains("weights") && quant.at("weights").contains(key)) {
          const auto& jq = quant.at("weights").at(key);
          const std::size_t s_at = blob_base + jq.at("scale_offset").get<std::size_t>();
          const auto s_count = jq.at("scale_count").get<std::size_t>();
          if (s_at < blob_base || s_at + 4 * s_count > bytes.size())
            throw ParseError("scale blob '" + key + "' out of range", s_at);
          QuantParams qp;
          qp.scheme = jq.at("scheme").get<std::string>() == "per_tensor_affine"
                          ? QuantScheme::per_tensor_affine
                          : QuantScheme::per_channel_symmetric;
          qp.zero_point = jq.at("zero_point").get<int>();
          qp.scale = detail::read_le<float>(bytes.data() + s_at, s_count);
          c.quant = std::move(qp);
        }
        n.weights[wname] = std::move(c);
      }
      g.nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid header field: ") + e.what(), 8);
  }
  try {
    validate(g);
    if (g.is_quantized()) assign_requant(g);
  } catch (const InvalidArgument& e) {
    throw ParseError(std::string("invalid graph: ") + e.what(), 8);
  }
  return g;
}

inline void write_edm_file(const Graph& g, const std::string& path) {
  const auto bytes = save_edm(g);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing '" + path + "'");
}

inline Graph read_edm_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open model '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return load_edm(bytes);
}

}  // namespace edgedet
