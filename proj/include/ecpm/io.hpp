#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ecpm/log.hpp"
#include "ecpm/nn.hpp"
#include "ecpm/polsar.hpp"
#include "ecpm/tensor.hpp"

namespace ecpm::io {

static_assert(std::endian::native == std::endian::little, "containers are little-endian");

class FileError : public Error {
 public:
  using Error::Error;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("short write to " + path.string());
}

namespace detail {

template <typename V>
void put(std::string& out, V v) {
  char buf[sizeof(V)];
  std::memcpy(buf, &v, sizeof(V));
  out.append(buf, sizeof(V));
}

struct Reader {
  std::string_view data;
  std::size_t pos = 0;
  const char* what;

  template <typename V>
  V get() {
    if (pos + sizeof(V) > data.size()) throw Error(std::string(what) + ": truncated data");
    V v;
    std::memcpy(&v, data.data() + pos, sizeof(V));
    pos += sizeof(V);
    return v;
  }
  std::string_view bytes(std::size_t n) {
    if (pos + n > data.size()) throw Error(std::string(what) + ": truncated data");
    auto s = data.substr(pos, n);
    pos += n;
    return s;
  }
  void magic(std::string_view m) {
    if (bytes(m.size()) != m) throw Error(std::string(what) + ": bad magic, expected " + std::string(m));
  }
  void finish() const {
    if (pos != data.size()) throw Error(std::string(what) + ": trailing bytes");
  }
};

}  // namespace detail

// ---- PTC: (9, H, W) raster, stored pixel-major as float32 -------------------

inline std::string encode_ptc(const Tensor<double>& raster) {
  if (raster.rank() != 3 || raster.dim(0) != polsar::kChannels) {
    throw Error("PTC: expected (9, H, W) raster, got " + shape_str(raster.shape()));
  }
  const std::size_t H = raster.dim(1), W = raster.dim(2);
  std::string out = "PTC1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(H));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(W));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(polsar::kChannels));
  out.reserve(out.size() + 4 * raster.size());
  for (std::size_t i = 0; i < H * W; ++i)
    for (std::size_t c = 0; c < polsar::kChannels; ++c)
      detail::put<float>(out, static_cast<float>(raster[c * H * W + i]));
  return out;
}

inline Tensor<double> decode_ptc(std::string_view bytes) {
  detail::Reader r{bytes, 0, "PTC"};
  r.magic("PTC1");
  const std::size_t H = r.get<std::uint32_t>(), W = r.get<std::uint32_t>();
  const std::uint32_t C = r.get<std::uint32_t>();
  if (C != polsar::kChannels) throw Error("PTC: channel count " + std::to_string(C) + " (must be 9)");
  Tensor<double> raster({polsar::kChannels, H, W});
  for (std::size_t i = 0; i < H * W; ++i)
    for (std::size_t c = 0; c < polsar::kChannels; ++c) raster[c * H * W + i] = r.get<float>();
  r.finish();
  return raster;
}

// ---- PLB: label map ---------------------------------------------------------

inline std::string encode_plb(const polsar::LabelMap& labels) {
  labels.validate();
  std::string out = "PLB1";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(labels.height));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(labels.width));
  detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(labels.num_classes));
  for (auto id : labels.ids) detail::put<std::uint16_t>(out, id);
  return out;
}

inline polsar::LabelMap decode_plb(std::string_view bytes) {
  detail::Reader r{bytes, 0, "PLB"};
  r.magic("PLB1");
  const std::size_t H = r.get<std::uint32_t>(), W = r.get<std::uint32_t>();
  const std::size_t n = r.get<std::uint16_t>();
  polsar::LabelMap m(H, W, n);
  for (auto& id : m.ids) id = r.get<std::uint16_t>();
  r.finish();
  m.validate();
  return m;
}

// ---- ECPW: named float32 tensors with an FNV-1a trailer ----------------------

inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

inline std::string encode_ecpw(const std::vector<NamedTensor>& tensors) {
  std::string out = "ECPW";
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.name.size() > 0xffff) throw Error("ECPW: tensor name too long");
    if (t.value.rank() > 0xff) throw Error("ECPW: tensor rank too large");
    detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.value.rank()));
    for (auto e : t.value.shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(e));
    for (float v : t.value.data()) detail::put<float>(out, v);
  }
  detail::put<std::uint64_t>(out, fnv1a(out));
  return out;
}

inline std::vector<NamedTensor> decode_ecpw(std::string_view bytes) {
  if (bytes.size() < 8) throw Error("ECPW: truncated data");
  const auto payload = bytes.substr(0, bytes.size() - 8);
  std::uint64_t digest;
  std::memcpy(&digest, bytes.data() + payload.size(), 8);
  if (digest != fnv1a(payload)) throw Error("ECPW: digest mismatch (corrupt checkpoint)");
  detail::Reader r{payload, 0, "ECPW"};
  r.magic("ECPW");
  const std::uint32_t count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = std::string(r.bytes(r.get<std::uint16_t>()));
    const std::size_t rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint32_t>();
    t.value = Tensor<float>(shape);
    for (auto& v : t.value.data()) v = r.get<float>();
    out.push_back(std::move(t));
  }
  r.finish();
  return out;
}

// Text carried inside a checkpoint as a rank-1 tensor of byte values.
inline Tensor<float> text_tensor(std::string_view text) {
  Tensor<float> t({text.size()});
  for (std::size_t i = 0; i < text.size(); ++i) t[i] = static_cast<unsigned char>(text[i]);
  return t;
}

inline std::string tensor_text(const Tensor<float>& t) {
  std::string s;
  for (float v : t.data()) s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
  return s;
}

template <typename T>
std::vector<NamedTensor> to_named(const nn::ParamList<T>& params, const std::string& prefix = "") {
  std::vector<NamedTensor> out;
  for (const auto& p : params) out.push_back({prefix + p.name, p.var.value().template cast<float>()});
  return out;
}

// Loads every parameter of `params` from tensors named prefix + name.
template <typename T>
void load_named(const nn::ParamList<T>& params, const std::vector<NamedTensor>& tensors,
                const std::string& prefix = "") {
  for (const auto& p : params) {
    const std::string want = prefix + p.name;
    auto it = std::find_if(tensors.begin(), tensors.end(),
                           [&](const NamedTensor& t) { return t.name == want; });
    if (it == tensors.end()) throw Error("checkpoint: missing tensor '" + want + "'");
    if (it->value.shape() != p.var.shape()) {
      throw Error("checkpoint: tensor '" + want + "' has shape " + shape_str(it->value.shape()) +
                  ", model expects " + shape_str(p.var.shape()));
    }
    Var<T> v = p.var;
    v.mutable_value() = it->value.template cast<T>();
  }
}

inline const NamedTensor* find_tensor(const std::vector<NamedTensor>& tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

}  // namespace ecpm::io
