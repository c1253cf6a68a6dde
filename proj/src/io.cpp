#include "binarray/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "binarray/error.hpp"

namespace binarray::io {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

std::string_view dtype_name(DType t) {
  switch (t) {
    case DType::kF64: return "f64";
    case DType::kI32: return "i32";
    case DType::kU8: return "u8";
  }
  return "f64";
}

namespace {

DType parse_dtype(const std::string& s, const fs::path& path) {
  if (s == "f64") return DType::kF64;
  if (s == "i32") return DType::kI32;
  if (s == "u8") return DType::kU8;
  throw FormatError(path.string() + ": unknown dtype '" + s + "'");
}

std::size_t dtype_size(DType t) { return t == DType::kF64 ? 8 : (t == DType::kI32 ? 4 : 1); }

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path.string() + ": cannot create");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(path.string() + ": write failed");
}

// Header line padded with spaces so the payload starts on a kDataAlign boundary.
std::vector<std::uint8_t> with_header(json header, const std::vector<std::uint8_t>& payload) {
  header["byte_count"] = payload.size();
  header["checksum"] = hex64(fnv1a(payload.data(), payload.size()));
  std::size_t offset = 0;
  std::string text;
  for (;;) {
    header["data_offset"] = offset;
    text = header.dump();
    const std::size_t need = (text.size() + 1 + kDataAlign - 1) / kDataAlign * kDataAlign;
    if (need == offset) break;
    offset = need;
  }
  text.resize(offset - 1, ' ');
  text += '\n';
  std::vector<std::uint8_t> out(text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

struct Container {
  json header;
  std::vector<std::uint8_t> payload;
  std::size_t payload_offset = 0;  // position of the payload in its file
  fs::path payload_file;
};

Container open_container(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  const auto nl = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
  if (nl == bytes.end()) throw FormatError(path.string() + ": missing header terminator");
  Container c;
  try {
    c.header = json::parse(bytes.begin(), nl);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header at offset 0: " + e.what());
  }
  try {
    const std::size_t count = c.header.at("byte_count").get<std::size_t>();
    c.payload_offset = c.header.at("data_offset").get<std::size_t>();
    std::vector<std::uint8_t> source;
    if (c.header.contains("data_file")) {
      c.payload_file = path.parent_path() / c.header.at("data_file").get<std::string>();
      source = read_bytes(c.payload_file);
    } else {
      c.payload_file = path;
      source = bytes;
    }
    if (c.payload_offset > source.size() || source.size() - c.payload_offset < count) {
      throw FormatError(c.payload_file.string() + ": payload truncated at offset " + std::to_string(source.size()) +
                        ", expected " + std::to_string(count) + " bytes from offset " +
                        std::to_string(c.payload_offset));
    }
    c.payload.assign(source.begin() + static_cast<std::ptrdiff_t>(c.payload_offset),
                     source.begin() + static_cast<std::ptrdiff_t>(c.payload_offset + count));
    if (c.header.contains("checksum") &&
        c.header.at("checksum").get<std::string>() != hex64(fnv1a(c.payload.data(), c.payload.size()))) {
      throw FormatError(c.payload_file.string() + ": checksum mismatch in payload at offset " +
                        std::to_string(c.payload_offset));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  return c;
}

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& in, std::size_t off) {
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  return v;
}

struct RawTensor {
  DType dtype;
  std::vector<std::size_t> shape;
  std::vector<std::uint8_t> payload;
};

RawTensor read_raw(const fs::path& path) {
  Container c = open_container(path);
  RawTensor r;
  try {
    if (c.header.value("order", std::string("row-major")) != "row-major") {
      throw FormatError(path.string() + ": only row-major order is supported");
    }
    r.dtype = parse_dtype(c.header.at("dtype").get<std::string>(), path);
    r.shape = c.header.at("shape").get<std::vector<std::size_t>>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  if (r.shape.empty() || shape_product(r.shape) * dtype_size(r.dtype) != c.payload.size()) {
    throw FormatError(path.string() + ": payload of " + std::to_string(c.payload.size()) +
                      " bytes does not match shape " + shape_string(r.shape));
  }
  r.payload = std::move(c.payload);
  return r;
}

json tensor_header(DType t, const std::vector<std::size_t>& shape) {
  return {{"dtype", dtype_name(t)}, {"shape", shape}, {"order", "row-major"}};
}

}  // namespace

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void write_tensor(const fs::path& path, const Tensor& t) {
  std::vector<std::uint8_t> payload;
  payload.reserve(t.size() * 8);
  for (const double v : t.data()) put(payload, v);
  write_bytes(path, with_header(tensor_header(DType::kF64, t.shape()), payload));
}

void write_tensor(const fs::path& path, const IntTensor& t, DType dtype) {
  std::vector<std::uint8_t> payload;
  for (const std::int32_t v : t.data()) {
    switch (dtype) {
      case DType::kI32: put(payload, v); break;
      case DType::kU8:
        if (v < 0 || v > 255) throw InvalidInput("value " + std::to_string(v) + " does not fit u8");
        payload.push_back(static_cast<std::uint8_t>(v));
        break;
      case DType::kF64: put(payload, static_cast<double>(v)); break;
    }
  }
  write_bytes(path, with_header(tensor_header(dtype, t.shape()), payload));
}

Tensor read_tensor(const fs::path& path) {
  const RawTensor r = read_raw(path);
  const std::size_t n = shape_product(r.shape);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (r.dtype) {
      case DType::kF64: v[i] = get<double>(r.payload, 8 * i); break;
      case DType::kI32: v[i] = get<std::int32_t>(r.payload, 4 * i); break;
      case DType::kU8: v[i] = r.payload[i]; break;
    }
  }
  try {
    return Tensor(r.shape, std::move(v));
  } catch (const InvalidInput& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

IntTensor read_int_tensor(const fs::path& path) {
  const RawTensor r = read_raw(path);
  const std::size_t n = shape_product(r.shape);
  std::vector<std::int32_t> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    switch (r.dtype) {
      case DType::kF64: {
        const double d = get<double>(r.payload, 8 * i);
        if (d != std::floor(d) || std::abs(d) > 2147483647.0) {
          throw FormatError(path.string() + ": non-integer value at element " + std::to_string(i));
        }
        v[i] = static_cast<std::int32_t>(d);
        break;
      }
      case DType::kI32: v[i] = get<std::int32_t>(r.payload, 4 * i); break;
      case DType::kU8: v[i] = r.payload[i]; break;
    }
  }
  return IntTensor(r.shape, std::move(v));
}

DType tensor_dtype(const fs::path& path) { return read_raw(path).dtype; }

void write_bank(const fs::path& path, const ApproxBank& bank) {
  if (bank.empty()) throw InvalidInput("empty weight bank");
  const std::size_t m = bank.front().levels(), n_c = bank.front().n_c();
  json header = {{"format", "binarray-bank"}, {"version", 1}, {"M", m}, {"N_c", n_c}};
  header["words_per_plane"] = bank.front().planes.words_per_plane();
  json filters = json::array();
  std::vector<std::uint8_t> payload;
  for (const auto& a : bank) {
    if (a.levels() != m || a.n_c() != n_c || a.alphas.size() != m) {
      throw InvalidInput("all filters of a bank need the same M and N_c");
    }
    json f = {{"alphas", a.alphas}, {"residual", a.residual}};
    f["bias"] = a.bias ? json(*a.bias) : json(nullptr);
    filters.push_back(std::move(f));
    for (const std::uint64_t w : a.planes.words()) put(payload, w);
  }
  header["filters"] = std::move(filters);
  write_bytes(path, with_header(std::move(header), payload));
}

ApproxBank read_bank(const fs::path& path) {
  Container c = open_container(path);
  ApproxBank bank;
  try {
    if (c.header.at("format").get<std::string>() != "binarray-bank") {
      throw FormatError(path.string() + ": not a weight bank");
    }
    const auto m = c.header.at("M").get<std::size_t>();
    const auto n_c = c.header.at("N_c").get<std::size_t>();
    if (m == 0 || n_c == 0) throw FormatError(path.string() + ": M and N_c must be positive");
    const auto& filters = c.header.at("filters");
    const std::size_t wpp = (n_c + 63) / 64;
    const std::size_t per_filter = m * wpp;
    if (c.payload.size() != filters.size() * per_filter * 8) {
      throw FormatError(path.string() + ": bit-plane payload has " + std::to_string(c.payload.size()) +
                        " bytes, expected " + std::to_string(filters.size() * per_filter * 8) + " at offset " +
                        std::to_string(c.payload_offset));
    }
    const std::uint64_t pad_mask = n_c % 64 == 0 ? 0 : ~((std::uint64_t{1} << (n_c % 64)) - 1);
    for (std::size_t f = 0; f < filters.size(); ++f) {
      approx::BinaryApprox a;
      a.planes = approx::BitPlanes(m, n_c);
      auto words = a.planes.words();
      for (std::size_t k = 0; k < per_filter; ++k) {
        const std::size_t off = (f * per_filter + k) * 8;
        words[k] = get<std::uint64_t>(c.payload, off);
        if (k % wpp == wpp - 1 && (words[k] & pad_mask) != 0) {
          throw FormatError(c.payload_file.string() + ": padding bits set in filter " + std::to_string(f) +
                            " at offset " + std::to_string(c.payload_offset + off));
        }
      }
      const auto& fj = filters[f];
      a.alphas = fj.at("alphas").get<std::vector<double>>();
      a.residual = fj.value("residual", 0.0);
      if (fj.contains("bias") && !fj.at("bias").is_null()) a.bias = fj.at("bias").get<double>();
      if (a.alphas.size() != m) throw FormatError(path.string() + ": filter " + std::to_string(f) + " alpha count");
      for (const double v : a.alphas) {
        if (!std::isfinite(v)) throw FormatError(path.string() + ": non-finite alpha in filter " + std::to_string(f));
      }
      if (!(a.residual >= 0.0)) throw FormatError(path.string() + ": negative residual in filter " + std::to_string(f));
      bank.push_back(std::move(a));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  return bank;
}

void write_program(const fs::path& path, const isa::Program& p) {
  const auto ext = path.extension();
  if (ext == ".s" || ext == ".asm") {
    write_text(path, p.to_text(true));
  } else {
    write_bytes(path, isa::to_binary(p));
  }
}

isa::Program read_program(const fs::path& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), "BARR", 4) == 0) {
    try {
      return isa::from_binary(bytes);
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ": " + e.what());
    }
  }
  return isa::assemble(std::string(bytes.begin(), bytes.end()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return {bytes.begin(), bytes.end()};
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

json to_json(const approx::CompressionReport& r) {
  json j = {{"original_bits", r.original_bits}, {"compressed_bits", r.compressed_bits}, {"factor", r.factor}};
  j["per_layer"] = json::array();
  for (const auto& e : r.per_layer) {
    j["per_layer"].push_back({{"layer", e.layer},
                              {"N_c", e.n_c},
                              {"M", e.levels},
                              {"filters", e.filters},
                              {"original_bits", e.original_bits},
                              {"compressed_bits", e.compressed_bits},
                              {"factor", e.factor}});
  }
  return j;
}

json to_json(const sim::CycleReport& r) {
  json j = {{"total_cycles", r.total_cycles}, {"setup_cycles", r.setup_cycles}, {"fps", r.fps},
            {"hlt_waits", r.hlt_waits},       {"branches", r.branches}};
  j["layers"] = json::array();
  for (const auto& l : r.layers) {
    j["layers"].push_back({{"layer", l.layer},
                           {"cycles", l.cycles},
                           {"pe_accum_cycles", l.pe_accum_cycles},
                           {"serial_stall_cycles", l.serial_stall_cycles},
                           {"latency_cycles", l.latency_cycles},
                           {"jobs", l.jobs},
                           {"rounds", l.rounds},
                           {"tiles", l.tiles},
                           {"level_chunks", l.level_chunks},
                           {"levels", l.levels},
                           {"windows", l.windows},
                           {"utilization", l.utilization},
                           {"local_resident", l.local_resident},
                           {"weight_bits_per_pa", l.weight_bits_per_pa}});
  }
  return j;
}

}  // namespace binarray::io
