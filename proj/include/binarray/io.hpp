#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "binarray/arraysim.hpp"
#include "binarray/binapprox.hpp"
#include "binarray/tensor.hpp"
#include "binarray/weights.hpp"
#include "json.hpp"

/// File formats. Layouts are documented in docs/formats.md.
namespace binarray::io {

enum class DType { kF64, kI32, kU8 };

std::string_view dtype_name(DType t);

/// Container header alignment: raw data starts at a multiple of this.
inline constexpr std::size_t kDataAlign = 64;

/// Writes a JSON header padded to kDataAlign followed by little-endian data.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
void write_tensor(const std::filesystem::path& path, const IntTensor& t, DType dtype = DType::kI32);

/// Reads any dtype; integer payloads are widened.
Tensor read_tensor(const std::filesystem::path& path);
IntTensor read_int_tensor(const std::filesystem::path& path);
DType tensor_dtype(const std::filesystem::path& path);

/// One file per layer bank: JSON header {M, N_c, filters:[{alphas, bias, residual}]}
/// then bit-planes as 64-bit little-endian words, filter-major then plane-major.
void write_bank(const std::filesystem::path& path, const ApproxBank& bank);
ApproxBank read_bank(const std::filesystem::path& path);

void write_program(const std::filesystem::path& path, const isa::Program& p);
isa::Program read_program(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

nlohmann::json to_json(const approx::CompressionReport& r);
nlohmann::json to_json(const sim::CycleReport& r);

/// 64-bit FNV-1a, used as the payload checksum in container headers.
std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n);

}  // namespace binarray::io
