#pragma once

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace advpurify::datasets {

struct NamedTensor {
  std::string name;
  torch::Tensor tensor;
};

using TensorList = std::vector<NamedTensor>;

// Binary tensor container, little-endian:
//
//   "APTS" | u32 version | u32 count
//   count x { u32 name_len | name | u32 dtype | u32 ndim | i64 dims[ndim] | u64 nbytes | payload }
//   u32 crc32 of everything above
//
// Payloads are the raw row-major bytes, so float tensors round-trip bit-exactly.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

std::string encode_tensors(const TensorList& tensors);
// Throws FormatError on any header, size or checksum mismatch; never returns
// a partial list.
TensorList decode_tensors(std::string_view bytes);

void save_tensors(const std::filesystem::path& path, const TensorList& tensors);
TensorList load_tensors(const std::filesystem::path& path);

const torch::Tensor& find_tensor(const TensorList& tensors, std::string_view name);

// Checkpoint file: a structured-text header followed by a tensor container.
//
//   "APCK" | u32 version | u64 header_len | header (JSON text) | tensor container
inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointFile {
  nlohmann::json header;
  TensorList tensors;
};

void write_checkpoint_file(const std::filesystem::path& path, const nlohmann::json& header,
                           const TensorList& tensors);
CheckpointFile read_checkpoint_file(const std::filesystem::path& path);

// Parameters and buffers of a module, keyed by their dotted names.
TensorList module_state(const torch::nn::Module& module, std::string_view prefix = "");
void load_module_state(torch::nn::Module& module, const TensorList& tensors, std::string_view prefix = "");

// SHA-256 hex digest.
std::string sha256_hex(std::string_view bytes);
std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, so readers never see a
// half-written artifact.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace advpurify::datasets
