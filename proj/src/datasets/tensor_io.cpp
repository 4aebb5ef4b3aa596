#include "advpurify/datasets/tensor_io.hpp"

#include "advpurify/core/errors.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace advpurify::datasets {

static_assert(std::endian::native == std::endian::little, "tensor container assumes a little-endian host");

namespace {

constexpr char kTensorMagic[4] = {'A', 'P', 'T', 'S'};
constexpr char kCheckpointMagic[4] = {'A', 'P', 'C', 'K'};
constexpr std::uint32_t kMaxDims = 8;

std::uint32_t dtype_code(torch::ScalarType type) {
  switch (type) {
    case torch::kFloat32: return 1;
    case torch::kFloat64: return 2;
    case torch::kInt64: return 3;
    case torch::kUInt8: return 4;
    case torch::kBool: return 5;
    default: throw FormatError(fmt::format("unsupported tensor dtype {}", c10::toString(type)));
  }
}

torch::ScalarType dtype_from_code(std::uint32_t code) {
  switch (code) {
    case 1: return torch::kFloat32;
    case 2: return torch::kFloat64;
    case 3: return torch::kInt64;
    case 4: return torch::kUInt8;
    case 5: return torch::kBool;
    default: throw FormatError(fmt::format("unknown dtype code {}", code));
  }
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, take(sizeof(T)).data(), sizeof(T));
    return value;
  }

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw FormatError("tensor container is truncated");
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::string encode_tensors(const TensorList& tensors) {
  std::string out(kTensorMagic, 4);
  put<std::uint32_t>(out, kTensorFormatVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, raw] : tensors) {
    if (!raw.defined()) throw FormatError(fmt::format("tensor '{}' is undefined", name));
    auto t = raw.detach().cpu().contiguous();
    if (t.is_floating_point() && !torch::isfinite(t).all().item<bool>()) {
      throw CorruptTensorError(fmt::format("tensor '{}' contains non-finite values", name));
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.append(name);
    put<std::uint32_t>(out, dtype_code(t.scalar_type()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(out, d);
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    put<std::uint64_t>(out, nbytes);
    out.append(static_cast<const char*>(t.data_ptr()), nbytes);
  }
  put<std::uint32_t>(out, crc_of(out));
  return out;
}

TensorList decode_tensors(std::string_view bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kTensorMagic, 4) != 0) {
    throw FormatError("not a tensor container (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body.size(), 4);
  if (stored_crc != crc_of(body)) throw FormatError("tensor container checksum mismatch");

  Reader in(body);
  in.take(4);
  if (const auto version = in.get<std::uint32_t>(); version != kTensorFormatVersion) {
    throw FormatError(fmt::format("unsupported tensor container version {}", version));
  }
  const auto count = in.get<std::uint32_t>();
  TensorList result;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    std::string name(in.take(name_len));
    const auto dtype = dtype_from_code(in.get<std::uint32_t>());
    const auto ndim = in.get<std::uint32_t>();
    if (ndim > kMaxDims) throw FormatError(fmt::format("tensor '{}' has implausible rank {}", name, ndim));
    std::vector<std::int64_t> dims(ndim);
    std::int64_t numel = 1;
    for (auto& d : dims) {
      d = in.get<std::int64_t>();
      if (d < 0) throw FormatError(fmt::format("tensor '{}' has a negative dimension", name));
      numel *= d;
    }
    const auto nbytes = in.get<std::uint64_t>();
    const auto expected = static_cast<std::uint64_t>(numel) * c10::elementSize(dtype);
    if (nbytes != expected) {
      throw FormatError(fmt::format("tensor '{}' payload is {} bytes, shape implies {}", name, nbytes, expected));
    }
    auto payload = in.take(nbytes);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    std::memcpy(t.data_ptr(), payload.data(), nbytes);
    result.push_back({std::move(name), std::move(t)});
  }
  if (in.remaining() != 0) throw FormatError("trailing bytes after tensor container");
  return result;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError(fmt::format("cannot write '{}'", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError(fmt::format("short write to '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void save_tensors(const std::filesystem::path& path, const TensorList& tensors) {
  write_file_atomic(path, encode_tensors(tensors));
}

TensorList load_tensors(const std::filesystem::path& path) {
  return decode_tensors(read_file(path));
}

const torch::Tensor& find_tensor(const TensorList& tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw FormatError(fmt::format("tensor '{}' not found", name));
}

void write_checkpoint_file(const std::filesystem::path& path, const nlohmann::json& header,
                           const TensorList& tensors) {
  const auto text = header.dump(2);
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.append(text);
  out.append(encode_tensors(tensors));
  write_file_atomic(path, out);
}

CheckpointFile read_checkpoint_file(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  Reader in(bytes);
  if (bytes.size() < 16 || std::memcmp(in.take(4).data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(fmt::format("'{}' is not a checkpoint (bad magic)", path.string()));
  }
  if (const auto version = in.get<std::uint32_t>(); version != kCheckpointFormatVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {}", version));
  }
  const auto header_len = in.get<std::uint64_t>();
  CheckpointFile file;
  try {
    file.header = nlohmann::json::parse(in.take(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("checkpoint header is not valid JSON: {}", e.what()));
  }
  file.tensors = decode_tensors(in.take(in.remaining()));
  return file;
}

TensorList module_state(const torch::nn::Module& module, std::string_view prefix) {
  TensorList state;
  for (const auto& item : module.named_parameters(true)) {
    state.push_back({fmt::format("{}{}", prefix, item.key()), item.value().detach().clone()});
  }
  for (const auto& item : module.named_buffers(true)) {
    state.push_back({fmt::format("{}{}", prefix, item.key()), item.value().detach().clone()});
  }
  return state;
}

void load_module_state(torch::nn::Module& module, const TensorList& tensors, std::string_view prefix) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    const auto& source = find_tensor(tensors, fmt::format("{}{}", prefix, key));
    if (source.sizes() != target.sizes()) {
      throw FormatError(fmt::format("shape mismatch for '{}'", key));
    }
    target.copy_(source);
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace advpurify::datasets
