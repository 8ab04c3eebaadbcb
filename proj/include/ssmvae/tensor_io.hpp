#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ssmvae {

enum class DType : std::uint8_t { kF32 = 0, kI64 = 1, kU8 = 2 };

/// Named array held in an SMVT file. Payload is row-major.
struct Tensor {
  std::vector<std::uint64_t> dims;
  std::variant<std::vector<float>, std::vector<std::int64_t>, std::vector<std::uint8_t>> data;

  DType dtype() const { return static_cast<DType>(data.index()); }
  std::uint64_t num_elements() const;
  bool operator==(const Tensor& other) const = default;
};

enum class FormatErrorKind {
  kBadMagic,
  kBadVersion,
  kTruncated,
  kDimensionOverflow,
  kBadDtype,
  kTrailingBytes,
  kIo,
  kMissingEntry,
  kBadEntry,
};

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  FormatErrorKind kind() const { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// SMVT container: "SMVT", u32 version, u32 entry count, then per entry
/// u16 name length, name bytes, u32 ndim, u64 dims, u8 dtype tag and the
/// little-endian payload. Entries are written in name order.
using TensorMap = std::map<std::string, Tensor>;

inline constexpr std::uint32_t kSmvtVersion = 1;

std::vector<std::uint8_t> encode_smvt(const TensorMap& entries);
/// Parses a complete buffer; throws FormatError without returning partial data.
TensorMap decode_smvt(const std::vector<std::uint8_t>& bytes);

void write_smvt(const std::string& path, const TensorMap& entries);
TensorMap read_smvt(const std::string& path);

/// Stores a UTF-8 string as a rank-1 u8 tensor and back.
Tensor text_tensor(const std::string& text);
std::string tensor_text(const Tensor& t);

/// Typed access with shape checks; throws FormatError(kMissingEntry / kBadEntry).
const Tensor& require_entry(const TensorMap& entries, const std::string& name, DType dtype,
                            std::size_t ndim);

}  // namespace ssmvae
