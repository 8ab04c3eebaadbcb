#include "ssmvae/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <type_traits>

namespace ssmvae {

namespace {

constexpr char kMagic[4] = {'S', 'M', 'V', 'T'};

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}
  std::size_t remaining() const { return b_.size() - pos_; }
  void need(std::uint64_t n, const std::string& what) const {
    if (n > remaining()) {
      throw FormatError(FormatErrorKind::kTruncated, "SMVT truncated while reading " + what);
    }
  }
  std::uint64_t le(int n, const std::string& what) {
    need(static_cast<std::uint64_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  const std::uint8_t* take(std::size_t n, const std::string& what) {
    need(n, what);
    const std::uint8_t* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

std::size_t element_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kI64: return 8;
    case DType::kU8: return 1;
  }
  return 0;
}

std::size_t payload_size(const Tensor& t) {
  return std::visit([](const auto& v) { return v.size(); }, t.data);
}

}  // namespace

std::uint64_t Tensor::num_elements() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> encode_smvt(const TensorMap& entries) {
  if (entries.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatErrorKind::kBadEntry, "SMVT: too many entries");
  }
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kSmvtVersion);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw FormatError(FormatErrorKind::kBadEntry, "SMVT: entry name too long");
    }
    if (t.num_elements() != payload_size(t)) {
      throw FormatError(FormatErrorKind::kBadEntry,
                        "SMVT: entry '" + name + "' payload disagrees with its dims");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) w.u64(d);
    w.u8(static_cast<std::uint8_t>(t.dtype()));
    std::visit(
        [&](const auto& v) {
          using T = typename std::decay_t<decltype(v)>::value_type;
          for (T x : v) {
            if constexpr (std::is_same_v<T, float>) {
              w.u32(std::bit_cast<std::uint32_t>(x));
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
              w.u64(static_cast<std::uint64_t>(x));
            } else {
              w.u8(x);
            }
          }
        },
        t.data);
  }
  return w.take();
}

TensorMap decode_smvt(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  const std::uint8_t* magic = r.take(4, "magic");
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw FormatError(FormatErrorKind::kBadMagic, "SMVT: bad magic bytes");
  }
  const auto version = r.le(4, "version");
  if (version != kSmvtVersion) {
    throw FormatError(FormatErrorKind::kBadVersion,
                      "SMVT: unsupported version " + std::to_string(version));
  }
  const auto count = r.le(4, "entry count");
  TensorMap out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto name_len = static_cast<std::size_t>(r.le(2, "name length"));
    const std::uint8_t* name_bytes = r.take(name_len, "entry name");
    std::string name(reinterpret_cast<const char*>(name_bytes), name_len);
    const auto ndim = r.le(4, "ndim of '" + name + "'");
    r.need(ndim * 8, "dims of '" + name + "'");
    Tensor t;
    std::uint64_t elements = 1;
    for (std::uint64_t i = 0; i < ndim; ++i) {
      const auto d = r.le(8, "dims");
      if (d != 0 && elements > std::numeric_limits<std::uint64_t>::max() / d) {
        throw FormatError(FormatErrorKind::kDimensionOverflow,
                          "SMVT: element count of '" + name + "' overflows");
      }
      elements *= d;
      t.dims.push_back(d);
    }
    const auto tag = r.le(1, "dtype of '" + name + "'");
    if (tag > static_cast<std::uint64_t>(DType::kU8)) {
      throw FormatError(FormatErrorKind::kBadDtype,
                        "SMVT: unknown dtype tag " + std::to_string(tag));
    }
    const auto dtype = static_cast<DType>(tag);
    const std::size_t size = element_size(dtype);
    if (elements > std::numeric_limits<std::uint64_t>::max() / size) {
      throw FormatError(FormatErrorKind::kDimensionOverflow,
                        "SMVT: byte size of '" + name + "' overflows");
    }
    r.need(elements * size, "payload of '" + name + "'");
    const auto n = static_cast<std::size_t>(elements);
    const std::uint8_t* p = r.take(n * size, "payload");
    auto le_at = [&](std::size_t i, std::size_t width) {
      std::uint64_t v = 0;
      for (std::size_t b = 0; b < width; ++b) v |= static_cast<std::uint64_t>(p[i * width + b]) << (8 * b);
      return v;
    };
    if (dtype == DType::kF32) {
      std::vector<float> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<float>(static_cast<std::uint32_t>(le_at(i, 4)));
      t.data = std::move(v);
    } else if (dtype == DType::kI64) {
      std::vector<std::int64_t> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<std::int64_t>(le_at(i, 8));
      t.data = std::move(v);
    } else {
      t.data = std::vector<std::uint8_t>(p, p + n);
    }
    if (!out.emplace(std::move(name), std::move(t)).second) {
      throw FormatError(FormatErrorKind::kBadEntry, "SMVT: duplicate entry name");
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrorKind::kTrailingBytes, "SMVT: trailing bytes after last entry");
  }
  return out;
}

void write_smvt(const std::string& path, const TensorMap& entries) {
  const std::vector<std::uint8_t> bytes = encode_smvt(entries);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatErrorKind::kIo, "cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatErrorKind::kIo, "failed writing '" + path + "'");
}

TensorMap read_smvt(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatErrorKind::kIo, "cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  if (f.bad()) throw FormatError(FormatErrorKind::kIo, "failed reading '" + path + "'");
  return decode_smvt(bytes);
}

Tensor text_tensor(const std::string& text) {
  return Tensor{{text.size()}, std::vector<std::uint8_t>(text.begin(), text.end())};
}

std::string tensor_text(const Tensor& t) {
  const auto* v = std::get_if<std::vector<std::uint8_t>>(&t.data);
  if (!v || t.dims.size() != 1) throw FormatError(FormatErrorKind::kBadEntry, "not a text entry");
  return std::string(v->begin(), v->end());
}

const Tensor& require_entry(const TensorMap& entries, const std::string& name, DType dtype,
                            std::size_t ndim) {
  const auto it = entries.find(name);
  if (it == entries.end()) {
    throw FormatError(FormatErrorKind::kMissingEntry, "missing entry '" + name + "'");
  }
  if (it->second.dtype() != dtype || it->second.dims.size() != ndim) {
    throw FormatError(FormatErrorKind::kBadEntry, "entry '" + name + "' has unexpected type or rank");
  }
  return it->second;
}

}  // namespace ssmvae
