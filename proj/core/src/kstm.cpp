#include "styleforge/kstm.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "bytes.hpp"
#include "styleforge/error.hpp"
#include "styleforge/io.hpp"

namespace styleforge {

std::vector<std::byte> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace kstm {

namespace {

constexpr char kMagic[4] = {'K', 'S', 'T', 'M'};

}  // namespace

std::uint32_t crc32(std::span<const std::byte> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes a uInt length; feed in blocks.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const std::size_t block = std::min<std::size_t>(bytes.size() - offset, 1u << 30);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + offset),
                  static_cast<uInt>(block));
    offset += block;
  }
  return static_cast<std::uint32_t>(crc);
}

const NamedTensor* Container::find(std::string_view name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const NamedTensor& Container::get(std::string_view name) const {
  if (const NamedTensor* t = find(name)) return *t;
  throw ParseError(ParseErrc::missing_tensor, "tensor \"" + std::string(name) + "\" not found");
}

std::vector<std::byte> encode(const Container& container) {
  detail::ByteWriter w;
  w.put_bytes(std::as_bytes(std::span(kMagic)));
  w.put<std::uint32_t>(kVersion);
  w.put<float>(container.alpha);
  w.put<float>(container.beta);
  w.put<std::uint8_t>(container.variant);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(container.tensors.size()));
  for (const NamedTensor& t : container.tensors) {
    if (t.name.size() > 0xFFFF) throw InvalidArgument("kstm: tensor name too long");
    if (t.dims.empty() || t.dims.size() > 0xFF) throw InvalidArgument("kstm: bad tensor rank");
    std::size_t count = 1;
    for (std::uint32_t d : t.dims) count *= d;
    if (count != t.data.size()) {
      throw InvalidArgument("kstm: tensor \"" + t.name + "\" dims disagree with payload");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
    w.put_string(t.name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.dims.size()));
    w.put_array(std::span<const std::uint32_t>(t.dims));
    w.put_array(std::span<const float>(t.data));
  }
  auto& bytes = w.bytes();
  const std::uint32_t crc = crc32(std::span(bytes).subspan(sizeof(kMagic)));
  w.put<std::uint32_t>(crc);
  return std::move(bytes);
}

Container decode(std::span<const std::byte> bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError(ParseErrc::bad_magic, "kstm: missing \"KSTM\" magic");
  }
  detail::ByteReader r(bytes, "kstm");
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) {
    throw ParseError(ParseErrc::unsupported_version,
                     "kstm: version " + std::to_string(version) + ", expected " +
                         std::to_string(kVersion));
  }
  Container c;
  c.alpha = r.get<float>();
  c.beta = r.get<float>();
  c.variant = r.get<std::uint8_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = r.get<std::uint16_t>();
    auto name = r.take(name_len);
    t.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
    const auto rank = r.get<std::uint8_t>();
    if (rank == 0) throw ParseError(ParseErrc::malformed, "kstm: tensor \"" + t.name + "\" has rank 0");
    t.dims.resize(rank);
    r.get_array(std::span(t.dims));
    std::size_t elements = 1;
    for (std::uint32_t d : t.dims) {
      if (d != 0 && elements > r.remaining() / d) {
        throw ParseError(ParseErrc::truncated,
                         "kstm: payload of \"" + t.name + "\" exceeds the file");
      }
      elements *= d;
    }
    if (elements * sizeof(float) > r.remaining()) {
      throw ParseError(ParseErrc::truncated,
                       "kstm: payload of \"" + t.name + "\" exceeds the file");
    }
    t.data.resize(elements);
    r.get_array(std::span(t.data));
    c.tensors.push_back(std::move(t));
  }
  const std::size_t body_end = r.position();
  const auto stored = r.get<std::uint32_t>();
  if (r.remaining() != 0) {
    throw ParseError(ParseErrc::trailing_data,
                     "kstm: " + std::to_string(r.remaining()) + " bytes after checksum");
  }
  const std::uint32_t actual = crc32(bytes.subspan(sizeof(kMagic), body_end - sizeof(kMagic)));
  if (stored != actual) {
    throw ParseError(ParseErrc::checksum_mismatch, "kstm: CRC-32 mismatch");
  }
  return c;
}

void write_file(const std::filesystem::path& path, const Container& container) {
  write_bytes(path, encode(container));
}

Container read_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return decode(bytes);
  } catch (const ParseError& e) {
    throw ParseError(e.code(), path.string() + ": " + e.what());
  }
}

NamedTensor from_tensor(std::string name, const Tensor& t, int rank) {
  NamedTensor out;
  out.name = std::move(name);
  if (rank == 1) {
    out.dims = {static_cast<std::uint32_t>(t.size())};
  } else {
    const Shape& s = t.shape();
    out.dims = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  }
  out.data.assign(t.data().begin(), t.data().end());
  return out;
}

Tensor to_tensor(const NamedTensor& entry, const Shape& expected) {
  bool ok = entry.data.size() == expected.numel();
  if (ok && entry.dims.size() == 4) {
    ok = entry.dims[0] == static_cast<std::uint32_t>(expected.n) &&
         entry.dims[1] == static_cast<std::uint32_t>(expected.c) &&
         entry.dims[2] == static_cast<std::uint32_t>(expected.h) &&
         entry.dims[3] == static_cast<std::uint32_t>(expected.w);
  } else if (ok && entry.dims.size() != 1) {
    ok = false;
  }
  if (!ok) {
    std::string dims;
    for (std::uint32_t d : entry.dims) dims += (dims.empty() ? "" : "x") + std::to_string(d);
    throw ParseError(ParseErrc::shape_mismatch, "tensor \"" + entry.name + "\" has dims " +
                                                    dims + ", expected " + expected.str());
  }
  return Tensor(expected, entry.data);
}

}  // namespace kstm
}  // namespace styleforge
