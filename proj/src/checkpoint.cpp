#include "fastinject/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "fastinject/errors.hpp"

namespace fastinject {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_pod(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("checkpoint truncated while reading " + what);
  }
  return v;
}

std::string read_string(std::istream& is, const std::string& what) {
  const auto n = read_pod<std::uint32_t>(is, what);
  if (n > (1u << 20)) throw DataError("checkpoint string too long in " + what);
  std::string s(n, '\0');
  if (!is.read(s.data(), n)) throw DataError("checkpoint truncated while reading " + what);
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const Manifest& manifest) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  write_pod<std::uint64_t>(os, manifest.size());
  for (const auto& [k, v] : manifest) {
    write_string(os, k);
    write_string(os, v);
  }
  write_pod<std::uint64_t>(os, params.size());
  for (const auto& [name, t] : params.entries()) {
    write_string(os, name);
    write_pod<std::uint32_t>(os, 2);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(t.rows()));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(t.cols()));
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic) - 1];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw DataError(path.string() + " is not an FJCKPT1 checkpoint");
  }
  Checkpoint ck;
  const auto entries = read_pod<std::uint64_t>(is, "manifest size");
  for (std::uint64_t i = 0; i < entries; ++i) {
    std::string k = read_string(is, "manifest key");
    ck.manifest[k] = read_string(is, "manifest value");
  }
  const auto tensors = read_pod<std::uint64_t>(is, "tensor count");
  for (std::uint64_t i = 0; i < tensors; ++i) {
    std::string name = read_string(is, "tensor name");
    const auto rank = read_pod<std::uint32_t>(is, name);
    if (rank != 2) throw DataError("checkpoint tensor " + name + " has unsupported rank");
    const auto rows = read_pod<std::uint64_t>(is, name);
    const auto cols = read_pod<std::uint64_t>(is, name);
    if (rows * cols > (1ull << 28)) throw DataError("checkpoint tensor " + name + " too large");
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    if (!is.read(reinterpret_cast<char*>(m.data()),
                 static_cast<std::streamsize>(rows * cols * sizeof(double)))) {
      throw DataError("checkpoint truncated in tensor " + name);
    }
    ck.params.add(name, std::move(m));
  }
  return ck;
}

}  // namespace fastinject
