#include "fastinject/corpus_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "fastinject/errors.hpp"

namespace fastinject {

namespace {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::string& ctx) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError(ctx + ": truncated record");
  return v;
}

std::filesystem::path index_path(const std::filesystem::path& archive) {
  return std::filesystem::path(archive.string() + ".idx");
}

FeatureRecord read_record(std::istream& is, const std::string& ctx) {
  FeatureRecord r;
  const auto len = get<std::uint32_t>(is, ctx);
  r.utt_id.resize(len);
  if (!is.read(r.utt_id.data(), len)) throw DataError(ctx + ": truncated id");
  const auto rows = get<std::uint64_t>(is, ctx);
  const auto cols = get<std::uint64_t>(is, ctx);
  if (rows > (1u << 24) || cols > (1u << 16)) throw DataError(ctx + ": implausible shape");
  r.feats.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  const auto bytes = static_cast<std::streamsize>(rows * cols * sizeof(double));
  if (!is.read(reinterpret_cast<char*>(r.feats.data()), bytes)) {
    throw DataError(ctx + ": truncated features for " + r.utt_id);
  }
  return r;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw IoError("cannot open " + path.string());
  return is;
}

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;

void fnv1a(std::uint64_t& h, const char* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
}

std::string hex(std::uint64_t h) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

}  // namespace

void write_feature_archive(const std::filesystem::path& archive,
                           const std::vector<FeatureRecord>& records) {
  std::ofstream os = open_out(archive, std::ios::binary);
  std::ofstream idx = open_out(index_path(archive));
  for (const auto& r : records) {
    idx << r.utt_id << '\t' << static_cast<std::uint64_t>(os.tellp()) << '\n';
    put(os, static_cast<std::uint32_t>(r.utt_id.size()));
    os.write(r.utt_id.data(), static_cast<std::streamsize>(r.utt_id.size()));
    put(os, static_cast<std::uint64_t>(r.feats.rows()));
    put(os, static_cast<std::uint64_t>(r.feats.cols()));
    os.write(reinterpret_cast<const char*>(r.feats.data()),
             static_cast<std::streamsize>(r.feats.size() * sizeof(double)));
  }
  if (!os || !idx) throw IoError("failed writing " + archive.string());
}

std::vector<FeatureRecord> read_feature_archive(const std::filesystem::path& archive) {
  std::ifstream is = open_in(archive, std::ios::binary);
  std::vector<FeatureRecord> out;
  while (is.peek() != std::char_traits<char>::eof()) {
    out.push_back(read_record(is, archive.string()));
  }
  return out;
}

Matrix read_feature(const std::filesystem::path& archive, const std::string& utt_id) {
  std::ifstream idx = open_in(index_path(archive));
  std::string line;
  while (std::getline(idx, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(index_path(archive).string() + ": bad line");
    if (line.compare(0, tab, utt_id) != 0 || tab != utt_id.size()) continue;
    std::ifstream is = open_in(archive, std::ios::binary);
    is.seekg(static_cast<std::streamoff>(std::stoull(line.substr(tab + 1))));
    FeatureRecord r = read_record(is, archive.string());
    if (r.utt_id != utt_id) throw DataError(archive.string() + ": index points at " + r.utt_id);
    return r.feats;
  }
  throw DataError(archive.string() + ": no utterance " + utt_id);
}

void write_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& lines) {
  std::ofstream os = open_out(path);
  for (const auto& [id, text] : lines) os << id << '\t' << text << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<Transcript> read_transcripts(const std::filesystem::path& path) {
  std::ifstream is = open_in(path);
  std::vector<Transcript> out;
  std::unordered_set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected utt_id<TAB>text");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    if (!seen.insert(out.back().first).second) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": duplicate utt_id " + out.back().first);
    }
  }
  return out;
}

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ofstream os = open_out(path);
  for (const auto& id : ids) os << id << '\n';
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
  std::ifstream is = open_in(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream is = open_in(path, std::ios::binary);
  std::uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    fnv1a(h, buf, static_cast<std::size_t>(is.gcount()));
  }
  return hex(h);
}

std::string directory_digest(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(std::filesystem::relative(e.path(), dir));
  }
  std::sort(files.begin(), files.end());
  std::string joined;
  for (const auto& f : files) joined += f.generic_string() + ' ' + file_digest(dir / f) + '\n';
  std::uint64_t h = kFnvOffset;
  fnv1a(h, joined.data(), joined.size());
  return hex(h);
}

}  // namespace fastinject
