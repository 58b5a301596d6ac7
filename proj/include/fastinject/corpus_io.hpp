#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fastinject/tensor.hpp"

namespace fastinject {

// Feature archive: `<name>.feats` holds back-to-back records
//   u32 id length, id bytes, u64 frames, u64 dim, frames*dim little-endian doubles
// and `<name>.feats.idx` lists `utt_id<TAB>byte offset` in archive order.
struct FeatureRecord {
  std::string utt_id;
  Matrix feats;
};

void write_feature_archive(const std::filesystem::path& archive,
                           const std::vector<FeatureRecord>& records);
std::vector<FeatureRecord> read_feature_archive(const std::filesystem::path& archive);
// Random access through the index file.
Matrix read_feature(const std::filesystem::path& archive, const std::string& utt_id);

using Transcript = std::pair<std::string, std::string>;  // utt_id, text

void write_transcripts(const std::filesystem::path& path, const std::vector<Transcript>& lines);
std::vector<Transcript> read_transcripts(const std::filesystem::path& path);

void write_id_list(const std::filesystem::path& path, const std::vector<std::string>& ids);
std::vector<std::string> read_id_list(const std::filesystem::path& path);

// Lowercase hex FNV-1a 64 of a file's bytes, for reproducibility checks.
std::string file_digest(const std::filesystem::path& path);
// Digest over all regular files under `dir`, in sorted relative-path order.
std::string directory_digest(const std::filesystem::path& dir);

}  // namespace fastinject
