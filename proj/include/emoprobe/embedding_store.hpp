#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emoprobe/labels.hpp"

namespace emoprobe {

// One utterance: per-layer, per-frame features plus metadata.
// Values are stored row-major as [layer][frame][dim] in single precision,
// matching the on-disk payload so write/read is bit-exact.
class EmbeddingRecord {
 public:
  EmbeddingRecord() = default;
  EmbeddingRecord(std::string utterance_id, Domain domain, Emotion emotion, std::string model_tag,
                  std::size_t num_layers, std::size_t num_frames, std::size_t dim);

  std::string utterance_id;
  Domain domain = Domain::speech;
  Emotion emotion = Emotion::neutral;
  std::string model_tag;

  std::size_t num_layers() const { return layers_; }
  std::size_t num_frames() const { return frames_; }
  std::size_t dim() const { return dim_; }

  float& at(std::size_t layer, std::size_t frame, std::size_t d) {
    return values_[(layer * frames_ + frame) * dim_ + d];
  }
  float at(std::size_t layer, std::size_t frame, std::size_t d) const {
    return values_[(layer * frames_ + frame) * dim_ + d];
  }

  // T x D slice for one layer (0-based), widened to double.
  Eigen::MatrixXd layer_matrix(std::size_t layer) const;

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  // Throws ValidationError on empty shape or non-finite payload.
  void validate() const;

  friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;

 private:
  std::size_t layers_ = 0;
  std::size_t frames_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> values_;
};

// Fixed-size preamble of an embedding file. All integers little-endian.
struct EmbeddingFileHeader {
  static constexpr std::array<char, 8> kMagic = {'E', 'M', 'O', 'E', 'M', 'B', 'D', '\x01'};
  static constexpr std::uint32_t kVersion = 1;
  static constexpr std::size_t kSize = 8 + 4 + 4 + 4 + 8 + 8;

  std::uint32_t format_version = kVersion;
  std::uint32_t num_layers = 0;
  std::uint32_t dim = 0;
  std::uint64_t record_count = 0;
  std::uint64_t index_offset = 0;
};

struct RecordMeta {
  std::string utterance_id;
  Domain domain = Domain::speech;
  Emotion emotion = Emotion::neutral;
  std::uint64_t file_offset = 0;

  friend bool operator==(const RecordMeta&, const RecordMeta&) = default;
};

void write_embedding_file(std::span<const EmbeddingRecord> records, const std::filesystem::path& path);

std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path);

EmbeddingFileHeader read_embedding_header(const std::filesystem::path& path);

// Reads the tail index plus each record's metadata, skipping tensor payloads.
std::vector<RecordMeta> read_embedding_index(const std::filesystem::path& path);

std::vector<RecordMeta> metadata_of(std::span<const EmbeddingRecord> records);

struct StratumKey {
  Domain domain;
  Emotion emotion;
  auto operator<=>(const StratumKey&) const = default;
};

struct StratumCounts {
  std::size_t total = 0;
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  friend bool operator==(const StratumCounts&, const StratumCounts&) = default;
};

struct DatasetManifest {
  std::vector<RecordMeta> records;
  std::map<std::string, Split> split;
  std::uint64_t seed = 0;
  std::map<StratumKey, StratumCounts> counts;
  std::vector<std::string> warnings;

  Split split_of(const std::string& utterance_id) const;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

// train = floor(0.6 n), val = floor(0.2 n), test = remainder.
StratumCounts split_sizes(std::size_t n);

DatasetManifest make_stratified_split(std::span<const RecordMeta> records, std::uint64_t seed);

// Stable-key JSON text (sorted object keys, 2-space indent, trailing newline).
std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

}  // namespace emoprobe
