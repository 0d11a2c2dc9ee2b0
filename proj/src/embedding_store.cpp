#include "emoprobe/embedding_store.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "binary_io.hpp"
#include "emoprobe/error.hpp"

namespace emoprobe {

using detail::ByteReader;
using detail::ByteWriter;

EmbeddingRecord::EmbeddingRecord(std::string id, Domain dom, Emotion emo, std::string tag,
                                 std::size_t num_layers, std::size_t num_frames, std::size_t dim)
    : utterance_id(std::move(id)),
      domain(dom),
      emotion(emo),
      model_tag(std::move(tag)),
      layers_(num_layers),
      frames_(num_frames),
      dim_(dim),
      values_(num_layers * num_frames * dim, 0.0f) {}

Eigen::MatrixXd EmbeddingRecord::layer_matrix(std::size_t layer) const {
  if (layer >= layers_) {
    throw DimensionMismatch("layer " + std::to_string(layer) + " out of range for record " + utterance_id);
  }
  Eigen::MatrixXd out(static_cast<Eigen::Index>(frames_), static_cast<Eigen::Index>(dim_));
  for (std::size_t t = 0; t < frames_; ++t) {
    for (std::size_t d = 0; d < dim_; ++d) {
      out(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(d)) = at(layer, t, d);
    }
  }
  return out;
}

void EmbeddingRecord::validate() const {
  if (layers_ == 0 || frames_ == 0 || dim_ == 0) {
    throw ValidationError("record '" + utterance_id + "' has an empty L x T x D shape");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      const std::size_t l = i / (frames_ * dim_);
      const std::size_t t = (i / dim_) % frames_;
      throw ValidationError("record '" + utterance_id + "' has a non-finite value at layer " +
                            std::to_string(l) + ", frame " + std::to_string(t) + ", dim " +
                            std::to_string(i % dim_));
    }
  }
}

namespace detail {

std::vector<char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on '" + path + "'");
}

}  // namespace detail

namespace {

void encode_header(ByteWriter& w, const EmbeddingFileHeader& h) {
  w.bytes(std::string_view(EmbeddingFileHeader::kMagic.data(), EmbeddingFileHeader::kMagic.size()));
  w.u32(h.format_version);
  w.u32(h.num_layers);
  w.u32(h.dim);
  w.u64(h.record_count);
  w.u64(h.index_offset);
}

EmbeddingFileHeader decode_header(ByteReader& r, const std::string& path) {
  if (r.size() < EmbeddingFileHeader::kSize) {
    throw FormatError("'" + path + "' is too short to hold an embedding file header");
  }
  const std::string magic = r.bytes(8);
  if (!std::equal(magic.begin(), magic.end(), EmbeddingFileHeader::kMagic.begin())) {
    throw FormatError("'" + path + "' has a bad magic number");
  }
  EmbeddingFileHeader h;
  h.format_version = r.u32();
  if (h.format_version != EmbeddingFileHeader::kVersion) {
    throw FormatError("'" + path + "' has unsupported format version " + std::to_string(h.format_version));
  }
  h.num_layers = r.u32();
  h.dim = r.u32();
  h.record_count = r.u64();
  h.index_offset = r.u64();
  if (h.index_offset < EmbeddingFileHeader::kSize || h.index_offset > r.size()) {
    throw CorruptionError("'" + path + "' index offset " + std::to_string(h.index_offset) +
                          " lies outside the file");
  }
  if (h.record_count > (r.size() - h.index_offset) / 16) {
    throw CorruptionError("'" + path + "' is truncated: index holds fewer than " +
                          std::to_string(h.record_count) + " entries");
  }
  return h;
}

struct IndexEntry {
  std::uint64_t offset;
  std::uint64_t length;
};

std::vector<IndexEntry> decode_index(ByteReader& r, const EmbeddingFileHeader& h, const std::string& path) {
  r.seek(h.index_offset);
  std::vector<IndexEntry> entries(h.record_count);
  for (auto& e : entries) {
    e.offset = r.u64();
    e.length = r.u64();
    if (e.offset < EmbeddingFileHeader::kSize || e.offset > h.index_offset ||
        e.length > h.index_offset - e.offset) {
      throw CorruptionError("'" + path + "' has an index entry pointing outside the payload region");
    }
  }
  return entries;
}

struct RecordPrefix {
  std::string id;
  Domain domain;
  Emotion emotion;
  std::string tag;
  std::uint32_t frames;
};

RecordPrefix decode_prefix(ByteReader& r) {
  RecordPrefix p;
  p.id = r.str();
  const auto dom = r.u8();
  const auto emo = r.u8();
  if (dom > 1) r.fail("invalid domain code " + std::to_string(dom) + " in record '" + p.id + "'");
  if (emo >= kNumEmotions) r.fail("invalid emotion code " + std::to_string(emo) + " in record '" + p.id + "'");
  p.domain = static_cast<Domain>(dom);
  p.emotion = static_cast<Emotion>(emo);
  p.tag = r.str();
  p.frames = r.u32();
  return p;
}

}  // namespace

void write_embedding_file(std::span<const EmbeddingRecord> records, const std::filesystem::path& path) {
  const std::string p = path.string();
  EmbeddingFileHeader header;
  if (!records.empty()) {
    header.num_layers = static_cast<std::uint32_t>(records.front().num_layers());
    header.dim = static_cast<std::uint32_t>(records.front().dim());
  }
  std::unordered_set<std::string> seen;
  for (const auto& rec : records) {
    if (rec.num_layers() != header.num_layers || rec.dim() != header.dim) {
      throw DimensionMismatch("record '" + rec.utterance_id + "' has L=" + std::to_string(rec.num_layers()) +
                              ", D=" + std::to_string(rec.dim()) + " but the file uses L=" +
                              std::to_string(header.num_layers) + ", D=" + std::to_string(header.dim));
    }
    if (!seen.insert(rec.utterance_id).second) {
      throw DuplicateKey("duplicate utterance id '" + rec.utterance_id + "'");
    }
    rec.validate();
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p + "' for writing");

  ByteWriter w;
  encode_header(w, header);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));

  std::vector<IndexEntry> index;
  index.reserve(records.size());
  std::uint64_t offset = EmbeddingFileHeader::kSize;
  for (const auto& rec : records) {
    w.clear();
    w.str(rec.utterance_id);
    w.u8(static_cast<std::uint8_t>(rec.domain));
    w.u8(static_cast<std::uint8_t>(rec.emotion));
    w.str(rec.model_tag);
    w.u32(static_cast<std::uint32_t>(rec.num_frames()));
    for (float v : rec.values()) w.f32(v);
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));
    index.push_back({offset, w.size()});
    offset += w.size();
  }
  if (!out) throw IoError("write failure on '" + p + "'");

  header.record_count = records.size();
  header.index_offset = offset;
  w.clear();
  for (const auto& e : index) {
    w.u64(e.offset);
    w.u64(e.length);
  }
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));

  w.clear();
  encode_header(w, header);
  out.seekp(0);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.size()));
  out.flush();
  if (!out) throw IoError("write failure on '" + p + "'");
}

EmbeddingFileHeader read_embedding_header(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path.string());
  ByteReader r(bytes.data(), bytes.size(), path.string());
  return decode_header(r, path.string());
}

std::vector<EmbeddingRecord> read_embedding_file(const std::filesystem::path& path) {
  const std::string p = path.string();
  const auto bytes = detail::read_file_bytes(p);
  ByteReader r(bytes.data(), bytes.size(), p);
  const auto header = decode_header(r, p);
  const auto index = decode_index(r, header, p);

  std::vector<EmbeddingRecord> records;
  records.reserve(index.size());
  std::unordered_set<std::string> seen;
  for (const auto& entry : index) {
    ByteReader rr(bytes.data(), entry.offset + entry.length, p);
    rr.seek(entry.offset);
    auto prefix = decode_prefix(rr);
    if (!seen.insert(prefix.id).second) throw DuplicateKey("'" + p + "' repeats utterance id '" + prefix.id + "'");
    EmbeddingRecord rec(std::move(prefix.id), prefix.domain, prefix.emotion, std::move(prefix.tag),
                        header.num_layers, prefix.frames, header.dim);
    const std::uint64_t n = std::uint64_t(header.num_layers) * prefix.frames * header.dim;
    if (n * 4 != entry.offset + entry.length - rr.pos()) {
      rr.fail("payload size does not match L x T x D for record '" + rec.utterance_id + "'");
    }
    for (float& v : rec.values()) v = rr.f32();
    rec.validate();
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<RecordMeta> read_embedding_index(const std::filesystem::path& path) {
  const std::string p = path.string();
  const auto bytes = detail::read_file_bytes(p);
  ByteReader r(bytes.data(), bytes.size(), p);
  const auto header = decode_header(r, p);
  const auto index = decode_index(r, header, p);
  std::vector<RecordMeta> metas;
  metas.reserve(index.size());
  for (const auto& entry : index) {
    ByteReader rr(bytes.data(), entry.offset + entry.length, p);
    rr.seek(entry.offset);
    auto prefix = decode_prefix(rr);
    metas.push_back({std::move(prefix.id), prefix.domain, prefix.emotion, entry.offset});
  }
  return metas;
}

std::vector<RecordMeta> metadata_of(std::span<const EmbeddingRecord> records) {
  std::vector<RecordMeta> metas;
  metas.reserve(records.size());
  std::uint64_t offset = EmbeddingFileHeader::kSize;
  for (const auto& rec : records) {
    metas.push_back({rec.utterance_id, rec.domain, rec.emotion, offset});
    offset += 4 + rec.utterance_id.size() + 2 + 4 + rec.model_tag.size() + 4 + 4 * rec.values().size();
  }
  return metas;
}

Split DatasetManifest::split_of(const std::string& utterance_id) const {
  const auto it = split.find(utterance_id);
  if (it == split.end()) throw ValidationError("utterance '" + utterance_id + "' is not in the manifest");
  return it->second;
}

StratumCounts split_sizes(std::size_t n) {
  StratumCounts c;
  c.total = n;
  c.train = (n * 6) / 10;
  c.val = (n * 2) / 10;
  c.test = n - c.train - c.val;
  return c;
}

DatasetManifest make_stratified_split(std::span<const RecordMeta> records, std::uint64_t seed) {
  DatasetManifest m;
  m.seed = seed;
  m.records.assign(records.begin(), records.end());
  if (records.empty()) throw InsufficientData("cannot split an empty record list");

  std::set<Domain> domains;
  std::map<StratumKey, std::vector<std::string>> strata;
  for (const auto& r : records) {
    domains.insert(r.domain);
    strata[{r.domain, r.emotion}].push_back(r.utterance_id);
  }
  for (Domain d : domains) {
    for (Emotion e : kAllEmotions) {
      if (!strata.contains({d, e})) {
        throw InsufficientData("stratum (" + std::string(to_string(d)) + ", " + std::string(to_string(e)) +
                               ") is empty");
      }
    }
  }

  std::mt19937_64 rng(seed);
  for (auto& [key, ids] : strata) {
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw DuplicateKey("duplicate utterance id in stratum (" + std::string(to_string(key.domain)) + ", " +
                         std::string(to_string(key.emotion)) + ")");
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto sizes = split_sizes(ids.size());
    if (ids.size() < 5) {
      m.warnings.push_back("stratum (" + std::string(to_string(key.domain)) + ", " +
                           std::string(to_string(key.emotion)) + ") has only " + std::to_string(ids.size()) +
                           " items");
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const Split s = i < sizes.train ? Split::train : (i < sizes.train + sizes.val ? Split::val : Split::test);
      m.split[ids[i]] = s;
    }
    m.counts[key] = sizes;
  }
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : m.records) {
    recs.push_back({{"utterance_id", r.utterance_id},
                    {"domain", to_string(r.domain)},
                    {"emotion", to_string(r.emotion)},
                    {"file_offset", r.file_offset}});
  }
  auto& split = j["split"] = nlohmann::json::object();
  for (const auto& [id, s] : m.split) split[id] = to_string(s);
  auto& counts = j["counts"] = nlohmann::json::object();
  for (const auto& [key, c] : m.counts) {
    counts[std::string(to_string(key.domain))][std::string(to_string(key.emotion))] = {
        {"total", c.total}, {"train", c.train}, {"val", c.val}, {"test", c.test}};
  }
  j["warnings"] = m.warnings;
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& r : j.at("records")) {
      const auto dom = parse_domain(r.at("domain").get<std::string>());
      const auto emo = parse_emotion(r.at("emotion").get<std::string>());
      if (!dom || !emo) throw ValidationError("manifest record has an unknown domain or emotion");
      m.records.push_back({r.at("utterance_id").get<std::string>(), *dom, *emo,
                           r.at("file_offset").get<std::uint64_t>()});
    }
    for (const auto& [id, s] : j.at("split").items()) {
      const auto split = parse_split(s.get<std::string>());
      if (!split) throw ValidationError("manifest split for '" + id + "' is invalid");
      m.split[id] = *split;
    }
    for (const auto& [dom_name, per_emotion] : j.at("counts").items()) {
      for (const auto& [emo_name, c] : per_emotion.items()) {
        const auto dom = parse_domain(dom_name);
        const auto emo = parse_emotion(emo_name);
        if (!dom || !emo) throw ValidationError("manifest counts use an unknown stratum");
        m.counts[{*dom, *emo}] = {c.at("total").get<std::size_t>(), c.at("train").get<std::size_t>(),
                                  c.at("val").get<std::size_t>(), c.at("test").get<std::size_t>()};
      }
    }
    m.warnings = j.at("warnings").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed manifest JSON: ") + e.what());
  }
  return m;
}

}  // namespace emoprobe
