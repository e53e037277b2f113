// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace o2v {
namespace {

constexpr std::uint32_t kArchiveVersion = 1;
constexpr std::uint32_t kTextVersion = 1;
constexpr float kUnitTolerance = 1e-5f;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform in (0, 1].
double counter_uniform(std::uint64_t key, std::uint64_t counter) {
  const std::uint64_t x = splitmix64(key ^ splitmix64(counter));
  return (static_cast<double>(x >> 11) + 1.0) * 0x1.0p-53;
}

void check_mask(const InstanceMask& m, int dim, std::size_t pixel_count, std::vector<std::string>& errors,
                const std::string& where) {
  if (m.bitmap.size() != pixel_count) {
    errors.push_back(where + ": bitmap has " + std::to_string(m.bitmap.size()) + " pixels, expected " +
                     std::to_string(pixel_count));
  }
  if (m.area() == 0) errors.push_back(where + ": empty bitmap");
  if (!(m.confidence >= 0.0f && m.confidence <= 1.0f)) errors.push_back(where + ": confidence outside [0,1]");
  if (m.scale_rank >= kScaleRanks) errors.push_back(where + ": scale_rank > 2");
  if (m.embedding.size() != dim) {
    errors.push_back(where + ": embedding dim " + std::to_string(m.embedding.size()));
  } else if (!m.embedding.allFinite() || std::abs(m.embedding.norm() - 1.0f) > kUnitTolerance) {
    errors.push_back(where + ": embedding is not unit length");
  }
}

void check_rank_overlap(const FramePerception& p, std::size_t pixel_count, std::vector<std::string>& errors,
                        const std::string& where) {
  for (int rank = 0; rank < kScaleRanks; ++rank) {
    std::vector<std::uint8_t> covered(pixel_count, 0);
    for (const auto& m : p.masks) {
      if (m.scale_rank != rank || m.bitmap.size() != pixel_count) continue;
      for (std::size_t i = 0; i < pixel_count; ++i) {
        if (!m.bitmap[i]) continue;
        if (covered[i]) {
          errors.push_back(where + ": two rank-" + std::to_string(rank) + " masks cover pixel " + std::to_string(i));
          return;
        }
        covered[i] = 1;
      }
    }
  }
}

InstanceMask read_mask(ByteReader& r, int dim, std::optional<std::size_t>& pixel_count) {
  InstanceMask m;
  m.scale_rank = r.get<std::uint8_t>();
  m.confidence = r.get<float>();
  m.embedding.resize(dim);
  r.get_array(std::span<float>(m.embedding.data(), static_cast<std::size_t>(dim)));
  if (!pixel_count) {
    // Peek the runs to learn the image size from the first mask.
    ByteReader peek = r;
    const auto pairs = peek.get<std::uint32_t>();
    std::size_t total = 0;
    for (std::uint32_t i = 0; i < pairs; ++i) {
      total += peek.get<std::uint32_t>();
      total += peek.get<std::uint32_t>();
    }
    pixel_count = total;
  }
  m.bitmap = decode_rle(r, *pixel_count);
  return m;
}

}  // namespace

std::size_t InstanceMask::area() const {
  return static_cast<std::size_t>(std::count_if(bitmap.begin(), bitmap.end(), [](std::uint8_t b) { return b != 0; }));
}

void FramePerception::validate(std::size_t pixel_count) const {
  std::vector<std::string> errors;
  const std::string where = "frame " + std::to_string(frame_id);
  for (std::size_t i = 0; i < masks.size(); ++i) {
    check_mask(masks[i], embedding_dim, pixel_count, errors, where + " mask " + std::to_string(i));
  }
  check_rank_overlap(*this, pixel_count, errors, where);
  if (!errors.empty()) throw FormatError(errors.front());
}

Eigen::VectorXd stub_embed(const std::string& label, int dim) {
  if (label.empty()) throw InputError("stub_embed: empty label");
  if (dim <= 0) throw InputError("stub_embed: dim must be positive");
  const std::uint64_t key = fnv1a64({reinterpret_cast<const std::uint8_t*>(label.data()), label.size()});
  Eigen::VectorXd v(dim);
  std::uint64_t counter = 0;
  for (int i = 0; i < dim; i += 2) {
    const double u1 = counter_uniform(key, counter++);
    const double u2 = counter_uniform(key, counter++);
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
    if (i + 1 < dim) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v / v.norm();
}

StubProvider::StubProvider(SynthScene scene, StubOptions options)
    : scene_(std::move(scene)), options_(options) {}

Eigen::VectorXd StubProvider::embed_text(const std::string& text) const {
  return stub_embed(text, options_.embedding_dim);
}

FramePerception StubProvider::perceive(const RGBDFrame& frame) const {
  const GtView view = render_gt(scene_, frame.pose, frame.intrinsics);
  const std::size_t n = view.instance.size();
  FramePerception out;
  out.frame_id = frame.frame_id;
  out.embedding_dim = options_.embedding_dim;

  auto emit = [&](std::vector<std::uint8_t> bitmap, const std::string& label, float confidence) {
    InstanceMask m;
    m.bitmap = std::move(bitmap);
    if (static_cast<int>(m.area()) < std::max(options_.min_pixels, 1)) return;
    m.confidence = confidence;
    m.embedding = stub_embed(label, options_.embedding_dim).cast<float>();
    out.masks.push_back(std::move(m));
  };

  for (std::size_t obj = 0; obj < scene_.objects.size(); ++obj) {
    std::vector<std::uint8_t> bitmap(n, 0);
    std::size_t visible = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (view.instance[i] == static_cast<std::int32_t>(obj)) {
        bitmap[i] = 1;
        ++visible;
      }
    }
    if (visible == 0) continue;
    const std::size_t full = unoccluded_pixel_count(scene_.objects[obj], frame.pose, frame.intrinsics);
    const double fraction = full == 0 ? 1.0 : static_cast<double>(visible) / static_cast<double>(full);
    emit(std::move(bitmap), scene_.objects[obj].label, static_cast<float>(std::clamp(fraction, 0.05, 1.0)));
  }
  if (options_.structure_masks) {
    std::map<std::string, std::vector<std::uint8_t>> groups;
    for (const char* name : {"floor", "ceiling", "wall"}) groups[name].assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (view.surface[i] >= 0) groups[surface_label(static_cast<Surface>(view.surface[i]))][i] = 1;
    }
    for (const char* name : {"floor", "ceiling", "wall"}) emit(std::move(groups[name]), name, 1.0f);
  }
  return out;
}

bool TextEmbeddingTable::operator==(const TextEmbeddingTable& other) const {
  if (embedding_dim != other.embedding_dim || entries.size() != other.entries.size()) return false;
  auto it = other.entries.begin();
  for (const auto& [k, v] : entries) {
    if (k != it->first || v.size() != it->second.size() || v != it->second) return false;
    ++it;
  }
  return true;
}

std::vector<std::uint8_t> encode_rle(std::span<const std::uint8_t> bitmap) {
  std::vector<std::uint32_t> runs;
  std::size_t i = 0;
  while (i < bitmap.size()) {
    std::uint32_t zeros = 0, ones = 0;
    while (i < bitmap.size() && bitmap[i] == 0) ++zeros, ++i;
    while (i < bitmap.size() && bitmap[i] != 0) ++ones, ++i;
    runs.push_back(zeros);
    runs.push_back(ones);
  }
  ByteWriter w;
  w.put<std::uint32_t>(static_cast<std::uint32_t>(runs.size() / 2));
  w.put_array(std::span<const std::uint32_t>(runs));
  return std::move(w.bytes());
}

std::vector<std::uint8_t> decode_rle(ByteReader& reader, std::size_t pixel_count) {
  const auto pairs = reader.get<std::uint32_t>();
  if (static_cast<std::size_t>(pairs) > reader.remaining() / 8) throw FormatError("rle: pair count exceeds input");
  std::vector<std::uint8_t> bitmap;
  bitmap.reserve(pixel_count);
  for (std::uint32_t p = 0; p < pairs; ++p) {
    const auto zeros = reader.get<std::uint32_t>();
    const auto ones = reader.get<std::uint32_t>();
    if (bitmap.size() + zeros + ones > pixel_count) throw FormatError("rle: runs exceed the image size");
    bitmap.insert(bitmap.end(), zeros, 0);
    bitmap.insert(bitmap.end(), ones, 1);
  }
  if (bitmap.size() != pixel_count) throw FormatError("rle: runs do not cover the image");
  return bitmap;
}

std::vector<std::uint8_t> serialize_archive(const PerceptionArchive& archive) {
  ByteWriter w;
  w.put_magic("O2VP");
  w.put<std::uint32_t>(kArchiveVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(archive.embedding_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(archive.frames.size()));
  for (const auto& f : archive.frames) {
    w.put<std::uint64_t>(f.frame_id);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(f.masks.size()));
    for (const auto& m : f.masks) {
      if (m.embedding.size() != archive.embedding_dim) throw InputError("serialize_archive: embedding dim mismatch");
      w.put<std::uint8_t>(m.scale_rank);
      w.put<float>(m.confidence);
      w.put_array(std::span<const float>(m.embedding.data(), static_cast<std::size_t>(m.embedding.size())));
      w.put_bytes(encode_rle(m.bitmap));
    }
  }
  return std::move(w.bytes());
}

PerceptionArchive parse_archive(std::span<const std::uint8_t> bytes, std::optional<std::size_t> pixel_count) {
  ByteReader r(bytes);
  r.expect_magic("O2VP");
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion) throw VersionError("O2VP version " + std::to_string(version) + " unsupported");
  PerceptionArchive archive;
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0 || dim > 65536) throw FormatError("O2VP: implausible embedding dim");
  archive.embedding_dim = static_cast<int>(dim);
  const auto frames = r.get<std::uint32_t>();
  for (std::uint32_t fi = 0; fi < frames; ++fi) {
    FramePerception f;
    f.embedding_dim = archive.embedding_dim;
    f.frame_id = r.get<std::uint64_t>();
    const auto masks = r.get<std::uint32_t>();
    if (masks > r.remaining()) throw FormatError("O2VP: mask count exceeds input");
    for (std::uint32_t mi = 0; mi < masks; ++mi) f.masks.push_back(read_mask(r, archive.embedding_dim, pixel_count));
    archive.frames.push_back(std::move(f));
  }
  if (r.remaining() != 0) throw FormatError("O2VP: trailing bytes");
  return archive;
}

void write_archive(const std::filesystem::path& path, const PerceptionArchive& archive) {
  write_file(path, serialize_archive(archive));
}

PerceptionArchive read_archive(const std::filesystem::path& path, std::optional<std::size_t> pixel_count) {
  return parse_archive(read_file(path), pixel_count);
}

std::vector<std::uint8_t> serialize_text_table(const TextEmbeddingTable& table) {
  ByteWriter w;
  w.put_magic("O2VT");
  w.put<std::uint32_t>(kTextVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.embedding_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(table.entries.size()));
  for (const auto& [text, v] : table.entries) {
    if (v.size() != table.embedding_dim) throw InputError("serialize_text_table: embedding dim mismatch");
    w.put_string(text);
    w.put_array(std::span<const float>(v.data(), static_cast<std::size_t>(v.size())));
  }
  return std::move(w.bytes());
}

TextEmbeddingTable parse_text_table(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("O2VT");
  const auto version = r.get<std::uint32_t>();
  if (version != kTextVersion) throw VersionError("O2VT version " + std::to_string(version) + " unsupported");
  TextEmbeddingTable table;
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0 || dim > 65536) throw FormatError("O2VT: implausible embedding dim");
  table.embedding_dim = static_cast<int>(dim);
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string text = r.get_string();
    Eigen::VectorXf v(table.embedding_dim);
    r.get_array(std::span<float>(v.data(), dim));
    if (!table.entries.emplace(std::move(text), std::move(v)).second) throw FormatError("O2VT: duplicate entry");
  }
  if (r.remaining() != 0) throw FormatError("O2VT: trailing bytes");
  return table;
}

void write_text_table(const std::filesystem::path& path, const TextEmbeddingTable& table) {
  write_file(path, serialize_text_table(table));
}

TextEmbeddingTable read_text_table(const std::filesystem::path& path) { return parse_text_table(read_file(path)); }

ValidationReport validate_archive(std::span<const std::uint8_t> bytes, std::optional<std::size_t> pixel_count) {
  ValidationReport report;
  try {
    const PerceptionArchive archive = parse_archive(bytes, pixel_count);
    report.frames = archive.frames.size();
    std::set<std::uint64_t> ids;
    for (const auto& f : archive.frames) {
      const std::string where = "frame " + std::to_string(f.frame_id);
      if (!ids.insert(f.frame_id).second) report.errors.push_back(where + ": duplicate frame id");
      const std::size_t pixels = f.masks.empty() ? 0 : f.masks.front().bitmap.size();
      for (std::size_t i = 0; i < f.masks.size(); ++i) {
        check_mask(f.masks[i], archive.embedding_dim, pixels, report.errors, where + " mask " + std::to_string(i));
      }
      check_rank_overlap(f, pixels, report.errors, where);
      report.masks += f.masks.size();
    }
  } catch (const FormatError& e) {
    report.errors.emplace_back(e.what());
  }
  report.ok = report.errors.empty();
  return report;
}

ValidationReport validate_text_table(std::span<const std::uint8_t> bytes) {
  ValidationReport report;
  try {
    const TextEmbeddingTable table = parse_text_table(bytes);
    for (const auto& [text, v] : table.entries) {
      if (!v.allFinite() || std::abs(v.norm() - 1.0f) > kUnitTolerance) {
        report.errors.push_back("entry '" + text + "': embedding is not unit length");
      }
    }
    report.masks = table.entries.size();
  } catch (const FormatError& e) {
    report.errors.emplace_back(e.what());
  }
  report.ok = report.errors.empty();
  return report;
}

ArchiveProvider::ArchiveProvider(PerceptionArchive archive, std::optional<TextEmbeddingTable> text)
    : archive_(std::move(archive)), text_(std::move(text)) {
  for (std::size_t i = 0; i < archive_.frames.size(); ++i) index_[archive_.frames[i].frame_id] = i;
  if (text_ && text_->embedding_dim != archive_.embedding_dim) {
    throw InputError("ArchiveProvider: sidecar embedding dim differs from archive");
  }
}

FramePerception ArchiveProvider::perceive(const RGBDFrame& frame) const {
  const auto it = index_.find(frame.frame_id);
  if (it == index_.end()) throw LookupError("archive has no frame " + std::to_string(frame.frame_id));
  FramePerception p = archive_.frames[it->second];
  p.validate(frame.intrinsics.pixel_count());
  return p;
}

Eigen::VectorXd ArchiveProvider::embed_text(const std::string& text) const {
  if (!text_) throw LookupError("no text-embedding sidecar loaded for '" + text + "'");
  const auto it = text_->entries.find(text);
  if (it == text_->entries.end()) throw LookupError("text '" + text + "' not in sidecar");
  const Eigen::VectorXd v = it->second.cast<double>();
  return v / v.norm();
}

void corrupt_perception(FramePerception& perception, float confidence) {
  auto& masks = perception.masks;
  if (masks.empty()) return;
  if (masks.size() == 1) {
    masks[0].embedding = -masks[0].embedding;
  } else {
    const Eigen::VectorXf first = masks[0].embedding;
    for (std::size_t i = 0; i + 1 < masks.size(); ++i) masks[i].embedding = masks[i + 1].embedding;
    masks.back().embedding = first;
  }
  for (auto& m : masks) m.confidence = confidence;
}

CorruptingProvider::CorruptingProvider(std::shared_ptr<const PerceptionProvider> inner,
                                       std::set<std::uint64_t> frame_ids, float confidence)
    : inner_(std::move(inner)), frame_ids_(std::move(frame_ids)), confidence_(confidence) {}

FramePerception CorruptingProvider::perceive(const RGBDFrame& frame) const {
  FramePerception p = inner_->perceive(frame);
  if (frame_ids_.contains(frame.frame_id)) corrupt_perception(p, confidence_);
  return p;
}

}  // namespace o2v
