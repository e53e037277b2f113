// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/snapshot.hpp"

#include <map>
#include <optional>

namespace o2v {
namespace {

constexpr std::uint32_t tag(const char (&s)[5]) {
  return static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[0])) |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[1])) << 8 |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[2])) << 16 |
         static_cast<std::uint32_t>(static_cast<std::uint8_t>(s[3])) << 24;
}

constexpr std::uint32_t kBounds = tag("BNDS");
constexpr std::uint32_t kDims = tag("DIMS");
constexpr std::uint32_t kVoxels = tag("VOXL");
constexpr std::uint32_t kDecoders = tag("DECO");
constexpr std::uint32_t kRetrieval = tag("RETR");
constexpr std::uint32_t kConfig = tag("CONF");
constexpr std::uint32_t kCameras = tag("CAMS");
constexpr std::uint32_t kMeta = tag("META");
constexpr std::uint32_t kDigest = tag("DGST");

constexpr std::uint8_t kFlagSplit = 1;
constexpr std::uint8_t kFlagFeatures = 2;
constexpr std::uint8_t kFlagLanguage = 4;

void put_section(ByteWriter& out, std::uint32_t id, const ByteWriter& body) {
  out.put<std::uint32_t>(id);
  out.put<std::uint64_t>(static_cast<std::uint64_t>(body.size()));
  out.put_bytes(body.bytes());
}

template <typename Derived>
void put_doubles(ByteWriter& w, const Eigen::MatrixBase<Derived>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.put<double>(static_cast<double>(v(i)));
}

void put_vec3(ByteWriter& w, const Vec3& v) { put_doubles(w, v); }

Vec3 get_vec3(ByteReader& r) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = r.get<double>();
  return v;
}

Eigen::VectorXd get_vector(ByteReader& r, Eigen::Index n) {
  Eigen::VectorXd v(n);
  r.get_array(std::span<double>(v.data(), static_cast<std::size_t>(n)));
  return v;
}

void put_mlp(ByteWriter& w, const Mlp<float>& mlp) {
  const LayerSpec& spec = mlp.spec();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.input));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.hidden.size()));
  for (const int h : spec.hidden) w.put<std::uint32_t>(static_cast<std::uint32_t>(h));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(spec.output));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.hidden_activation));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(spec.output_activation));
  const auto& p = mlp.params();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    w.put_array(std::span<const float>(p.weights[l].data(), static_cast<std::size_t>(p.weights[l].size())));
    w.put_array(std::span<const float>(p.biases[l].data(), static_cast<std::size_t>(p.biases[l].size())));
  }
}

Mlp<float> get_mlp(ByteReader& r) {
  auto dim = [&r]() {
    const auto v = r.get<std::uint32_t>();
    if (v == 0 || v > 4096) throw FormatError("O2VM: implausible layer width");
    return static_cast<int>(v);
  };
  LayerSpec spec;
  spec.input = dim();
  const auto hidden = r.get<std::uint32_t>();
  if (hidden > 64) throw FormatError("O2VM: implausible layer count");
  for (std::uint32_t i = 0; i < hidden; ++i) spec.hidden.push_back(dim());
  spec.output = dim();
  const auto ha = r.get<std::uint8_t>();
  const auto oa = r.get<std::uint8_t>();
  if (ha > 1 || oa > 1) throw FormatError("O2VM: unknown activation");
  spec.hidden_activation = static_cast<Activation>(ha);
  spec.output_activation = static_cast<OutputActivation>(oa);
  MlpParams<float> p;
  int in = spec.input;
  std::vector<int> outs = spec.hidden;
  outs.push_back(spec.output);
  for (const int out : outs) {
    Eigen::MatrixXf wgt(out, in);
    r.get_array(std::span<float>(wgt.data(), static_cast<std::size_t>(wgt.size())));
    Eigen::VectorXf b(out);
    r.get_array(std::span<float>(b.data(), static_cast<std::size_t>(b.size())));
    p.weights.push_back(std::move(wgt));
    p.biases.push_back(std::move(b));
    in = out;
  }
  return Mlp<float>(std::move(spec), std::move(p));
}

ByteWriter voxel_section(const VoxelField<float>& field) {
  ByteWriter w;
  const auto keys = field.sorted_keys();
  const FieldDims& dims = field.dims();
  w.put<std::uint64_t>(keys.size());
  for (const VoxelKey& key : keys) {
    const auto& cell = field.cells().at(key);
    w.put<std::int32_t>(key.ix);
    w.put<std::int32_t>(key.iy);
    w.put<std::int32_t>(key.iz);
    w.put<std::uint8_t>(key.level);
    const std::uint8_t flags = (cell.split ? kFlagSplit : 0) | (cell.slot >= 0 ? kFlagFeatures : 0) |
                               (cell.language >= 0 ? kFlagLanguage : 0);
    w.put<std::uint8_t>(flags);
    if (cell.slot >= 0) {
      w.put_array(std::span<const float>(field.geo(cell.slot).data(), static_cast<std::size_t>(dims.geo)));
      w.put_array(std::span<const float>(field.color(cell.slot).data(), static_cast<std::size_t>(dims.color)));
    }
    if (cell.language >= 0) {
      const LanguageCell& lc = field.language_cells()[static_cast<std::size_t>(cell.language)];
      w.put<std::uint8_t>(lc.fused.size() == dims.language ? 1 : 0);
      if (lc.fused.size() == dims.language) put_doubles(w, lc.fused);
      w.put<double>(lc.accumulated);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(lc.queue.size()));
      for (const auto& rec : lc.queue) {
        if (rec.embedding.size() != dims.language) throw InputError("save_map: language record dim mismatch");
        put_doubles(w, rec.embedding);
        w.put<double>(rec.confidence);
        w.put<double>(rec.weight);
      }
    }
  }
  return w;
}

void read_voxels(ByteReader& r, VoxelField<float>& field) {
  const FieldDims dims = field.dims();
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining() / 14) throw FormatError("O2VM: voxel count exceeds section");
  std::vector<float> geo(static_cast<std::size_t>(dims.geo)), color(static_cast<std::size_t>(dims.color));
  std::optional<VoxelKey> previous;
  for (std::uint64_t i = 0; i < count; ++i) {
    VoxelKey key;
    key.ix = r.get<std::int32_t>();
    key.iy = r.get<std::int32_t>();
    key.iz = r.get<std::int32_t>();
    key.level = r.get<std::uint8_t>();
    if (key.level > 1) throw FormatError("O2VM: voxel level > 1");
    if (previous && !(*previous < key)) throw FormatError("O2VM: voxel table not strictly sorted");
    previous = key;
    const auto flags = r.get<std::uint8_t>();
    if (flags & ~(kFlagSplit | kFlagFeatures | kFlagLanguage)) throw FormatError("O2VM: unknown voxel flags");
    const bool has_features = flags & kFlagFeatures;
    if (has_features) {
      r.get_array(std::span<float>(geo));
      r.get_array(std::span<float>(color));
    }
    std::optional<LanguageCell> lang;
    if (flags & kFlagLanguage) {
      LanguageCell lc;
      if (r.get<std::uint8_t>() != 0) lc.fused = get_vector(r, dims.language);
      lc.accumulated = r.get<double>();
      const auto records = r.get<std::uint32_t>();
      if (records > static_cast<std::uint32_t>(std::max(field.queue_capacity(), 1))) {
        throw FormatError("O2VM: language queue exceeds capacity");
      }
      for (std::uint32_t q = 0; q < records; ++q) {
        ObservationRecord rec;
        rec.embedding = get_vector(r, dims.language);
        rec.confidence = r.get<double>();
        rec.weight = r.get<double>();
        lc.queue.push_back(std::move(rec));
      }
      lang = std::move(lc);
    }
    field.restore_cell(key, flags & kFlagSplit, has_features ? geo.data() : nullptr,
                       has_features ? color.data() : nullptr, lang ? &*lang : nullptr);
  }
  for (const auto& [key, cell] : field.cells()) {
    if (key.level == 1 && !field.is_split(key.parent())) throw FormatError("O2VM: child voxel under unsplit parent");
    if (cell.split && (key.level != 0 || cell.slot >= 0 || cell.language >= 0)) {
      throw FormatError("O2VM: split voxel carries data");
    }
  }
}

}  // namespace

const Pose& MapSnapshot::frame_pose(std::uint64_t frame_id) const {
  for (const auto& f : frames) {
    if (f.frame_id == frame_id) return f.pose;
  }
  throw std::out_of_range("map has no frame " + std::to_string(frame_id));
}

MapSnapshot make_empty_snapshot(const Config& config, const SceneBounds& bounds, const CameraIntrinsics& intrinsics,
                                int language_dim) {
  config.validate();
  return MapSnapshot{
      config,
      VoxelField<float>(bounds, config.voxel_edge, FieldDims{config.geo_dim, config.color_dim, language_dim},
                        config.q_max),
      make_decoders<float>(config.geo_dim, config.color_dim, config.pe_bands, config.hidden_width,
                           config.hidden_layers, config.seed),
      RetrievalMap(config.alpha, config.eps_dist),
      intrinsics,
      {},
      0,
      0};
}

std::vector<std::uint8_t> serialize_content(const MapSnapshot& s) {
  ByteWriter out;
  out.put_magic("O2VM");
  out.put<std::uint32_t>(kMapVersion);

  ByteWriter bounds;
  put_vec3(bounds, s.field.bounds().min);
  put_vec3(bounds, s.field.bounds().max);
  bounds.put<double>(s.field.base_edge());
  put_section(out, kBounds, bounds);

  ByteWriter dims;
  dims.put<std::uint32_t>(static_cast<std::uint32_t>(s.field.dims().geo));
  dims.put<std::uint32_t>(static_cast<std::uint32_t>(s.field.dims().color));
  dims.put<std::uint32_t>(static_cast<std::uint32_t>(s.field.dims().language));
  dims.put<std::uint32_t>(static_cast<std::uint32_t>(s.field.queue_capacity()));
  put_section(out, kDims, dims);

  put_section(out, kVoxels, voxel_section(s.field));

  ByteWriter deco;
  deco.put<std::uint32_t>(static_cast<std::uint32_t>(s.decoders.encoding.bands));
  put_mlp(deco, s.decoders.occupancy);
  put_mlp(deco, s.decoders.color);
  put_section(out, kDecoders, deco);

  ByteWriter retr;
  retr.put<double>(s.retrieval.alpha());
  retr.put<double>(s.retrieval.eps_dist());
  retr.put<std::uint64_t>(s.retrieval.next_id());
  retr.put<std::uint64_t>(s.retrieval.entries().size());
  for (const auto& e : s.retrieval.entries()) {
    retr.put<std::uint64_t>(e.id);
    retr.put<std::uint32_t>(static_cast<std::uint32_t>(e.embedding.size()));
    put_doubles(retr, e.embedding);
    put_vec3(retr, e.center);
    retr.put<double>(e.weight);
    retr.put<std::uint64_t>(e.voxel_count);
  }
  put_section(out, kRetrieval, retr);

  ByteWriter conf;
  conf.put_string(s.config.to_text());
  put_section(out, kConfig, conf);

  ByteWriter cams;
  cams.put<double>(s.intrinsics.fx);
  cams.put<double>(s.intrinsics.fy);
  cams.put<double>(s.intrinsics.cx);
  cams.put<double>(s.intrinsics.cy);
  cams.put<std::uint32_t>(static_cast<std::uint32_t>(s.intrinsics.width));
  cams.put<std::uint32_t>(static_cast<std::uint32_t>(s.intrinsics.height));
  cams.put<std::uint64_t>(s.frames.size());
  for (const auto& f : s.frames) {
    cams.put<std::uint64_t>(f.frame_id);
    put_doubles(cams, f.pose.rotation().reshaped());
    put_vec3(cams, f.pose.translation());
  }
  put_section(out, kCameras, cams);

  ByteWriter meta;
  meta.put<std::uint64_t>(s.frame_counter);
  put_section(out, kMeta, meta);
  return std::move(out.bytes());
}

std::uint64_t snapshot_digest(const MapSnapshot& snapshot) { return fnv1a64(serialize_content(snapshot)); }

std::vector<std::uint8_t> serialize_map(const MapSnapshot& snapshot) {
  ByteWriter out;
  out.bytes() = serialize_content(snapshot);
  ByteWriter digest;
  digest.put<std::uint64_t>(fnv1a64(out.bytes()));
  put_section(out, kDigest, digest);
  return std::move(out.bytes());
}

MapSnapshot parse_map(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("O2VM");
  const auto version = r.get<std::uint32_t>();
  if (version != kMapVersion) {
    throw VersionError("O2VM version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kMapVersion) + ")");
  }
  std::map<std::uint32_t, std::span<const std::uint8_t>> sections;
  std::optional<std::uint64_t> digest;
  while (r.remaining() > 0) {
    const std::size_t start = r.position();
    const auto id = r.get<std::uint32_t>();
    const auto length = r.get<std::uint64_t>();
    if (length > r.remaining()) throw FormatError("O2VM: truncated section");
    const auto body = r.take(static_cast<std::size_t>(length));
    if (id == kDigest) {
      if (length != 8 || r.remaining() != 0) throw FormatError("O2VM: malformed digest section");
      ByteReader d(body);
      digest = d.get<std::uint64_t>();
      if (*digest != fnv1a64(bytes.first(start))) throw FormatError("O2VM: digest mismatch");
      break;
    }
    if (!sections.emplace(id, body).second) throw FormatError("O2VM: duplicate section");
  }
  if (!digest) throw FormatError("O2VM: missing digest section");
  auto section = [&](std::uint32_t id) {
    const auto it = sections.find(id);
    if (it == sections.end()) throw FormatError("O2VM: missing section");
    return ByteReader(it->second);
  };
  auto finish = [](const ByteReader& rd) {
    if (rd.remaining() != 0) throw FormatError("O2VM: trailing bytes in section");
  };

  ByteReader conf = section(kConfig);
  Config config;
  try {
    config.apply_text(conf.get_string());
    config.validate();
  } catch (const InputError& e) {
    throw FormatError(std::string("O2VM: bad config echo: ") + e.what());
  }
  finish(conf);

  ByteReader bnd = section(kBounds);
  SceneBounds bounds{get_vec3(bnd), get_vec3(bnd)};
  const double edge = bnd.get<double>();
  finish(bnd);

  ByteReader dms = section(kDims);
  FieldDims dims;
  dims.geo = static_cast<int>(dms.get<std::uint32_t>());
  dims.color = static_cast<int>(dms.get<std::uint32_t>());
  dims.language = static_cast<int>(dms.get<std::uint32_t>());
  const int q_cap = static_cast<int>(dms.get<std::uint32_t>());
  finish(dms);
  if (dims.geo <= 0 || dims.color <= 0 || dims.language <= 0 || dims.geo > 4096 || dims.color > 4096 ||
      dims.language > 65536 || q_cap <= 0) {
    throw FormatError("O2VM: implausible dims");
  }

  try {
    bounds.validate();
    MapSnapshot s{config,
                  VoxelField<float>(bounds, edge, dims, q_cap),
                  Decoders<float>{},
                  RetrievalMap(config.alpha, config.eps_dist),
                  CameraIntrinsics{},
                  {},
                  0,
                  *digest};

    ByteReader vox = section(kVoxels);
    read_voxels(vox, s.field);
    finish(vox);

    ByteReader deco = section(kDecoders);
    s.decoders.encoding.bands = static_cast<int>(deco.get<std::uint32_t>());
    s.decoders.occupancy = get_mlp(deco);
    s.decoders.color = get_mlp(deco);
    finish(deco);
    if (s.decoders.occupancy.spec().input != s.decoders.input_dim(dims.geo) ||
        s.decoders.color.spec().input != s.decoders.input_dim(dims.color)) {
      throw FormatError("O2VM: decoder input width disagrees with dims");
    }

    ByteReader retr = section(kRetrieval);
    const double alpha = retr.get<double>();
    const double eps = retr.get<double>();
    const auto next_id = retr.get<std::uint64_t>();
    const auto entries = retr.get<std::uint64_t>();
    if (entries > retr.remaining()) throw FormatError("O2VM: entry count exceeds section");
    std::vector<InstanceEntry> list;
    for (std::uint64_t i = 0; i < entries; ++i) {
      InstanceEntry e;
      e.id = retr.get<std::uint64_t>();
      const auto n = retr.get<std::uint32_t>();
      if (static_cast<int>(n) != dims.language) throw FormatError("O2VM: entry embedding dim mismatch");
      e.embedding = get_vector(retr, n);
      e.center = get_vec3(retr);
      e.weight = retr.get<double>();
      e.voxel_count = retr.get<std::uint64_t>();
      list.push_back(std::move(e));
    }
    finish(retr);
    s.retrieval = RetrievalMap::restore(alpha, eps, std::move(list), next_id);

    ByteReader cams = section(kCameras);
    s.intrinsics.fx = cams.get<double>();
    s.intrinsics.fy = cams.get<double>();
    s.intrinsics.cx = cams.get<double>();
    s.intrinsics.cy = cams.get<double>();
    s.intrinsics.width = static_cast<int>(cams.get<std::uint32_t>());
    s.intrinsics.height = static_cast<int>(cams.get<std::uint32_t>());
    const auto frames = cams.get<std::uint64_t>();
    if (frames > cams.remaining()) throw FormatError("O2VM: frame count exceeds section");
    for (std::uint64_t i = 0; i < frames; ++i) {
      FrameRecord f;
      f.frame_id = cams.get<std::uint64_t>();
      Mat3 rot;
      for (int k = 0; k < 9; ++k) rot.data()[k] = cams.get<double>();
      const Vec3 t = get_vec3(cams);
      f.pose = Pose(rot, t);
      s.frames.push_back(f);
    }
    finish(cams);

    ByteReader meta = section(kMeta);
    s.frame_counter = meta.get<std::uint64_t>();
    finish(meta);
    return s;
  } catch (const InputError& e) {
    throw FormatError(std::string("O2VM: inconsistent content: ") + e.what());
  }
}

void save_map(const std::filesystem::path& path, const MapSnapshot& snapshot) {
  write_file(path, serialize_map(snapshot));
}

MapSnapshot load_map(const std::filesystem::path& path) { return parse_map(read_file(path)); }

}  // namespace o2v
