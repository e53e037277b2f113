// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/scene_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "o2v/image_io.hpp"

namespace o2v {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string frame_stem(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(id));
  return buf;
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("scene.json: expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json scene_json(const SynthScene& scene) {
  json objects = json::array();
  for (const auto& o : scene.objects) {
    objects.push_back({{"label", o.label},
                       {"primitive", o.kind == PrimitiveKind::kBox ? "box" : "sphere"},
                       {"center", vec_json(o.center)},
                       {"yaw", o.yaw},
                       {"size", vec_json(o.size)},
                       {"color", vec_json(o.color)}});
  }
  json surfaces = json::array();
  for (const auto& c : scene.surface_colors) surfaces.push_back(vec_json(c));
  return {{"seed", scene.seed},
          {"room", {{"min", vec_json(scene.room.min)}, {"max", vec_json(scene.room.max)}}},
          {"objects", objects},
          {"surface_colors", surfaces}};
}

SynthScene parse_scene(const json& j) {
  SynthScene s;
  s.seed = j.at("seed").get<std::uint64_t>();
  s.room = {json_vec(j.at("room").at("min")), json_vec(j.at("room").at("max"))};
  for (const auto& o : j.at("objects")) {
    SynthObject obj;
    obj.label = o.at("label").get<std::string>();
    const auto prim = o.at("primitive").get<std::string>();
    if (prim != "box" && prim != "sphere") throw FormatError("scene.json: unknown primitive " + prim);
    obj.kind = prim == "box" ? PrimitiveKind::kBox : PrimitiveKind::kSphere;
    obj.center = json_vec(o.at("center"));
    obj.yaw = o.at("yaw").get<double>();
    obj.size = json_vec(o.at("size"));
    obj.color = json_vec(o.at("color"));
    s.objects.push_back(std::move(obj));
  }
  const auto& surfaces = j.at("surface_colors");
  if (surfaces.size() != static_cast<std::size_t>(kSurfaceCount)) throw FormatError("scene.json: need 6 surface colors");
  for (int i = 0; i < kSurfaceCount; ++i) s.surface_colors[static_cast<std::size_t>(i)] = json_vec(surfaces[i]);
  return s;
}

}  // namespace

void write_pose(const fs::path& path, const Pose& pose) {
  std::ostringstream os;
  os.precision(17);
  const Mat3& r = pose.rotation();
  for (int i = 0; i < 3; ++i) os << r(i, 0) << ' ' << r(i, 1) << ' ' << r(i, 2) << '\n';
  os << pose.translation().x() << ' ' << pose.translation().y() << ' ' << pose.translation().z() << '\n';
  const std::string s = os.str();
  write_file(path, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

Pose read_pose(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open pose file " + path.string());
  double v[12];
  for (double& x : v) {
    if (!(in >> x)) throw FormatError("pose file needs 12 numbers: " + path.string());
  }
  Mat3 r;
  r << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
  try {
    return Pose(r, Vec3(v[9], v[10], v[11]));
  } catch (const InputError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

SynthStream synth_stream(const SynthExportOptions& options) {
  if (options.frames < 1) throw InputError("synth export: frames must be >= 1");
  SynthStream st;
  st.scene = options.boundary ? boundary_scene(options.seed) : generate_scene(options.seed, options.objects);
  st.intrinsics = default_intrinsics();
  st.poses = options.boundary ? std::vector<Pose>{} : orbit_trajectory(st.scene, options.frames);
  if (options.boundary) {
    // Arc in front of the shared face so both boxes stay in view.
    for (int k = 0; k < options.frames; ++k) {
      const double t = options.frames == 1 ? 0.5 : static_cast<double>(k) / (options.frames - 1);
      const double a = -2.2 + 1.4 * t;
      const Vec3 eye(1.4 * std::cos(a) + 0.08, 1.4 * std::sin(a), 1.1 + 0.2 * std::sin(3.0 * t));
      st.poses.push_back(Pose::look_at(eye, Vec3(0.08, 0.0, 0.3)));
    }
  }
  for (int k = 0; k < options.frames; ++k) st.frame_ids.push_back(static_cast<std::uint64_t>(k));
  if (options.corrupt_frames > 0) {
    const auto extra = orbit_trajectory(st.scene, options.corrupt_frames, 0.25);
    for (int k = 0; k < options.corrupt_frames; ++k) {
      const auto id = static_cast<std::uint64_t>(options.frames + k);
      st.poses.push_back(extra[static_cast<std::size_t>(k)]);
      st.frame_ids.push_back(id);
      st.corrupted.insert(id);
    }
  }
  return st;
}

std::vector<QuerySpec> synth_queries(const SynthStream& stream, const SynthExportOptions& options) {
  std::vector<QuerySpec> queries;
  const auto labels = stream.scene.object_labels();
  for (const auto& label : labels) {
    QuerySpec q;
    q.text = label;
    for (const auto& o : stream.scene.objects) q.expected_instances += o.label == label ? 1 : 0;
    queries.push_back(std::move(q));
  }
  const std::size_t stream_frames = static_cast<std::size_t>(options.frames);
  for (std::size_t k = 0; k < stream_frames; k += static_cast<std::size_t>(std::max(options.eval_stride, 1))) {
    const GtView view = render_gt(stream.scene, stream.poses[k], stream.intrinsics);
    for (auto& q : queries) {
      const auto mask = label_mask(stream.scene, view, q.text);
      const auto area = static_cast<int>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
      if (area >= options.min_visible_pixels) q.frames.push_back(stream.frame_ids[k]);
    }
  }
  return queries;
}

void write_queries(const fs::path& path, const std::vector<QuerySpec>& queries) {
  json j = json::array();
  for (const auto& q : queries) {
    j.push_back({{"text", q.text}, {"frames", q.frames}, {"expected_instances", q.expected_instances}});
  }
  const std::string s = j.dump(2) + "\n";
  write_file(path, {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::vector<QuerySpec> read_queries(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open query file " + path.string());
  try {
    const json j = json::parse(in);
    std::vector<QuerySpec> out;
    for (const auto& q : j) {
      QuerySpec spec;
      spec.text = q.at("text").get<std::string>();
      spec.frames = q.value("frames", std::vector<std::uint64_t>{});
      spec.expected_instances = q.value("expected_instances", 0);
      out.push_back(std::move(spec));
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void export_synthetic_scene(const fs::path& root, const SynthExportOptions& options) {
  const SynthStream st = synth_stream(options);
  fs::create_directories(root / "frames");
  const StubProvider stub(st.scene);
  PerceptionArchive archive;
  archive.embedding_dim = stub.embedding_dim();
  for (std::size_t k = 0; k < st.poses.size(); ++k) {
    const RGBDFrame frame = make_frame(st.scene, st.poses[k], st.intrinsics, st.frame_ids[k]);
    const std::string stem = frame_stem(frame.frame_id);
    write_ppm(root / "frames" / (stem + ".ppm"), {st.intrinsics.width, st.intrinsics.height, frame.rgb});
    write_depth(root / "frames" / (stem + ".depth"), {st.intrinsics.width, st.intrinsics.height, frame.depth});
    write_pose(root / "frames" / (stem + ".pose"), frame.pose);
    FramePerception p = stub.perceive(frame);
    if (st.corrupted.contains(frame.frame_id)) corrupt_perception(p, options.corrupt_confidence);
    archive.frames.push_back(std::move(p));
  }
  write_archive(root / "perception.o2vp", archive);

  TextEmbeddingTable table;
  table.embedding_dim = stub.embedding_dim();
  std::set<std::string> labels{"floor", "ceiling", "wall"};
  for (const auto& o : st.scene.objects) labels.insert(o.label);
  for (const auto& l : labels) table.entries[l] = stub.embed_text(l).cast<float>();
  write_text_table(root / "text.o2vt", table);
  write_queries(root / "queries.json", synth_queries(st, options));

  const SceneBounds bounds = st.scene.mapping_bounds();
  json j = scene_json(st.scene);
  j["format"] = "o2v-scene";
  j["version"] = 1;
  j["bounds"] = {{"min", vec_json(bounds.min)}, {"max", vec_json(bounds.max)}};
  j["intrinsics"] = {{"fx", st.intrinsics.fx}, {"fy", st.intrinsics.fy}, {"cx", st.intrinsics.cx},
                     {"cy", st.intrinsics.cy}, {"width", st.intrinsics.width}, {"height", st.intrinsics.height}};
  j["max_range"] = 10.0;
  j["frames"] = st.frame_ids;
  j["corrupted"] = st.corrupted;
  const std::string s = j.dump(2) + "\n";
  write_file(root / "scene.json", {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

SceneDirectory SceneDirectory::open(const fs::path& root) {
  SceneDirectory d;
  d.root_ = root;
  std::ifstream in(root / "scene.json");
  if (!in) throw FormatError("no scene.json in " + root.string());
  try {
    const json j = json::parse(in);
    const auto& intr = j.at("intrinsics");
    d.intrinsics_ = {intr.at("fx").get<double>(), intr.at("fy").get<double>(), intr.at("cx").get<double>(),
                     intr.at("cy").get<double>(), intr.at("width").get<int>(), intr.at("height").get<int>()};
    d.intrinsics_.validate();
    d.bounds_ = {json_vec(j.at("bounds").at("min")), json_vec(j.at("bounds").at("max"))};
    d.bounds_.validate();
    d.max_range_ = j.value("max_range", 10.0);
    d.frame_ids_ = j.at("frames").get<std::vector<std::uint64_t>>();
    if (j.contains("objects")) d.scene_ = parse_scene(j);
  } catch (const json::exception& e) {
    throw FormatError("scene.json: " + std::string(e.what()));
  } catch (const InputError& e) {
    throw FormatError("scene.json: " + std::string(e.what()));
  }
  return d;
}

Pose SceneDirectory::load_pose(std::size_t index) const {
  return read_pose(root_ / "frames" / (frame_stem(frame_ids_.at(index)) + ".pose"));
}

RGBDFrame SceneDirectory::load_frame(std::size_t index) const {
  const std::uint64_t id = frame_ids_.at(index);
  const std::string stem = frame_stem(id);
  const RgbImage rgb = read_ppm(root_ / "frames" / (stem + ".ppm"));
  const DepthImage depth = read_depth(root_ / "frames" / (stem + ".depth"));
  if (rgb.width != intrinsics_.width || rgb.height != intrinsics_.height || depth.width != intrinsics_.width ||
      depth.height != intrinsics_.height) {
    throw FormatError("frame " + stem + ": image size differs from intrinsics");
  }
  RGBDFrame f;
  f.frame_id = id;
  f.rgb = rgb.pixels;
  f.depth = depth.values;
  f.pose = load_pose(index);
  f.intrinsics = intrinsics_;
  f.validate(max_range_);
  return f;
}

std::shared_ptr<const PerceptionProvider> SceneDirectory::provider() const {
  PerceptionArchive archive = read_archive(root_ / "perception.o2vp", intrinsics_.pixel_count());
  std::optional<TextEmbeddingTable> text;
  if (fs::exists(root_ / "text.o2vt")) text = read_text_table(root_ / "text.o2vt");
  return std::make_shared<ArchiveProvider>(std::move(archive), std::move(text));
}

std::vector<QuerySpec> SceneDirectory::queries() const {
  if (!fs::exists(root_ / "queries.json")) return {};
  return read_queries(root_ / "queries.json");
}

}  // namespace o2v
