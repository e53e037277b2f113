// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// o2v command line: synth, build, query, relevance, render, serve, eval, validate.

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include "o2v/evaluation.hpp"
#include "o2v/mapper.hpp"
#include "o2v/query.hpp"
#include "o2v/scene_io.hpp"
#include "o2v/service.hpp"
#include "o2v/snapshot.hpp"

namespace {

using namespace o2v;
using json = nlohmann::json;

struct BuildArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  bool no_voting = false;
  bool no_split = false;
  int frames = -1;
  bool quiet = false;
};

void add_build_options(CLI::App* cmd, BuildArgs& b) {
  cmd->add_option("--config", b.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--set", b.overrides, "override one key, as key=value");
  cmd->add_flag("--no-voting", b.no_voting, "keep only the latest observation per cell");
  cmd->add_flag("--no-split", b.no_split, "disable adaptive voxel splitting");
  cmd->add_option("--frames", b.frames, "number of stream frames to map (default: all)");
  cmd->add_flag("--quiet", b.quiet, "no per-frame progress");
}

Config make_config(const BuildArgs& b) {
  Config c = b.config_path.empty() ? Config{} : load_config(b.config_path);
  for (const auto& kv : b.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InputError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (b.no_voting) c.voting = false;
  if (b.no_split) c.split = false;
  c.validate();
  return c;
}

TextEmbedder scene_embedder(const std::shared_ptr<const PerceptionProvider>& provider) {
  return [provider](const std::string& text) { return provider->embed_text(text); };
}

TextEmbedder stub_embedder(int dim) {
  return [dim](const std::string& text) { return stub_embed(text, dim); };
}

/// Text embeddings from a scene's sidecar when one is given, else the stub encoder.
TextEmbedder embedder_for(const std::string& scene_dir, int dim) {
  if (scene_dir.empty()) return stub_embedder(dim);
  return scene_embedder(SceneDirectory::open(scene_dir).provider());
}

std::size_t frame_limit(const SceneDirectory& scene, int frames) {
  if (frames < 0) return scene.frame_count();
  if (static_cast<std::size_t>(frames) > scene.frame_count()) {
    throw InputError("scene has only " + std::to_string(scene.frame_count()) + " frames");
  }
  return static_cast<std::size_t>(frames);
}

void run_mapping(Mapper& mapper, const SceneDirectory& scene, std::size_t n, bool quiet) {
  for (std::size_t i = 0; i < n && !mapper.stop_requested(); ++i) {
    const FrameStats s = mapper.process(scene.load_frame(i));
    if (!quiet) {
      std::fprintf(stderr, "frame %zu/%zu id=%llu L_d=%.5f L_c=%.5f splits=%zu instances=%zu %.2fs\n", i + 1, n,
                   static_cast<unsigned long long>(s.frame_id), s.last_loss.depth_loss, s.last_loss.color_loss,
                   s.integration.splits, mapper.state().retrieval.entries().size(), s.seconds);
    }
  }
}

Pose pose_for_frame(const SceneDirectory& scene, std::uint64_t frame_id) {
  const auto& ids = scene.frame_ids();
  const auto it = std::find(ids.begin(), ids.end(), frame_id);
  if (it == ids.end()) throw LookupError("frame " + std::to_string(frame_id) + " not in scene");
  return scene.load_pose(static_cast<std::size_t>(it - ids.begin()));
}

int validate_file(const std::string& path) {
  const auto bytes = read_file(path);
  const std::string magic(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(4, bytes.size())));
  ValidationReport report;
  if (magic == "O2VP") {
    report = validate_archive(bytes);
  } else if (magic == "O2VT") {
    report = validate_text_table(bytes);
  } else if (magic == "O2VM") {
    try {
      const MapSnapshot m = parse_map(bytes);
      report.ok = true;
      report.frames = m.frames.size();
    } catch (const std::exception& e) {
      report.errors.push_back(e.what());
    }
  } else {
    report.errors.push_back("unknown file magic");
  }
  std::cout << path << ": " << (report.ok ? "OK" : "INVALID");
  if (magic == "O2VP") std::cout << " frames=" << report.frames << " masks=" << report.masks;
  std::cout << "\n";
  for (const auto& e : report.errors) std::cout << "  " << e << "\n";
  return report.ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"o2v: open-vocabulary voxel mapping"};
  app.require_subcommand(1);

  // synth
  SynthExportOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic scene directory");
  synth_cmd->add_option("--out", synth_out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.seed, "scene seed");
  synth_cmd->add_option("--objects", synth.objects, "object count");
  synth_cmd->add_option("--frames", synth.frames, "stream length");
  synth_cmd->add_flag("--boundary", synth.boundary, "two-box boundary room");
  synth_cmd->add_option("--corrupt", synth.corrupt_frames, "extra frames with corrupted perception");

  // build
  BuildArgs build;
  std::string build_scene, build_out;
  auto* build_cmd = app.add_subcommand("build", "map a scene directory and save the map");
  build_cmd->add_option("--scene", build_scene, "scene directory")->required()->check(CLI::ExistingDirectory);
  build_cmd->add_option("--out", build_out, "output map file")->required();
  add_build_options(build_cmd, build);

  // query
  std::string q_map, q_text, q_scene;
  std::size_t q_top = 5;
  auto* query_cmd = app.add_subcommand("query", "rank stored instances for a text query");
  query_cmd->add_option("--map", q_map, "map file")->required()->check(CLI::ExistingFile);
  query_cmd->add_option("--text", q_text, "query text")->required();
  query_cmd->add_option("--top", q_top, "number of hits");
  query_cmd->add_option("--scene", q_scene, "scene whose text sidecar embeds the query");

  // relevance
  std::string r_map, r_text, r_out, r_scene, r_mask;
  std::uint64_t r_frame = 0;
  auto* rel_cmd = app.add_subcommand("relevance", "render a relevance map for a mapped frame pose");
  rel_cmd->add_option("--map", r_map, "map file")->required()->check(CLI::ExistingFile);
  rel_cmd->add_option("--text", r_text, "query text")->required();
  rel_cmd->add_option("--frame", r_frame, "frame id")->required();
  rel_cmd->add_option("--out", r_out, "output PPM")->required();
  rel_cmd->add_option("--mask-out", r_mask, "also write the thresholded mask");
  rel_cmd->add_option("--scene", r_scene, "scene whose text sidecar embeds the query");

  // render
  std::string v_map, v_out, v_depth;
  std::uint64_t v_frame = 0;
  auto* render_cmd = app.add_subcommand("render", "render color and depth for a mapped frame pose");
  render_cmd->add_option("--map", v_map, "map file")->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--frame", v_frame, "frame id")->required();
  render_cmd->add_option("--out", v_out, "output PPM")->required();
  render_cmd->add_option("--depth-out", v_depth, "output O2VD depth");

  // serve
  BuildArgs serve_build;
  std::string s_scene, s_map, s_listen = "127.0.0.1:7070";
  auto* serve_cmd = app.add_subcommand("serve", "serve queries while mapping a scene, or from a saved map");
  auto* s_scene_opt = serve_cmd->add_option("--scene", s_scene, "scene directory to map live")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--map", s_map, "saved map to serve")->check(CLI::ExistingFile)->excludes(s_scene_opt);
  serve_cmd->add_option("--listen", s_listen, "host:port, or 'stdio'");
  add_build_options(serve_cmd, serve_build);

  // eval
  BuildArgs eval_build;
  std::string e_scene, e_queries, e_report, e_map;
  double e_tau = -1;
  auto* eval_cmd = app.add_subcommand("eval", "score relevance masks against a synthetic scene");
  eval_cmd->add_option("--scene", e_scene, "synthetic scene directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--queries", e_queries, "query file (default: the scene's queries.json)");
  eval_cmd->add_option("--report", e_report, "JSON report path")->required();
  eval_cmd->add_option("--map", e_map, "use a saved map instead of mapping the scene")->check(CLI::ExistingFile);
  eval_cmd->add_option("--tau", e_tau, "relevance threshold (default: config tau_rel)");
  add_build_options(eval_cmd, eval_build);

  // validate
  std::vector<std::string> val_files;
  auto* validate_cmd = app.add_subcommand("validate", "check O2VP, O2VT or O2VM files");
  validate_cmd->add_option("files", val_files, "files to check")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth_cmd) {
      export_synthetic_scene(synth_out, synth);
      std::cout << "wrote " << synth_out << "\n";
      return 0;
    }

    if (*build_cmd) {
      const Config config = make_config(build);
      const SceneDirectory scene = SceneDirectory::open(build_scene);
      Config c = config;
      c.max_range = scene.max_range();
      Mapper mapper(c, scene.bounds(), scene.intrinsics(), scene.provider(), MapperOptions{.publish = false});
      run_mapping(mapper, scene, frame_limit(scene, build.frames), build.quiet);
      save_map(build_out, mapper.state());
      std::cout << "wrote " << build_out << " (" << mapper.state().frames.size() << " frames, "
                << mapper.state().field.feature_cell_count() << " cells, " << mapper.state().field.split_count()
                << " splits, " << mapper.state().retrieval.entries().size() << " instances)\n";
      return 0;
    }

    if (*query_cmd) {
      const MapSnapshot map = load_map(q_map);
      const auto embed = embedder_for(q_scene, map.field.dims().language);
      json out = json::array();
      if (!map.retrieval.entries().empty()) {
        for (const QueryHit& h : map.retrieval.query_text(embed(q_text), q_top)) {
          out.push_back(json{{"id", h.id}, {"cosine", h.cosine}, {"center", {h.center.x(), h.center.y(), h.center.z()}}});
        }
      }
      std::cout << json{{"instances", out}}.dump(2) << "\n";
      return 0;
    }

    if (*rel_cmd) {
      const MapSnapshot map = load_map(r_map);
      const auto embed = embedder_for(r_scene, map.field.dims().language);
      const RelevanceMap rel = render_relevance(map, map.frame_pose(r_frame), map.intrinsics, r_text, embed(r_text));
      write_ppm(r_out, gray_image(rel.relevance, rel.width, rel.height));
      if (!r_mask.empty()) {
        const auto m = rel.mask(map.config.tau_rel);
        write_ppm(r_mask, gray_image(Eigen::Map<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>>(m.data(), static_cast<Eigen::Index>(m.size())).cast<double>(), rel.width, rel.height));
      }
      std::cout << "wrote " << r_out << "\n";
      return 0;
    }

    if (*render_cmd) {
      const MapSnapshot map = load_map(v_map);
      const ViewRender view = render_view(map, map.frame_pose(v_frame), map.intrinsics);
      write_ppm(v_out, view.rgb);
      if (!v_depth.empty()) write_depth(v_depth, view.depth);
      std::cout << "wrote " << v_out << "\n";
      return 0;
    }

    if (*serve_cmd) {
      if (s_scene.empty() && s_map.empty()) throw InputError("serve needs --scene or --map");
      std::unique_ptr<Mapper> mapper;
      std::optional<SceneDirectory> scene;
      SnapshotPublisher static_map;
      TextEmbedder embed;
      if (!s_scene.empty()) {
        scene = SceneDirectory::open(s_scene);
        Config c = make_config(serve_build);
        c.max_range = scene->max_range();
        mapper = std::make_unique<Mapper>(c, scene->bounds(), scene->intrinsics(), scene->provider());
        embed = scene_embedder(scene->provider());
      } else {
        auto map = std::make_shared<MapSnapshot>(load_map(s_map));
        map->digest = snapshot_digest(*map);
        embed = stub_embedder(map->field.dims().language);
        static_map.publish(std::move(map));
      }
      SnapshotPublisher& publisher = mapper ? mapper->publisher() : static_map;
      const QueryService service([&publisher] { return publisher.latest(); }, embed);

      std::thread builder;
      if (mapper) {
        builder = std::thread([&] {
          run_mapping(*mapper, *scene, frame_limit(*scene, serve_build.frames), serve_build.quiet);
          if (!serve_build.quiet) std::fprintf(stderr, "mapping finished\n");
        });
      }
      if (s_listen == "stdio") {
        service.serve_stream(std::cin, std::cout);
      } else {
        sigset_t signals;
        sigemptyset(&signals);
        sigaddset(&signals, SIGINT);
        sigaddset(&signals, SIGTERM);
        pthread_sigmask(SIG_BLOCK, &signals, nullptr);
        const auto [host, port] = parse_endpoint(s_listen);
        TcpServer server(service, host, port);
        std::fprintf(stderr, "listening on %s:%d\n", host.c_str(), server.port());
        std::thread waiter([&] {
          int sig = 0;
          sigwait(&signals, &sig);
          server.stop();
        });
        server.run();
        waiter.join();
      }
      if (mapper) mapper->request_stop();
      if (builder.joinable()) builder.join();
      return 0;
    }

    if (*eval_cmd) {
      const SceneDirectory scene = SceneDirectory::open(e_scene);
      if (!scene.scene()) throw InputError("eval needs a synthetic scene with object ground truth");
      const auto queries = e_queries.empty() ? scene.queries() : read_queries(e_queries);
      const MapSnapshot map = [&] {
        if (!e_map.empty()) return load_map(e_map);
        Config c = make_config(eval_build);
        c.max_range = scene.max_range();
        Mapper mapper(c, scene.bounds(), scene.intrinsics(), scene.provider(), MapperOptions{.publish = false});
        run_mapping(mapper, scene, frame_limit(scene, eval_build.frames), eval_build.quiet);
        return mapper.state();
      }();
      EvalOptions options;
      options.tau = e_tau >= 0 ? e_tau : map.config.tau_rel;
      const EvalReport report = evaluate_map(map, *scene.scene(), queries, scene_embedder(scene.provider()),
                                             [&](std::uint64_t id) { return pose_for_frame(scene, id); }, options);
      json j{{"mean_iou", report.mean_iou}, {"tau", options.tau}, {"voting", map.config.voting},
             {"split", map.config.split}, {"queries", json::array()}};
      for (const auto& q : report.queries) {
        j["queries"].push_back(json{{"text", q.text}, {"mean_iou", q.mean_iou}, {"frames", q.frames}, {"iou", q.iou}});
      }
      std::ofstream(e_report) << j.dump(2) << "\n";
      std::cout << "mean IoU " << report.mean_iou << " over " << report.queries.size() << " queries\n";
      return 0;
    }

    if (*validate_cmd) {
      int rc = 0;
      for (const auto& f : val_files) rc |= validate_file(f);
      return rc;
    }
  } catch (const std::exception& e) {
    std::cerr << "o2v: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
