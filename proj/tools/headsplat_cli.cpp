#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "headsplat/bundle.hpp"
#include "headsplat/head_model.hpp"
#include "headsplat/io.hpp"
#include "headsplat/metrics.hpp"
#include "headsplat/parallel.hpp"
#include "headsplat/puppet.hpp"
#include "headsplat/refine.hpp"
#include "headsplat/runtime.hpp"
#include "headsplat/vq.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace headsplat;

namespace {

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, static_cast<std::int64_t>(e.byte), std::string("malformed JSON: ") + e.what());
  }
}

json load_json_file(const std::string& path) {
  const Bytes b = read_file(path);
  return parse_json_text(std::string(b.begin(), b.end()), path);
}

// "--weights" takes inline JSON or @path.
ExpressionWeights parse_weights(const std::string& arg) {
  if (arg.empty()) return {};
  const json j = arg[0] == '@' ? load_json_file(arg.substr(1)) : parse_json_text(arg, "--weights");
  if (!j.is_object()) throw ValidationError("weights must be a JSON object of name -> number");
  ExpressionWeights w;
  for (const auto& [name, v] : j.items()) {
    if (!v.is_number()) throw ValidationError("weight '" + name + "' is not a number");
    w[name] = v.get<double>();
  }
  return w;
}

Vec3 parse_color(const std::string& s) {
  Vec3 c = Vec3::Zero();
  if (s.empty()) return c;
  std::stringstream ss(s);
  std::string item;
  int i = 0;
  while (std::getline(ss, item, ',')) {
    if (i > 2) throw ValidationError("background must be r,g,b");
    c[i++] = std::stod(item);
  }
  if (i != 3) throw ValidationError("background must be r,g,b");
  return c;
}

struct CommonOptions {
  std::string bundle;
  int threads = 0;
  int band_width = -1;
  int grid_step = 0;
  int roi_grid_step = -1;
  std::string background;

  void add(CLI::App* cmd, bool bundle_required = true) {
    auto* o = cmd->add_option("--bundle", bundle, "Bundle directory or manifest.json");
    if (bundle_required) o->required();
    cmd->add_option("--threads", threads, "Worker threads (default: AVATAR_THREADS or all cores)");
    cmd->add_option("--band-width", band_width, "Transition band width in texels (default: bundle)")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--grid-step", grid_step, "UV grid step s (default: bundle)")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--roi-grid-step", roi_grid_step, "Finer grid step inside the face roi, 0 = off")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--background", background, "Background color r,g,b in [0,1] (default 0,0,0)");
  }

  RuntimeConfig runtime(const BundleManifest& m) const {
    RuntimeConfig rc;
    rc.grid_step = grid_step > 0 ? grid_step : m.grid_step;
    rc.roi_grid_step = roi_grid_step >= 0 ? roi_grid_step : m.roi_grid_step;
    rc.band_width = band_width >= 0 ? band_width : m.band_width;
    rc.threads = threads > 0 ? threads : default_threads();
    rc.background = parse_color(background);
    return rc;
  }
};

struct CameraOptions {
  std::string file;
  double yaw = 0.0;
  double pitch = 0.0;
  double distance = 0.0;
  int width = 0;
  int height = 0;
  bool orbit = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--camera", file, "Camera JSON (world_to_cam, fx, fy, cx, cy, width, height)");
    cmd->add_option("--yaw", yaw, "Orbit yaw in degrees (0 = frontal)");
    cmd->add_option("--pitch", pitch, "Orbit pitch in degrees");
    cmd->add_option("--distance", distance, "Orbit distance (default: bundle camera distance)");
    cmd->add_option("--width", width, "Image width (default: bundle camera)");
    cmd->add_option("--height", height, "Image height (default: bundle camera)");
  }

  Camera resolve(const BundleManifest& m, const CLI::App* cmd) const {
    if (!file.empty()) {
      try {
        return Camera::from_json(load_json_file(file));
      } catch (const json::exception& e) {
        throw ParseError(file, -1, std::string("invalid camera: ") + e.what());
      }
    }
    const bool custom = cmd->count("--yaw") || cmd->count("--pitch") || cmd->count("--distance") ||
                        width > 0 || height > 0;
    if (!custom) return m.camera;
    const Vec3 target(0.0, -0.02, 0.0);
    const double d = distance > 0 ? distance : (m.camera.position() - target).norm();
    return orbit_camera(target, d, yaw, pitch, width > 0 ? width : m.camera.width,
                        height > 0 ? height : m.camera.height, 30.0);
  }
};

void write_image_pair(const std::string& prefix, const Raster& img) {
  write_cimg(prefix + ".cimg", img);
  write_ppm(prefix + ".ppm", img);
}

std::string frame_name(const std::string& dir, int i, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%0*d", digits, i);
  return (fs::path(dir) / buf).string();
}

std::vector<std::pair<double, ExpressionWeights>> read_animation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, -1, "cannot open animation file");
  std::vector<std::pair<double, ExpressionWeights>> frames;
  std::string line;
  std::int64_t offset = 0;
  while (std::getline(in, line)) {
    const std::int64_t line_start = offset;
    offset += static_cast<std::int64_t>(line.size()) + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path, line_start + static_cast<std::int64_t>(e.byte) - 1, "malformed JSON line");
    }
    if (!j.is_object() || !j.contains("weights") || !j["weights"].is_object())
      throw ParseError(path, line_start, "each line needs {\"t_ms\", \"weights\"}");
    ExpressionWeights w;
    for (const auto& [name, v] : j["weights"].items()) {
      if (!v.is_number()) throw ParseError(path, line_start, "weight '" + name + "' is not a number");
      w[name] = v.get<double>();
    }
    frames.emplace_back(j.value("t_ms", 0.0), std::move(w));
  }
  return frames;
}

json psnr_json(double psnr) { return std::isinf(psnr) ? json("inf") : json(psnr); }

std::atomic<bool> g_interrupted{false};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"headsplat: UV-atlas Gaussian head avatar runtime"};
  app.require_subcommand(1);

  // render
  CommonOptions render_common;
  CameraOptions render_cam;
  std::string render_out, render_weights;
  bool render_oracle = false;
  auto* render = app.add_subcommand("render", "Render one frame to <out>.cimg and <out>.ppm");
  render_common.add(render);
  render_cam.add(render);
  render->add_option("--out", render_out, "Output path prefix")->required();
  render->add_option("--weights", render_weights, "Expression weights: JSON object or @file");
  render->add_flag("--oracle", render_oracle, "Use the reference (per-pixel full list) compositor");

  // turntable
  CommonOptions tt_common;
  int tt_frames = 4, tt_width = 0, tt_height = 0;
  double tt_radius = 0.0, tt_pitch = 0.0;
  std::string tt_out, tt_weights;
  auto* turntable = app.add_subcommand("turntable", "Orbit the head about the Y axis");
  tt_common.add(turntable);
  turntable->add_option("--frames", tt_frames, "Number of frames (yaw = 360 * i / frames)");
  turntable->add_option("--radius", tt_radius, "Orbit radius (default: bundle camera distance)");
  turntable->add_option("--pitch", tt_pitch, "Orbit pitch in degrees");
  turntable->add_option("--width", tt_width, "Image width");
  turntable->add_option("--height", tt_height, "Image height");
  turntable->add_option("--weights", tt_weights, "Expression weights: JSON object or @file");
  turntable->add_option("--out", tt_out, "Output directory")->required();

  // animate
  CommonOptions an_common;
  CameraOptions an_cam;
  std::string an_input, an_out;
  auto* animate = app.add_subcommand("animate", "Render a JSON-lines expression track");
  an_common.add(animate);
  an_cam.add(animate);
  animate->add_option("--input", an_input, "JSON lines: {\"t_ms\": ..., \"weights\": {...}}")->required();
  animate->add_option("--out", an_out, "Output directory")->required();

  // bench
  CommonOptions bench_common;
  CameraOptions bench_cam;
  int bench_frames = 30, bench_warmup = 1;
  std::string bench_out, bench_sequence;
  auto* bench = app.add_subcommand("bench", "Per-stage frame timing report (JSON)");
  bench_common.add(bench);
  bench_cam.add(bench);
  bench->add_option("--frames", bench_frames, "Timed frames");
  bench->add_option("--warmup", bench_warmup, "Untimed warmup frames (>= 1)");
  bench->add_option("--sequence", bench_sequence, "Expression track (JSON lines) cycled during the run");
  bench->add_option("--out", bench_out, "Report path (default: stdout)");

  // refine
  CommonOptions rf_common;
  std::string rf_config, rf_out;
  double rf_self_noise = 0.0;
  std::uint64_t rf_seed = 1;
  int rf_iterations = -1;
  auto* refine = app.add_subcommand("refine", "Refine atlas colors/opacities against target images");
  rf_common.add(refine);
  refine->add_option("--config", rf_config,
                     "Refinement JSON: iterations, step, momentum, maps, lambda6, expression, "
                     "views [{camera | yaw/pitch/distance, target}]");
  refine->add_option("--self-test", rf_self_noise,
                     "Render 3 views as targets, perturb the color atlases with this noise sigma, refine");
  refine->add_option("--seed", rf_seed, "Noise seed for --self-test");
  refine->add_option("--iterations", rf_iterations, "Override the iteration count");
  refine->add_option("--out", rf_out, "Output directory (refined bundle + trace.csv)")->required();

  // metrics
  std::string m_a, m_b;
  auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM between two CIMG images");
  metrics->add_option("a", m_a, "First image (.cimg)")->required();
  metrics->add_option("b", m_b, "Second image (.cimg)")->required();

  // quantize
  std::string q_grid, q_codebook, q_bundle, q_out, q_indices;
  auto* quantize_cmd = app.add_subcommand("quantize", "Nearest-entry codebook quantization of a UVAM grid");
  quantize_cmd->add_option("--grid", q_grid, "Feature grid (UVAM, channels = codebook dimension)")->required();
  quantize_cmd->add_option("--codebook", q_codebook, "Codebook (CBOK)");
  quantize_cmd->add_option("--bundle", q_bundle, "Take the codebook from this bundle");
  quantize_cmd->add_option("--out", q_out, "Quantized grid (UVAM)")->required();
  quantize_cmd->add_option("--indices", q_indices, "Write per-cell indices as JSON");

  // bake
  SyntheticParams bake_params;
  std::string bake_out, bake_bundle;
  auto* bake = app.add_subcommand("bake", "Head-model fixtures: mesh, position and normal maps");
  bake->add_option("--out", bake_out, "Output directory")->required();
  bake->add_option("--atlas-size", bake_params.atlas_size, "Atlas resolution");
  bake->add_option("--subdivision", bake_params.subdivision, "Icosphere subdivision level");
  bake->add_option("--bundle-out", bake_bundle, "Also write a synthetic avatar bundle here");
  bake->add_option("--render-size", bake_params.render_size, "Bundle camera resolution");
  bake->add_option("--grid-step", bake_params.grid_step, "Bundle grid step");
  bake->add_option("--roi-grid-step", bake_params.roi_grid_step, "Bundle roi grid step");
  bake->add_option("--band-width", bake_params.band_width, "Bundle transition band width");
  bake->add_option("--seed", bake_params.seed, "Bundle texture seed");
  bake->add_option("--threads", bake_params.threads, "Worker threads");

  // serve
  CommonOptions sv_common;
  ServiceOptions sv;
  auto* serve = app.add_subcommand("serve", "Puppeteering service: GET /meta, POST /state, GET /frames");
  serve->add_option("--bundle", sv_common.bundle, "Bundle directory or manifest.json")->required();
  serve->add_option("--threads", sv.threads, "Worker threads");
  serve->add_option("--host", sv.host, "Bind address");
  serve->add_option("--port", sv.port, "Port (0 = any free port)");
  serve->add_option("--width", sv.width, "Render width (default: bundle camera)");
  serve->add_option("--height", sv.height, "Render height (default: bundle camera)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*render) {
      const AvatarBundle b = load_bundle(render_common.bundle);
      const Camera cam = render_cam.resolve(b.manifest, render);
      const ExpressionWeights w = parse_weights(render_weights);
      validate_weights(*b.assets, w);
      AvatarRuntime rt(b.assets, render_common.runtime(b.manifest));
      const RenderedFrame& f = rt.render(w, cam, render_oracle);
      write_image_pair(render_out, f.target.color);
      std::cout << json{{"cimg", render_out + ".cimg"},
                        {"ppm", render_out + ".ppm"},
                        {"primitives", f.primitives},
                        {"splats", f.splats},
                        {"timings_us", timings_to_json(f.timings)}}
                       .dump()
                << "\n";
    } else if (*turntable) {
      if (turntable->count("--radius") && !(tt_radius > 0)) throw ValidationError("radius must be positive");
      if (tt_frames < 1) throw ValidationError("frames must be >= 1");
      const AvatarBundle b = load_bundle(tt_common.bundle);
      const ExpressionWeights w = parse_weights(tt_weights);
      validate_weights(*b.assets, w);
      const Vec3 target(0.0, -0.02, 0.0);
      const double radius = tt_radius > 0 ? tt_radius : (b.manifest.camera.position() - target).norm();
      AvatarRuntime rt(b.assets, tt_common.runtime(b.manifest));
      fs::create_directories(tt_out);
      json cams = json::array();
      const auto yaws = turntable_yaws(tt_frames);
      for (int i = 0; i < tt_frames; ++i) {
        const Camera cam = orbit_camera(target, radius, yaws[i], tt_pitch,
                                        tt_width > 0 ? tt_width : b.manifest.camera.width,
                                        tt_height > 0 ? tt_height : b.manifest.camera.height, 30.0);
        write_image_pair(frame_name(tt_out, i, 3), rt.render(w, cam).target.color);
        cams.push_back({{"frame", i}, {"yaw", yaws[i]}, {"camera", cam.to_json()}});
      }
      std::ofstream(fs::path(tt_out) / "cameras.json") << cams.dump(2) << "\n";
      std::cout << json{{"frames", tt_frames}, {"yaws", yaws}}.dump() << "\n";
    } else if (*animate) {
      const AvatarBundle b = load_bundle(an_common.bundle);
      const Camera cam = an_cam.resolve(b.manifest, animate);
      const auto track = read_animation(an_input);
      for (const auto& [t, w] : track) validate_weights(*b.assets, w);
      AvatarRuntime rt(b.assets, an_common.runtime(b.manifest));
      fs::create_directories(an_out);
      std::ofstream timings(fs::path(an_out) / "timings.jsonl");
      for (std::size_t i = 0; i < track.size(); ++i) {
        const RenderedFrame& f = rt.render(track[i].second, cam);
        write_image_pair(frame_name(an_out, static_cast<int>(i), 4), f.target.color);
        json row = timings_to_json(f.timings);
        row["frame"] = i;
        row["t_ms"] = track[i].first;
        timings << row.dump() << "\n";
      }
      std::cout << json{{"frames", track.size()}}.dump() << "\n";
    } else if (*bench) {
      const AvatarBundle b = load_bundle(bench_common.bundle);
      const Camera cam = bench_cam.resolve(b.manifest, bench);
      std::vector<ExpressionWeights> seq;
      if (!bench_sequence.empty())
        for (auto& [t, w] : read_animation(bench_sequence)) {
          validate_weights(*b.assets, w);
          seq.push_back(std::move(w));
        }
      AvatarRuntime rt(b.assets, bench_common.runtime(b.manifest));
      json report = run_bench(rt, cam, seq, bench_frames, bench_warmup).to_json();
      report["static_builds"] = rt.static_builds();
      if (bench_out.empty()) {
        std::cout << report.dump(2) << "\n";
      } else {
        std::ofstream out(bench_out);
        out << report.dump(2) << "\n";
        if (!out) throw ParseError(bench_out, -1, "write failed");
      }
    } else if (*refine) {
      if (rf_config.empty() == (rf_self_noise <= 0.0))
        throw ValidationError("refine needs exactly one of --config or --self-test");
      AvatarBundle b = load_bundle(rf_common.bundle);
      const RuntimeConfig rc = rf_common.runtime(b.manifest);
      RefineConfig cfg;
      std::vector<RefineView> views;
      AvatarAssets start = *b.assets;
      const Vec3 target(0.0, -0.02, 0.0);
      const double dist = (b.manifest.camera.position() - target).norm();
      std::vector<Raster> reference;
      if (!rf_config.empty()) {
        const json j = load_json_file(rf_config);
        try {
          cfg = RefineConfig::from_json(j);
          const fs::path base = fs::path(rf_config).parent_path();
          for (const auto& v : j.at("views")) {
            RefineView view;
            if (v.contains("camera")) {
              view.camera = Camera::from_json(v["camera"]);
            } else {
              view.camera = orbit_camera(target, v.value("distance", dist), v.value("yaw", 0.0),
                                         v.value("pitch", 0.0), b.manifest.camera.width,
                                         b.manifest.camera.height, 30.0);
            }
            view.target = read_cimg((base / v.at("target").get<std::string>()).string());
            views.push_back(std::move(view));
          }
        } catch (const json::exception& e) {
          throw ParseError(rf_config, -1, std::string("invalid refinement config: ") + e.what());
        }
      } else {
        AvatarRuntime rt(b.assets, rc);
        for (double yaw : {-30.0, 0.0, 30.0}) {
          const Camera cam = orbit_camera(target, dist, yaw, 0.0, b.manifest.camera.width,
                                          b.manifest.camera.height, 30.0);
          views.push_back({cam, rt.render({}, cam).target.color});
        }
        std::mt19937_64 rng(rf_seed);
        std::normal_distribution<double> noise(0.0, rf_self_noise);
        for (AttributeAtlas* a : {&start.static_atlas, &start.dynamic_atlas})
          for (int y = 0; y < a->height(); ++y)
            for (int x = 0; x < a->width(); ++x)
              for (int c = 0; c < 3; ++c) {
                double& v = a->data.at(x, y, channel::kColor + c);
                v = std::clamp(v + noise(rng), 0.0, 1.0);
              }
      }
      if (rf_iterations >= 0) cfg.iterations = rf_iterations;
      fs::create_directories(rf_out);
      RefineResult r;
      try {
        r = refine_avatar(start, rc, views, cfg);
      } catch (const RefineDivergenceError& e) {
        write_trace_csv((fs::path(rf_out) / "trace.csv").string(), e.trace());
        throw;
      }
      write_trace_csv((fs::path(rf_out) / "trace.csv").string(), r.trace);
      auto refined = std::make_shared<AvatarAssets>(start);
      refined->static_atlas = r.static_atlas;
      refined->dynamic_atlas = r.dynamic_atlas;
      AvatarBundle out = b;
      out.assets = refined;
      save_bundle(out, rf_out);
      json summary = {{"iterations", static_cast<int>(r.trace.size()) - 1},
                      {"initial_loss", r.trace.front().total},
                      {"final_loss", r.trace.back().total},
                      {"step", r.step},
                      {"seconds", r.seconds}};
      AvatarRuntime rt(refined, rc);
      json psnrs = json::array();
      for (const auto& v : views) psnrs.push_back(psnr_json(metric_psnr(rt.render(cfg.expression, v.camera).target.color, v.target)));
      summary["psnr_per_view"] = psnrs;
      std::cout << summary.dump() << "\n";
    } else if (*metrics) {
      const Raster a = read_cimg(m_a);
      const Raster bimg = read_cimg(m_b);
      std::cout << json{{"psnr", psnr_json(metric_psnr(a, bimg))}, {"ssim", metric_ssim(a, bimg)}}.dump()
                << "\n";
    } else if (*quantize_cmd) {
      if (q_codebook.empty() == q_bundle.empty())
        throw ValidationError("quantize needs exactly one of --codebook or --bundle");
      Codebook book;
      if (!q_codebook.empty()) {
        book = read_cbok(q_codebook);
      } else {
        const AvatarBundle b = load_bundle(q_bundle);
        if (!b.codebook) throw ValidationError("bundle has no codebook");
        book = *b.codebook;
      }
      const Raster r = read_uvam(q_grid).raster;
      if (r.channels() != book.dim)
        throw ValidationError("grid has " + std::to_string(r.channels()) + " channels, codebook dimension is " +
                              std::to_string(book.dim));
      FeatureGrid grid(r.height(), r.width(), r.channels());
      grid.values = r.data();
      const QuantizedGrid q = quantize(grid, book);
      Raster out(r.width(), r.height(), r.channels());
      out.data() = q.vectors.values;
      write_uvam(q_out, out);
      if (!q_indices.empty()) std::ofstream(q_indices) << json(q.indices).dump() << "\n";
      std::cout << json{{"cells", grid.cells()}, {"error", quantization_error(grid, book)}}.dump() << "\n";
    } else if (*bake) {
      HeadParams hp;
      hp.subdivision = bake_params.subdivision;
      const HeadMesh mesh = generate_head(hp);
      mesh.validate();
      fs::create_directories(bake_out);
      const fs::path dir(bake_out);
      write_obj(mesh, (dir / "head.obj").string());
      write_uvam((dir / "position.uvam").string(),
                 bake_position_map(mesh, bake_params.atlas_size, bake_params.threads));
      const NormalBakeResult nb = bake_normal_map(mesh, bake_params.atlas_size, bake_params.threads);
      write_uvam((dir / "normal.uvam").string(), nb.normals);
      if (!bake_bundle.empty()) save_bundle(make_synthetic_bundle(bake_params), bake_bundle);
      std::cout << json{{"vertices", mesh.vertex_count()},
                        {"faces", mesh.face_count()},
                        {"degenerate_faces", nb.degenerate_faces}}
                       .dump()
                << "\n";
    } else if (*serve) {
      if (sv.threads <= 0) sv.threads = default_threads();
      PuppetService service(load_bundle(sv_common.bundle), sv);
      const int port = service.start();
      std::cout << json{{"listening", sv.host + ":" + std::to_string(port)}}.dump() << std::endl;
      std::signal(SIGINT, [](int) { g_interrupted = true; });
      std::signal(SIGTERM, [](int) { g_interrupted = true; });
      while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      service.stop();
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
