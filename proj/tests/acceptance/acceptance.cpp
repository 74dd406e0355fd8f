// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "headsplat/blender.hpp"
#include "headsplat/io.hpp"
#include "headsplat/losses.hpp"
#include "headsplat/metrics.hpp"
#include "headsplat/refine.hpp"
#include "headsplat/runtime.hpp"
#include "headsplat/vq.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace headsplat;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

double max_abs_diff(const Raster& a, const Raster& b) {
  if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels())
    return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> count(1, 2000);
  std::uniform_real_distribution<double> sigma(1.0, 8.0);
  std::uniform_real_distribution<double> u01(0, 1);
  double worst = 0.0;
  for (int scene = 0; scene < 100; ++scene) {
    const Camera cam = fixtures::pixel_camera(128);
    const SplatList list = fixtures::random_splats(count(rng), 128, rng, sigma(rng));
    const Vec3 bg(u01(rng), u01(rng), u01(rng));
    const RenderTarget ref = composite_oracle(list, cam, bg);
    const RenderTarget tiled = composite_tiled(list, cam, bg, {16, 0});
    worst = std::max(worst, max_abs_diff(tiled.color, ref.color));
  }

  const Camera cam = fixtures::pixel_camera(256);
  const SplatList big = fixtures::random_splats(2000, 256, rng, 4.0);
  double oracle_s = 1e300, tiled_s = 1e300;
  for (int rep = 0; rep < 3; ++rep) {
    auto t0 = Clock::now();
    composite_oracle(big, cam, Vec3::Zero());
    oracle_s = std::min(oracle_s, seconds_since(t0));
    t0 = Clock::now();
    composite_tiled(big, cam, Vec3::Zero(), {16, 1});
    tiled_s = std::min(tiled_s, seconds_since(t0));
  }
  const double speedup = oracle_s / tiled_s;
  return {worst < 1e-5 && speedup >= 5.0,
          "max |tiled - oracle| = " + fmt(worst) + " over 100 scenes (limit 1e-5); speedup " +
              fmt(speedup) + "x at 2000 splats, 256x256, one thread (limit 5x)"};
}

Outcome gradient_correctness() {
  const double h = 1e-4;
  double worst = 0.0;
  int probes = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(5000 + seed);
    const AttributeAtlas atlas = fixtures::random_activated_atlas(16, 16, rng, 0.2, 0.8, 0.06);
    const PositionMap pos = fixtures::plane_positions(16, 16, 0.5, rng);
    SamplingConfig sc;
    sc.step = 1;
    sc.opacity_floor = 0.0;
    std::uniform_real_distribution<double> yaw(-25, 25);
    const Camera cam = orbit_camera(Vec3::Zero(), 2.0, yaw(rng), yaw(rng) / 2, 32, 32, 40.0);
    Raster target(32, 32, 3);
    std::uniform_real_distribution<double> u(0, 1);
    for (double& v : target.data()) v = u(rng);
    const Vec3 bg(u(rng), u(rng), u(rng));
    const AtlasLossGrad lg = atlas_l2_loss_and_grad(atlas, pos, sc, cam, target, bg);
    auto loss_at = [&](int x, int y, int ch, double delta) {
      AttributeAtlas a = atlas;
      a.data.at(x, y, ch) += delta;
      return atlas_l2_loss_and_grad(a, pos, sc, cam, target, bg).loss;
    };
    std::uniform_int_distribution<int> px(0, 15), pc(0, 3);
    for (int k = 0; k < 16; ++k, ++probes) {
      const int x = px(rng), y = px(rng), ch = pc(rng);
      const double fd = (loss_at(x, y, ch, h) - loss_at(x, y, ch, -h)) / (2 * h);
      const double an = ch < 3 ? lg.grad.color.at(x, y, ch) : lg.grad.opacity.at(x, y, 0);
      worst = std::max(worst, std::abs(an - fd) / std::max(std::abs(fd), 1e-6));
    }
  }
  return {worst < 1e-3, "worst relative error " + fmt(worst) + " over " + std::to_string(probes) +
                            " color/opacity probes, 20 seeds, 16x16 atlas, 32x32 render, h = 1e-4 "
                            "(limit 1e-3)"};
}

Raster random_raster(int w, int h, int ch, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Raster r(w, h, ch);
  for (double& v : r.data()) v = u(rng);
  return r;
}

Outcome blending_correctness() {
  std::mt19937_64 rng(2002);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> u(0, 1);
  int exact = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 32;
    const Raster s = random_raster(n, n, 3, rng, -1, 1);
    const Raster o = random_raster(n, n, 3, rng, -0.1, 0.1);
    const Raster d = random_raster(n, n, 3, rng, -0.1, 0.1);
    BlendMasks m{Raster(n, n, 1), Raster(n, n, 1), 0, {0, 0, n, n}};
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        m.face_mask.at(x, y, 0) = coin(rng) ? 1.0 : 0.0;
        m.soft_mask.at(x, y, 0) = m.face_mask.at(x, y, 0) * u(rng);
      }
    const AttributeAtlas sa = fixtures::random_activated_atlas(n, n, rng);
    AttributeAtlas da = fixtures::random_activated_atlas(n, n, rng);
    da.origin = AtlasOrigin::Dynamic;
    exact += fuse_positions(s, o, d, m) == oracle::fuse_positions(s, o, d, m.face_mask) &&
             fuse_attributes(sa, da, m).data ==
                 oracle::fuse_attributes(sa.data, da.data, m.face_mask, m.soft_mask);
  }

  // Degenerate masks: all-zero keeps the static path, all-one takes the
  // dynamic path for every blended channel.
  const int n = 32;
  const Raster s = random_raster(n, n, 3, rng, -1, 1);
  const Raster o = random_raster(n, n, 3, rng, -0.1, 0.1);
  const Raster d = random_raster(n, n, 3, rng, -0.1, 0.1);
  const AttributeAtlas sa = fixtures::random_activated_atlas(n, n, rng);
  AttributeAtlas da = fixtures::random_activated_atlas(n, n, rng);
  da.origin = AtlasOrigin::Dynamic;
  const BlendMasks zero{Raster(n, n, 1, 0.0), Raster(n, n, 1, 0.0), 0, {0, 0, n, n}};
  const BlendMasks one{Raster(n, n, 1, 1.0), Raster(n, n, 1, 1.0), 0, {0, 0, n, n}};
  const Raster p0 = fuse_positions(s, o, d, zero), p1 = fuse_positions(s, o, d, one);
  const Raster a0 = fuse_attributes(sa, da, zero).data, a1 = fuse_attributes(sa, da, one).data;
  bool degenerate = true;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 3; ++c) {
        degenerate &= p0.at(x, y, c) == s.at(x, y, c) + o.at(x, y, c);
        degenerate &= p1.at(x, y, c) == s.at(x, y, c) + d.at(x, y, c);
      }
      for (int c = 0; c < channel::kCount; ++c) {
        degenerate &= a0.at(x, y, c) == sa.data.at(x, y, c);
        degenerate &= a1.at(x, y, c) == (c < channel::kOffset ? da.data : sa.data).at(x, y, c);
      }
    }
  return {exact == 50 && degenerate, std::to_string(exact) + "/50 random 32x32 instances bit-exact; " +
                                         "degenerate masks " + (degenerate ? "exact" : "MISMATCH")};
}

Outcome sampling_counts() {
  AttributeAtlas a(1024, 1024, AtlasOrigin::Static, AtlasState::Activated);
  for (int y = 0; y < 1024; ++y)
    for (int x = 0; x < 1024; ++x) {
      auto t = a.data.texel(x, y);
      t[0] = t[1] = t[2] = 0.5;
      t[channel::kOpacity] = 0.9;
      t[channel::kRotation] = 1.0;
      t[channel::kScale] = t[channel::kScale + 1] = t[channel::kScale + 2] = 0.01;
    }
  std::mt19937_64 rng(3);
  const PositionMap p = fixtures::plane_positions(1024, 1024, 1.0, rng, 0.0);
  SamplingConfig cfg;
  cfg.step = 8;
  const PrimitiveBatch b = sample_uv_grid(a, p, cfg);
  const std::size_t expected = oracle::count_primitives(1024, 1024, 8);
  const double cv = oracle::centroid_spacing_cv(b);
  return {b.size() == expected && expected == 32258 && cv < 0.05,
          std::to_string(b.size()) + " primitives (counting oracle " + std::to_string(expected) +
              "); centroid spacing CV " + fmt(cv) + " (limit 0.05)"};
}

Outcome refinement_self_reconstruction() {
  SyntheticParams sp;
  sp.atlas_size = 128;
  sp.subdivision = 3;
  sp.grid_step = 2;
  sp.roi_grid_step = 1;
  sp.band_width = 4;
  sp.render_size = 64;
  const AvatarBundle b = make_synthetic_bundle(sp);
  RuntimeConfig rc;
  rc.grid_step = b.manifest.grid_step;
  rc.roi_grid_step = b.manifest.roi_grid_step;
  rc.band_width = b.manifest.band_width;
  const Vec3 target(0.0, -0.02, 0.0);
  const double dist = (b.manifest.camera.position() - target).norm();
  std::vector<RefineView> views;
  AvatarRuntime clean(b.assets, rc);
  for (double yaw : {-30.0, 0.0, 30.0}) {
    const Camera cam = orbit_camera(target, dist, yaw, 0.0, 64, 64, 30.0);
    views.push_back({cam, clean.render({}, cam).target.color});
  }
  AvatarAssets noisy = *b.assets;
  std::mt19937_64 rng(4004);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (AttributeAtlas* a : {&noisy.static_atlas, &noisy.dynamic_atlas})
    for (int y = 0; y < a->height(); ++y)
      for (int x = 0; x < a->width(); ++x)
        for (int c = 0; c < 3; ++c) {
          double& v = a->data.at(x, y, channel::kColor + c);
          v = std::clamp(v + noise(rng), 0.0, 1.0);
        }
  auto min_psnr = [&](const AvatarAssets& assets) {
    AvatarRuntime rt(std::make_shared<AvatarAssets>(assets), rc);
    double m = std::numeric_limits<double>::infinity();
    for (const auto& v : views) m = std::min(m, metric_psnr(rt.render({}, v.camera).target.color, v.target));
    return m;
  };
  const double before = min_psnr(noisy);
  RefineConfig cfg;
  cfg.iterations = 500;
  const std::clock_t c0 = std::clock();
  const RefineResult r = refine_avatar(noisy, rc, views, cfg);
  const double cpu = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
  AvatarAssets refined = noisy;
  refined.static_atlas = r.static_atlas;
  refined.dynamic_atlas = r.dynamic_atlas;
  const double after = min_psnr(refined);
  const int iterations = static_cast<int>(r.trace.size()) - 1;
  return {after > 35.0 && iterations <= 500 && cpu < 300.0,
          "worst-view PSNR " + fmt(before) + " dB -> " + fmt(after) + " dB (limit 35) after " +
              std::to_string(iterations) + " iterations, " + fmt(cpu) + " s CPU (limit 300)"};
}

Outcome timing_structure() {
  const AvatarBundle b = make_synthetic_bundle(SyntheticParams{});
  RuntimeConfig rc;
  rc.grid_step = b.manifest.grid_step;
  rc.roi_grid_step = b.manifest.roi_grid_step;
  rc.band_width = b.manifest.band_width;
  AvatarRuntime rt(b.assets, rc);
  std::vector<ExpressionWeights> seq;
  for (int i = 0; i < 8; ++i) seq.push_back({{"jaw-open", i / 7.0}, {"smile", 1.0 - i / 7.0}});
  const TimingReport report = run_bench(rt, b.manifest.camera, seq, 20, 3);
  const json j = report.to_json();
  bool four = j["stages"].size() == 4;
  for (const char* s : kStageNames) four &= j["stages"].contains(s);
  const double share = (report.summary("color_fusion").median + report.summary("position_sampling").median) /
                       report.summary("total").median;
  const int builds = rt.static_builds();
  return {four && builds == 1 && share < 0.10,
          std::string("stages ") + (four ? "= the four per-frame stages" : j["stages"].dump()) +
              "; static builds over 23 frames: " + std::to_string(builds) +
              "; fusion + sampling = " + fmt(100 * share) + "% of median frame time (limit 10%), " +
              std::to_string(report.primitives) + " primitives at " +
              std::to_string(b.manifest.camera.width) + "x" + std::to_string(b.manifest.camera.height)};
}

Outcome vq_correctness() {
  std::mt19937_64 rng(6006);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> dim(1, 8), size(2, 32), side(1, 12);
  int exact = 0;
  std::size_t ties = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = dim(rng), k = size(rng);
    Codebook book(k, d);
    for (double& v : book.entries) v = std::round(4 * n01(rng)) / 2;
    // Duplicated entries make exact ties.
    for (int r = 0; r < 1 + k / 8; ++r) {
      std::uniform_int_distribution<int> pick(0, k - 1);
      const int from = pick(rng);
      std::copy_n(book.entry(from), d, book.entries.data() + static_cast<std::size_t>(pick(rng)) * d);
    }
    FeatureGrid g(side(rng), side(rng), d);
    std::uniform_int_distribution<int> entry(0, k - 1);
    for (std::size_t i = 0; i < g.cells(); ++i) {
      double* cell = g.values.data() + i * d;
      switch (i % 3) {
        case 0:  // an entry itself
          std::copy_n(book.entry(entry(rng)), d, cell);
          break;
        case 1: {  // midpoint of two entries on the half-integer lattice
          const double* a = book.entry(entry(rng));
          const double* b = book.entry(entry(rng));
          for (int c = 0; c < d; ++c) cell[c] = 0.5 * (a[c] + b[c]);
          break;
        }
        default:
          for (int c = 0; c < d; ++c) cell[c] = 2 * n01(rng);
      }
    }
    const QuantizedGrid q = quantize(g, book, trial % 3);
    bool ok = q.indices.size() == g.cells();
    for (std::size_t i = 0; ok && i < g.cells(); ++i) {
      const std::uint32_t want = oracle::argmin_entry(g.cell(i), book);
      ok &= q.indices[i] == want && std::equal(book.entry(want), book.entry(want) + d, q.vectors.cell(i));
      int nearest = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int e = 0; e < k; ++e) {
        double dd = 0;
        for (int c = 0; c < d; ++c) dd += (g.cell(i)[c] - book.entry(e)[c]) * (g.cell(i)[c] - book.entry(e)[c]);
        if (dd < best) {
          best = dd;
          nearest = 1;
        } else if (dd == best) {
          ++nearest;
        }
      }
      ties += nearest > 1;
    }
    exact += ok;
  }
  return {exact == 100 && ties > 0, std::to_string(exact) + "/100 random (grid, codebook) pairs match the "
                                        "exhaustive argmin exactly; " + std::to_string(ties) +
                                        " cells had tied nearest entries"};
}

HeadMesh flat_grid(int n) {
  HeadMesh m;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      m.positions.emplace_back(x * 0.1, y * 0.1, 0.0);
      m.uvs.emplace_back(x / (n - 1.0), y / (n - 1.0));
    }
  for (int y = 0; y + 1 < n; ++y)
    for (int x = 0; x + 1 < n; ++x) {
      const int a = y * n + x;
      m.faces.push_back({a, a + 1, a + n});
      m.faces.push_back({a + 1, a + n + 1, a + n});
    }
  m.uv_faces = m.faces;
  return m;
}

Outcome loss_identities() {
  const double kl0 = loss_kl(LatentSample({0.0}, {0.0}));
  const double kl1 = loss_kl(LatentSample({1.0}, {0.0}));
  const HeadMesh flat = flat_grid(8);
  const double lap_flat = loss_laplacian(flat), nc_flat = loss_normal_consistency(flat);
  HeadParams hp;
  hp.subdivision = 3;
  HeadMesh head = generate_head(hp);
  std::mt19937_64 rng(7007);
  std::normal_distribution<double> jitter(0, 0.005);
  for (auto& v : head.positions) v += Vec3(jitter(rng), jitter(rng), jitter(rng));
  double drift = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::normal_distribution<double> n01;
    const Mat3 r = Quaternion::from_axis_angle(Vec3(n01(rng), n01(rng), n01(rng)), 3 * n01(rng)).to_matrix();
    const Vec3 t(5 * n01(rng), 5 * n01(rng), 5 * n01(rng));
    HeadMesh moved = head;
    for (auto& p : moved.positions) p = r * p + t;
    drift = std::max({drift, std::abs(loss_laplacian(moved) - loss_laplacian(head)),
                      std::abs(loss_normal_consistency(moved) - loss_normal_consistency(head))});
  }
  const bool ok = kl0 == 0.0 && kl1 == 0.5 && std::abs(lap_flat) < 1e-12 && std::abs(nc_flat) < 1e-12 &&
                  drift < 1e-6;
  return {ok, "kl(0,0) = " + fmt(kl0) + ", kl(1,0) = " + fmt(kl1) + "; flat Laplacian " + fmt(lap_flat) +
                  ", flat normal consistency " + fmt(nc_flat) + "; rigid-motion drift " + fmt(drift) +
                  " (limit 1e-6)"};
}

int run_cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + HEADSPLAT_CLI + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("headsplat_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string bundle = std::string(HEADSPLAT_TEST_DATA) + "/golden_bundle";
  const std::string expr = R"( --weights '{"jaw-open":0.6,"brow-raise":0.4}' --yaw 15)";
  std::vector<std::string> images;
  int failures = 0;
  const std::vector<std::string> envs = {"AVATAR_THREADS=1", "AVATAR_THREADS=2", "AVATAR_THREADS=4",
                                         "AVATAR_THREADS=4"};
  for (std::size_t i = 0; i < envs.size(); ++i) {
    const fs::path out = dir / ("render" + std::to_string(i));
    failures += run_cli("render --bundle " + bundle + " --out " + out.string() + expr, envs[i]) != 0;
    images.push_back(slurp(out.string() + ".cimg") + slurp(out.string() + ".ppm"));
  }
  bool identical = failures == 0 && !images[0].empty();
  for (const auto& img : images) identical &= img == images[0];

  failures += run_cli("turntable --bundle " + bundle + " --frames 4 --width 24 --height 24 --out " +
                      (dir / "turntable").string()) != 0;
  std::vector<double> yaws;
  try {
    for (const auto& c : json::parse(slurp(dir / "turntable" / "cameras.json"))) yaws.push_back(c["yaw"]);
  } catch (const std::exception&) {
  }
  const bool turntable = yaws == std::vector<double>{0.0, 90.0, 180.0, 270.0};
  fs::remove_all(dir);
  std::string ys;
  for (double y : yaws) ys += (ys.empty() ? "" : ", ") + fmt(y);
  return {identical && turntable && failures == 0,
          std::string("render bytes ") + (identical ? "identical" : "DIFFER") +
              " across 1/2/4 threads and a repeat run; turntable yaws {" + ys + "}"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle-equivalence", oracle_equivalence},
      {"gradient-correctness", gradient_correctness},
      {"blending-correctness", blending_correctness},
      {"sampling-counts", sampling_counts},
      {"refinement-self-reconstruction", refinement_self_reconstruction},
      {"timing-structure", timing_structure},
      {"vq-correctness", vq_correctness},
      {"loss-identities", loss_identities},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(seconds_since(t0))
              << " s]" << std::endl;
  }
  std::cout << (failed ? "FAILED " + std::to_string(failed) + " of " : "ALL PASSED: ")
            << criteria.size() << " criteria" << std::endl;
  return failed ? 1 : 0;
}
