#include "headsplat/puppet.hpp"

#include <httplib.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>

namespace headsplat {

using nlohmann::json;

json PuppetState::to_json() const {
  return {{"weights", weights},
          {"camera", {{"yaw", yaw}, {"pitch", pitch}, {"distance", distance}}},
          {"band_width", band_width},
          {"grid_step", grid_step},
          {"roi_grid_step", roi_grid_step},
          {"resolution", {{"width", width}, {"height", height}}},
          {"sequence", sequence}};
}

bool PuppetState::same_content(const PuppetState& o) const {
  return weights == o.weights && yaw == o.yaw && pitch == o.pitch && distance == o.distance &&
         band_width == o.band_width && grid_step == o.grid_step &&
         roi_grid_step == o.roi_grid_step && width == o.width && height == o.height;
}

namespace {

class PatchChecker {
 public:
  void fail(const std::string& field, const std::string& why) {
    fields_.push_back(field);
    messages_.push_back(field + " " + why);
  }

  bool number(const json& j, const std::string& field, double& out) {
    if (!j.is_number()) {
      fail(field, "must be a number");
      return false;
    }
    out = j.get<double>();
    if (!std::isfinite(out)) {
      fail(field, "must be finite");
      return false;
    }
    return true;
  }

  bool integer(const json& j, const std::string& field, int lo, int hi, int& out) {
    if (!j.is_number_integer()) {
      fail(field, "must be an integer");
      return false;
    }
    const auto v = j.get<std::int64_t>();
    if (v < lo || v > hi) {
      fail(field, "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
      return false;
    }
    out = static_cast<int>(v);
    return true;
  }

  void object_keys(const json& j, const std::string& field, std::initializer_list<const char*> keys) {
    for (const auto& [k, v] : j.items()) {
      bool known = false;
      for (const char* key : keys) known |= k == key;
      if (!known) fail(field.empty() ? k : field + "." + k, "is not a known field");
    }
  }

  void finish() const {
    if (fields_.empty()) return;
    std::string msg = "invalid patch:";
    for (const auto& m : messages_) msg += " " + m + ";";
    msg.pop_back();
    throw PatchError(msg, fields_);
  }

 private:
  std::vector<std::string> fields_;
  std::vector<std::string> messages_;
};

}  // namespace

PuppetState apply_update(const PuppetState& state, const json& patch, const PuppetLimits& limits) {
  if (!patch.is_object()) throw PatchError("patch must be a JSON object", {"<root>"});
  if (patch.empty()) return state;
  PatchChecker check;
  PuppetState next = state;
  check.object_keys(patch, "", {"weights", "camera", "band_width", "grid_step", "roi_grid_step",
                                "resolution"});
  if (patch.contains("weights")) {
    const json& w = patch["weights"];
    if (!w.is_object()) {
      check.fail("weights", "must be an object");
    } else {
      for (const auto& [name, value] : w.items()) {
        const std::string field = "weights." + name;
        if (std::find(limits.blendshapes.begin(), limits.blendshapes.end(), name) ==
            limits.blendshapes.end()) {
          check.fail(field, "is not a known blendshape");
          continue;
        }
        double v = 0.0;
        if (!check.number(value, field, v)) continue;
        if (v < 0.0 || v > 1.0) {
          check.fail(field, "must lie in [0, 1]");
          continue;
        }
        next.weights[name] = v;
      }
    }
  }
  if (patch.contains("camera")) {
    const json& c = patch["camera"];
    if (!c.is_object()) {
      check.fail("camera", "must be an object");
    } else {
      check.object_keys(c, "camera", {"yaw", "pitch", "distance"});
      double v = 0.0;
      if (c.contains("yaw") && check.number(c["yaw"], "camera.yaw", v)) next.yaw = v;
      if (c.contains("pitch") && check.number(c["pitch"], "camera.pitch", v)) {
        if (std::abs(v) >= 89.0)
          check.fail("camera.pitch", "must lie in (-89, 89)");
        else
          next.pitch = v;
      }
      if (c.contains("distance") && check.number(c["distance"], "camera.distance", v)) {
        if (!(v > limits.near))
          check.fail("camera.distance", "must exceed the near plane");
        else
          next.distance = v;
      }
    }
  }
  if (patch.contains("band_width"))
    check.integer(patch["band_width"], "band_width", 0, limits.max_band_width, next.band_width);
  if (patch.contains("grid_step"))
    check.integer(patch["grid_step"], "grid_step", 1, limits.max_grid_step, next.grid_step);
  if (patch.contains("roi_grid_step"))
    check.integer(patch["roi_grid_step"], "roi_grid_step", 0, limits.max_roi_grid_step,
                  next.roi_grid_step);
  if (patch.contains("resolution")) {
    const json& r = patch["resolution"];
    if (!r.is_object()) {
      check.fail("resolution", "must be an object");
    } else {
      check.object_keys(r, "resolution", {"width", "height"});
      if (r.contains("width")) check.integer(r["width"], "resolution.width", 8, limits.max_resolution, next.width);
      if (r.contains("height"))
        check.integer(r["height"], "resolution.height", 8, limits.max_resolution, next.height);
    }
  }
  check.finish();
  next.sequence = state.sequence + 1;
  return next;
}

namespace {

void put_u32(Bytes& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& b, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const Bytes& b, std::size_t at, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

constexpr std::size_t kFrameHeader = 4 + 8 + 4 + 4;

}  // namespace

Bytes encode_frame(const FrameMessage& f) {
  if (f.rgb.size() != static_cast<std::size_t>(f.width) * f.height * 3)
    throw ValidationError("frame payload does not match its dimensions");
  const std::string trailer = f.trailer.is_null() ? std::string() : f.trailer.dump();
  Bytes out;
  out.reserve(kFrameHeader + f.rgb.size() + 4 + trailer.size());
  for (char c : {'F', 'R', 'M', 'E'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u64(out, f.sequence);
  put_u32(out, static_cast<std::uint32_t>(f.width));
  put_u32(out, static_cast<std::uint32_t>(f.height));
  out.insert(out.end(), f.rgb.begin(), f.rgb.end());
  put_u32(out, static_cast<std::uint32_t>(trailer.size()));
  out.insert(out.end(), trailer.begin(), trailer.end());
  return out;
}

bool decode_frame(const Bytes& s, std::size_t& offset, FrameMessage& out) {
  const std::size_t start = offset;
  if (s.size() - start < kFrameHeader) return false;
  if (std::memcmp(s.data() + start, "FRME", 4) != 0)
    throw ParseError("<frame stream>", static_cast<std::int64_t>(start), "expected magic 'FRME'");
  const std::uint64_t seq = get_le(s, start + 4, 8);
  const auto w = static_cast<std::uint32_t>(get_le(s, start + 12, 4));
  const auto h = static_cast<std::uint32_t>(get_le(s, start + 16, 4));
  if (w > (1u << 15) || h > (1u << 15))
    throw ParseError("<frame stream>", static_cast<std::int64_t>(start + 12), "implausible frame size");
  const std::size_t payload = static_cast<std::size_t>(w) * h * 3;
  std::size_t at = start + kFrameHeader;
  if (s.size() - at < payload + 4) return false;
  const auto tlen = static_cast<std::size_t>(get_le(s, at + payload, 4));
  if (s.size() - at - payload - 4 < tlen) return false;
  out.sequence = seq;
  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.rgb.assign(s.begin() + static_cast<std::ptrdiff_t>(at),
                 s.begin() + static_cast<std::ptrdiff_t>(at + payload));
  at += payload + 4;
  if (tlen == 0) {
    out.trailer = nullptr;
  } else {
    try {
      out.trailer = json::parse(s.begin() + static_cast<std::ptrdiff_t>(at),
                                s.begin() + static_cast<std::ptrdiff_t>(at + tlen));
    } catch (const json::parse_error& e) {
      throw ParseError("<frame stream>", static_cast<std::int64_t>(at + e.byte), "malformed trailer JSON");
    }
  }
  offset = at + tlen;
  return true;
}

std::vector<FrameMessage> decode_frames(const Bytes& stream) {
  std::vector<FrameMessage> frames;
  std::size_t offset = 0;
  FrameMessage f;
  while (decode_frame(stream, offset, f)) frames.push_back(f);
  if (offset != stream.size())
    throw ParseError("<frame stream>", static_cast<std::int64_t>(offset), "truncated frame");
  return frames;
}

Camera puppet_camera(const PuppetState& state, const Vec3& target) {
  return orbit_camera(target, state.distance, state.yaw, state.pitch, state.width, state.height, 30.0);
}

FrameMessage render_puppet_frame(AvatarRuntime& runtime, const PuppetState& state, const Vec3& target) {
  runtime.set_band_width(state.band_width);
  runtime.set_grid_step(state.grid_step, state.roi_grid_step);
  const RenderedFrame& f = runtime.render(state.weights, puppet_camera(state, target));
  FrameMessage msg;
  msg.sequence = state.sequence;
  msg.width = state.width;
  msg.height = state.height;
  msg.rgb = encode_rgb8(f.target.color);
  msg.trailer = timings_to_json(f.timings);
  return msg;
}

struct PuppetService::Impl {
  AvatarBundle bundle;
  ServiceOptions options;
  PuppetLimits limits;
  Vec3 target;
  std::unique_ptr<AvatarRuntime> runtime;
  httplib::Server server;

  mutable std::mutex mu;
  mutable std::condition_variable state_cv;
  mutable std::condition_variable frame_cv;
  PuppetState state;
  ServiceCounters counters;
  std::shared_ptr<const Bytes> frame;
  std::int64_t frame_sequence = -1;
  bool stopping = false;
  bool started = false;

  std::thread render_thread;
  std::thread server_thread;

  void render_loop() {
    std::int64_t rendered = -1;
    for (;;) {
      PuppetState snapshot;
      {
        std::unique_lock lock(mu);
        state_cv.wait(lock, [&] { return stopping || static_cast<std::int64_t>(state.sequence) > rendered; });
        if (stopping) return;
        snapshot = state;
        if (rendered >= 0)
          counters.sequences_skipped += snapshot.sequence - static_cast<std::uint64_t>(rendered) - 1;
      }
      std::shared_ptr<const Bytes> bytes;
      try {
        bytes = std::make_shared<const Bytes>(encode_frame(render_puppet_frame(*runtime, snapshot, target)));
      } catch (const std::exception& e) {
        std::fprintf(stderr, "render of sequence %llu failed: %s\n",
                     static_cast<unsigned long long>(snapshot.sequence), e.what());
      }
      rendered = static_cast<std::int64_t>(snapshot.sequence);
      if (!bytes) continue;
      {
        std::lock_guard lock(mu);
        frame = std::move(bytes);
        frame_sequence = rendered;
        ++counters.frames_rendered;
      }
      frame_cv.notify_all();
    }
  }
};

PuppetService::PuppetService(AvatarBundle bundle, ServiceOptions options)
    : impl_(std::make_unique<Impl>()) {
  Impl& s = *impl_;
  s.bundle = std::move(bundle);
  s.options = options;
  const BundleManifest& m = s.bundle.manifest;
  s.limits.blendshapes = s.bundle.assets->blendshape_names();
  s.limits.near = m.camera.near;
  s.limits.max_band_width = std::min(m.face_roi.width, m.face_roi.height) / 2;
  s.limits.max_grid_step = s.bundle.assets->static_atlas.width() / 2;
  s.limits.max_roi_grid_step = std::min(m.face_roi.width, m.face_roi.height) - 1;
  s.target = Vec3(0.0, -0.02, 0.0);

  s.state.band_width = m.band_width;
  s.state.grid_step = m.grid_step;
  s.state.roi_grid_step = m.roi_grid_step;
  s.state.width = options.width > 0 ? options.width : m.camera.width;
  s.state.height = options.height > 0 ? options.height : m.camera.height;
  s.state.distance = (m.camera.position() - s.target).norm();

  RuntimeConfig rc;
  rc.grid_step = m.grid_step;
  rc.roi_grid_step = m.roi_grid_step;
  rc.band_width = m.band_width;
  rc.threads = options.threads;
  s.runtime = std::make_unique<AvatarRuntime>(s.bundle.assets, rc);

  s.server.Get("/meta", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(meta().dump(), "application/json");
  });
  s.server.Post("/state", [this](const httplib::Request& req, httplib::Response& res) {
    json patch;
    try {
      patch = json::parse(req.body);
    } catch (const json::parse_error& e) {
      {
        std::lock_guard lock(impl_->mu);
        ++impl_->counters.patches_rejected;
      }
      res.status = 400;
      res.set_content(json{{"error", std::string("malformed JSON: ") + e.what()}, {"fields", json::array()}}.dump(),
                      "application/json");
      return;
    }
    try {
      res.set_content(post_state(patch).to_json().dump(), "application/json");
    } catch (const PatchError& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}, {"fields", e.fields()}}.dump(), "application/json");
    }
  });
  s.server.Get("/frames", [this](const httplib::Request& req, httplib::Response& res) {
    struct Cursor {
      std::int64_t after = -1;
      std::int64_t remaining = -1;
    };
    auto cursor = std::make_shared<Cursor>();
    try {
      if (req.has_param("after")) cursor->after = std::stoll(req.get_param_value("after"));
      if (req.has_param("max")) cursor->remaining = std::stoll(req.get_param_value("max"));
    } catch (const std::exception&) {
      res.status = 400;
      res.set_content(json{{"error", "after and max must be integers"}, {"fields", {"after", "max"}}}.dump(),
                      "application/json");
      return;
    }
    res.set_header("Cache-Control", "no-store");
    res.set_chunked_content_provider(
        "application/octet-stream", [this, cursor](std::size_t, httplib::DataSink& sink) {
          if (cursor->remaining == 0) {
            sink.done();
            return true;
          }
          std::uint64_t seq = 0;
          auto bytes = wait_frame(cursor->after, 250, &seq);
          if (!bytes) {
            bool stopping;
            {
              std::lock_guard lock(impl_->mu);
              stopping = impl_->stopping;
            }
            if (stopping) {
              sink.done();
              return true;
            }
            return sink.is_writable();
          }
          if (!sink.write(reinterpret_cast<const char*>(bytes->data()), bytes->size())) return false;
          cursor->after = static_cast<std::int64_t>(seq);
          if (cursor->remaining > 0) --cursor->remaining;
          return true;
        });
  });
}

PuppetService::~PuppetService() { stop(); }

int PuppetService::start() {
  Impl& s = *impl_;
  if (s.started) throw Error("service already started");
  int port = s.options.port;
  if (port == 0) {
    port = s.server.bind_to_any_port(s.options.host);
    if (port < 0) throw Error("failed to bind " + s.options.host);
  } else if (!s.server.bind_to_port(s.options.host, port)) {
    throw Error("failed to bind " + s.options.host + ":" + std::to_string(port));
  }
  s.started = true;
  s.render_thread = std::thread([&s] { s.render_loop(); });
  s.server_thread = std::thread([&s] { s.server.listen_after_bind(); });
  s.server.wait_until_ready();
  return port;
}

void PuppetService::stop() {
  Impl& s = *impl_;
  {
    std::lock_guard lock(s.mu);
    if (s.stopping) return;
    s.stopping = true;
  }
  s.state_cv.notify_all();
  s.frame_cv.notify_all();
  if (s.started) s.server.stop();
  if (s.server_thread.joinable()) s.server_thread.join();
  if (s.render_thread.joinable()) s.render_thread.join();
}

void PuppetService::wait() {
  std::unique_lock lock(impl_->mu);
  impl_->frame_cv.wait(lock, [&] { return impl_->stopping; });
}

PuppetState PuppetService::state() const {
  std::lock_guard lock(impl_->mu);
  return impl_->state;
}

PuppetState PuppetService::post_state(const json& patch) {
  Impl& s = *impl_;
  std::unique_lock lock(s.mu);
  try {
    s.state = apply_update(s.state, patch, s.limits);
  } catch (const PatchError&) {
    ++s.counters.patches_rejected;
    throw;
  }
  ++s.counters.patches_applied;
  const PuppetState out = s.state;
  lock.unlock();
  s.state_cv.notify_all();
  return out;
}

ServiceCounters PuppetService::counters() const {
  std::lock_guard lock(impl_->mu);
  return impl_->counters;
}

json PuppetService::meta() const {
  const Impl& s = *impl_;
  const BundleManifest& m = s.bundle.manifest;
  json shapes = json::array();
  for (const auto& name : s.limits.blendshapes) shapes.push_back(name);
  json stages = json::array();
  for (const char* n : kStageNames) stages.push_back(n);
  std::lock_guard lock(s.mu);
  return {{"name", m.name},
          {"schema_version", m.schema_version},
          {"atlas_size", s.bundle.assets->static_atlas.width()},
          {"face_roi", rect_to_json(m.face_roi)},
          {"blendshapes", shapes},
          {"render", {{"width", s.state.width}, {"height", s.state.height}}},
          {"limits",
           {{"near", s.limits.near},
            {"max_band_width", s.limits.max_band_width},
            {"max_grid_step", s.limits.max_grid_step},
            {"max_roi_grid_step", s.limits.max_roi_grid_step},
            {"max_resolution", s.limits.max_resolution}}},
          {"stages", stages},
          {"frame_format", "FRME"},
          {"state", s.state.to_json()},
          {"last_frame_sequence", s.frame_sequence},
          {"counters",
           {{"frames_rendered", s.counters.frames_rendered},
            {"sequences_skipped", s.counters.sequences_skipped},
            {"patches_applied", s.counters.patches_applied},
            {"patches_rejected", s.counters.patches_rejected}}}};
}

std::shared_ptr<const Bytes> PuppetService::wait_frame(std::int64_t after, int timeout_ms,
                                                       std::uint64_t* sequence) const {
  std::unique_lock lock(impl_->mu);
  const bool ready = impl_->frame_cv.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] {
    return impl_->stopping || (impl_->frame && impl_->frame_sequence > after);
  });
  if (!ready || !impl_->frame || impl_->frame_sequence <= after) return nullptr;
  if (sequence) *sequence = static_cast<std::uint64_t>(impl_->frame_sequence);
  return impl_->frame;
}

}  // namespace headsplat
