#pragma once

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "headsplat/bundle.hpp"
#include "headsplat/io.hpp"
#include "headsplat/runtime.hpp"

namespace headsplat {

struct PuppetState {
  ExpressionWeights weights;
  double yaw = 0.0;    // degrees
  double pitch = 0.0;  // degrees
  double distance = 0.6;
  int band_width = 16;
  int grid_step = 4;
  int roi_grid_step = 2;
  int width = 256;
  int height = 256;
  std::uint64_t sequence = 0;

  nlohmann::json to_json() const;
  /// Equal in every field except the sequence number.
  bool same_content(const PuppetState& o) const;
};

/// Bounds a patch is validated against.
struct PuppetLimits {
  std::vector<std::string> blendshapes;
  double near = 0.01;
  int max_band_width = 64;
  int max_grid_step = 64;
  int max_roi_grid_step = 64;
  int max_resolution = 2048;
};

/// Rejected patch; `fields()` lists every offending field path.
class PatchError : public ValidationError {
 public:
  PatchError(const std::string& what, std::vector<std::string> fields)
      : ValidationError(what), fields_(std::move(fields)) {}
  const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

/// Merges `patch` into `state` (last writer wins, weight maps merged per
/// name) and increments the sequence. Patch schema:
///   {"weights": {name: w}, "camera": {"yaw", "pitch", "distance"},
///    "band_width", "grid_step", "roi_grid_step",
///    "resolution": {"width", "height"}}
/// An empty patch returns `state` unchanged. Any invalid field rejects the
/// whole patch with PatchError.
PuppetState apply_update(const PuppetState& state, const nlohmann::json& patch,
                         const PuppetLimits& limits);

/// One message of the frame stream: "FRME", u64 sequence, u32 width,
/// u32 height, width*height*3 RGB8 bytes, u32 trailer length, JSON trailer.
struct FrameMessage {
  std::uint64_t sequence = 0;
  int width = 0;
  int height = 0;
  Bytes rgb;
  nlohmann::json trailer;
};

Bytes encode_frame(const FrameMessage& frame);
/// Decodes one message starting at `offset`; returns false (offset
/// untouched) when the buffer ends before the message does. Throws
/// ParseError on malformed data.
bool decode_frame(const Bytes& stream, std::size_t& offset, FrameMessage& out);
std::vector<FrameMessage> decode_frames(const Bytes& stream);

/// Camera for a puppet state: orbit around `target` with a 30 degree
/// vertical field of view.
Camera puppet_camera(const PuppetState& state, const Vec3& target);

/// Renders one frame for `state`; the same (runtime assets, state) always
/// yields the same header and payload bytes.
FrameMessage render_puppet_frame(AvatarRuntime& runtime, const PuppetState& state, const Vec3& target);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = any free port
  int threads = 0;
  int width = 0;    // 0 = bundle camera size
  int height = 0;
};

struct ServiceCounters {
  std::uint64_t frames_rendered = 0;
  std::uint64_t sequences_skipped = 0;
  std::uint64_t patches_applied = 0;
  std::uint64_t patches_rejected = 0;
};

/// HTTP service: GET /meta, POST /state, GET /frames (chunked FRME stream).
/// One renderer thread renders only when the state sequence advances and
/// always picks the newest state (intermediate sequences are skipped).
class PuppetService {
 public:
  PuppetService(AvatarBundle bundle, ServiceOptions options);
  ~PuppetService();
  PuppetService(const PuppetService&) = delete;
  PuppetService& operator=(const PuppetService&) = delete;

  /// Binds and starts serving in background threads; returns the bound port.
  /// Throws Error on bind failure.
  int start();
  void stop();
  /// Blocks until stop() is called.
  void wait();

  PuppetState state() const;
  /// Same as POST /state.
  PuppetState post_state(const nlohmann::json& patch);
  nlohmann::json meta() const;
  ServiceCounters counters() const;
  /// Newest encoded frame with sequence > `after` (or any frame when
  /// after < 0), waiting up to `timeout_ms`; nullptr on timeout or stop.
  std::shared_ptr<const Bytes> wait_frame(std::int64_t after, int timeout_ms,
                                          std::uint64_t* sequence = nullptr) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace headsplat
