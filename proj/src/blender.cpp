#include "headsplat/blender.hpp"

#include <chrono>

#include "headsplat/parallel.hpp"

namespace headsplat {

namespace {

using Clock = std::chrono::steady_clock;

double micros_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::micro>(Clock::now() - t0).count();
}

void check_region(const Rect& r, const Raster& full) {
  if (r.x < 0 || r.y < 0 || r.x + r.width > full.width() || r.y + r.height > full.height())
    throw ValidationError("fusion region lies outside the raster");
}

Raster embed_if_needed(const Raster& r, const Raster& like, const Rect& roi) {
  if (r.same_size(like)) return r;
  if (r.width() == roi.width && r.height() == roi.height)
    return embed_dynamic(Raster(like.width(), like.height(), r.channels(), 0.0), r, roi);
  throw ValidationError("raster is neither full-size nor roi-sized");
}

}  // namespace

void fuse_positions_region(const PositionMap& static_pos, const Raster& offset, const Raster& disp,
                           const BlendMasks& masks, const Rect& region, PositionMap& out) {
  if (!static_pos.same_shape(offset) || !static_pos.same_shape(disp) ||
      !static_pos.same_size(masks.face_mask) || !static_pos.same_shape(out) ||
      static_pos.channels() != 3)
    throw ValidationError("position fusion inputs have mismatched resolutions");
  check_region(region, static_pos);
  for (int y = region.y; y < region.y + region.height; ++y) {
    for (int x = region.x; x < region.x + region.width; ++x) {
      const double m = masks.face_mask.at(x, y, 0);
      for (int c = 0; c < 3; ++c) {
        const double s = static_pos.at(x, y, c);
        out.at(x, y, c) = m * (s + disp.at(x, y, c)) + (1 - m) * (s + offset.at(x, y, c));
      }
      out.set_valid(x, y, static_pos.valid(x, y));
    }
  }
}

PositionMap fuse_positions(const PositionMap& static_pos, const Raster& offset, const Raster& disp,
                           const BlendMasks& masks) {
  const Raster disp_full = embed_if_needed(disp, static_pos, masks.face_roi);
  PositionMap out(static_pos.width(), static_pos.height(), 3);
  fuse_positions_region(static_pos, offset, disp_full, masks, static_pos.bounds(), out);
  return out;
}

void fuse_attributes_region(const AttributeAtlas& static_atlas, const AttributeAtlas& dynamic_full,
                            const BlendMasks& masks, const Rect& region, AttributeAtlas& out,
                            const FusionOptions& opts) {
  if (!static_atlas.activated() || !dynamic_full.activated())
    throw ValidationError("attribute fusion requires activated atlases");
  if (!static_atlas.data.same_shape(dynamic_full.data) || !static_atlas.data.same_shape(out.data) ||
      !static_atlas.data.same_size(masks.face_mask) || !static_atlas.data.same_size(masks.soft_mask))
    throw ValidationError("attribute fusion inputs have mismatched resolutions");
  check_region(region, static_atlas.data);
  using namespace channel;
  for (int y = region.y; y < region.y + region.height; ++y) {
    for (int x = region.x; x < region.x + region.width; ++x) {
      const double hard = masks.face_mask.at(x, y, 0);
      const double soft = masks.soft_mask.at(x, y, 0);
      const auto s = static_atlas.data.texel(x, y);
      const auto d = dynamic_full.data.texel(x, y);
      auto o = out.data.texel(x, y);
      for (int c = kColor; c < kColor + 3; ++c) o[c] = soft * d[c] + (1 - soft) * s[c];
      const double mo = opts.soft_opacity ? soft : hard;
      o[kOpacity] = mo * d[kOpacity] + (1 - mo) * s[kOpacity];
      for (int c = kRotation; c < kScale + 3; ++c) o[c] = hard * d[c] + (1 - hard) * s[c];
      for (int c = kOffset; c < kOffset + 3; ++c) o[c] = s[c];
      out.data.set_valid(x, y, hard > 0.5 ? dynamic_full.data.valid(x, y) : static_atlas.data.valid(x, y));
    }
  }
  out.state = AtlasState::Activated;
}

AttributeAtlas fuse_attributes(const AttributeAtlas& static_atlas,
                               const AttributeAtlas& dynamic_atlas, const BlendMasks& masks,
                               const FusionOptions& opts) {
  if (!static_atlas.activated() || !dynamic_atlas.activated())
    throw ValidationError("attribute fusion requires activated atlases");
  AttributeAtlas dyn_full = dynamic_atlas;
  if (!dynamic_atlas.data.same_size(static_atlas.data)) {
    AttributeAtlas base(static_atlas.width(), static_atlas.height(), AtlasOrigin::Dynamic,
                        AtlasState::Activated);
    dyn_full = embed_dynamic(base, dynamic_atlas, masks.face_roi);
  }
  AttributeAtlas out(static_atlas.width(), static_atlas.height(), AtlasOrigin::Static,
                     AtlasState::Activated);
  fuse_attributes_region(static_atlas, dyn_full, masks, static_atlas.data.bounds(), out, opts);
  return out;
}

void AvatarAssets::validate() const {
  if (static_atlas.data.channels() != channel::kCount ||
      dynamic_atlas.data.channels() != channel::kCount)
    throw ValidationError("atlases must have 14 channels");
  if (!static_atlas.data.same_size(static_position) || static_position.channels() != 3)
    throw ValidationError("static position map does not match the static atlas");
  if (!offset.same_shape(static_position)) throw ValidationError("offset map resolution mismatch");
  if (face_roi.x < 0 || face_roi.y < 0 || face_roi.x + face_roi.width > static_atlas.width() ||
      face_roi.y + face_roi.height > static_atlas.height())
    throw ValidationError("face roi lies outside the static atlas");
  if (dynamic_atlas.width() != face_roi.width || dynamic_atlas.height() != face_roi.height)
    throw ValidationError("dynamic atlas does not match the face roi");
  for (const auto& b : blendshapes) {
    if (b.displacement.width() != face_roi.width || b.displacement.height() != face_roi.height ||
        b.displacement.channels() != 3)
      throw ValidationError("blendshape '" + b.name + "' does not match the face roi");
  }
}

std::vector<std::string> AvatarAssets::blendshape_names() const {
  std::vector<std::string> names;
  for (const auto& b : blendshapes) names.push_back(b.name);
  return names;
}

void validate_weights(const AvatarAssets& assets, const ExpressionWeights& weights) {
  for (const auto& [name, w] : weights) {
    bool known = false;
    for (const auto& b : assets.blendshapes) known |= b.name == name;
    if (!known) throw ValidationError("unknown blendshape '" + name + "'");
    if (!(w >= 0.0 && w <= 1.0))
      throw ValidationError("weight for '" + name + "' outside [0,1]");
  }
}

FrameBuilder::FrameBuilder(std::shared_ptr<const AvatarAssets> assets, BlendMasks masks,
                           CachePolicy policy, FusionOptions opts, int threads)
    : assets_(std::move(assets)), masks_(std::move(masks)), policy_(policy), opts_(opts),
      threads_(threads) {
  assets_->validate();
  if (!(masks_.face_roi == assets_->face_roi))
    throw ValidationError("blend masks were built for a different face roi");
  if (!masks_.face_mask.same_size(assets_->static_atlas.data))
    throw ValidationError("blend masks do not match the static atlas");
  const int w = assets_->static_atlas.width();
  const int h = assets_->static_atlas.height();
  // The per-frame path only touches the roi, so the face mask may not extend past it.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!masks_.face_roi.contains(x, y) &&
          (masks_.face_mask.at(x, y, 0) != 0.0 || masks_.soft_mask.at(x, y, 0) != 0.0))
        throw ValidationError("face mask extends outside the face roi");
  dynamic_full_ = AttributeAtlas(w, h, AtlasOrigin::Dynamic, AtlasState::Activated);
  disp_full_ = Raster(w, h, 3, 0.0);
  frame_.positions = PositionMap(w, h, 3);
  frame_.atlas = AttributeAtlas(w, h, AtlasOrigin::Static, AtlasState::Activated);
  if (policy_ == CachePolicy::Cached) build_static();
}

void FrameBuilder::build_static() {
  const auto& a = *assets_;
  static_activated_ = activate_atlas(a.static_atlas);
  // Everything outside the roi is expression independent: fuse it once with
  // zero displacement and the (empty outside the roi) dynamic layer.
  fuse_attributes_region(static_activated_, dynamic_full_, masks_, static_activated_.data.bounds(),
                         frame_.atlas, opts_);
  fuse_positions_region(a.static_position, a.offset, disp_full_, masks_, a.static_position.bounds(),
                        frame_.positions);
  ++static_builds_;
}

void FrameBuilder::set_masks(BlendMasks masks) {
  if (!(masks.face_roi == assets_->face_roi) || !masks.face_mask.same_size(assets_->static_atlas.data))
    throw ValidationError("blend masks do not match the avatar");
  masks_ = std::move(masks);
  if (policy_ == CachePolicy::Cached) {
    fuse_attributes_region(static_activated_, dynamic_full_, masks_,
                           static_activated_.data.bounds(), frame_.atlas, opts_);
  }
}

const FusedFrame& FrameBuilder::build(const ExpressionWeights& weights) {
  const auto& a = *assets_;
  validate_weights(a, weights);
  const Rect roi = a.face_roi;
  const auto t_frame = Clock::now();
  StageTimings timings;

  if (policy_ == CachePolicy::Recompute) build_static();

  // Dynamic branch: displacement for the current expression and the
  // activated dynamic layer, both confined to the roi.
  auto t0 = Clock::now();
  std::vector<WeightedBlendshape> shapes;
  for (const auto& b : a.blendshapes) {
    const auto it = weights.find(b.name);
    shapes.push_back({&b, it == weights.end() ? 0.0 : it->second});
  }
  const Raster zero_roi(roi.width, roi.height, 3, 0.0);
  const PositionMap disp_roi = apply_displacement(zero_roi, shapes, zero_roi.bounds());
  AttributeAtlas dyn_act = a.dynamic_atlas;
  activate_region(a.dynamic_atlas, a.dynamic_atlas.data.bounds(), dyn_act);
  for (int y = 0; y < roi.height; ++y) {
    for (int x = 0; x < roi.width; ++x) {
      auto src = dyn_act.data.texel(x, y);
      std::copy(src.begin(), src.end(), dynamic_full_.data.texel(roi.x + x, roi.y + y).begin());
      dynamic_full_.data.set_valid(roi.x + x, roi.y + y, dyn_act.data.valid(x, y));
      for (int c = 0; c < 3; ++c) disp_full_.at(roi.x + x, roi.y + y, c) = disp_roi.at(x, y, c);
    }
  }
  timings.dynamic_generation = micros_since(t0);

  t0 = Clock::now();
  const Rect region = policy_ == CachePolicy::Cached ? roi : a.static_atlas.data.bounds();
  fuse_attributes_region(static_activated_, dynamic_full_, masks_, region, frame_.atlas, opts_);
  timings.color_fusion = micros_since(t0);

  t0 = Clock::now();
  fuse_positions_region(a.static_position, a.offset, disp_full_, masks_, region, frame_.positions);
  timings.position_sampling = micros_since(t0);

  timings.total = micros_since(t_frame);
  frame_.timings = timings;
  return frame_;
}

}  // namespace headsplat
