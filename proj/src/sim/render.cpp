#include <algorithm>

#include "odyn/sim.hpp"

namespace odyn::sim {

Frames render(const WorldState& w, std::size_t width, std::size_t height) {
  Frames f;
  f.width = width;
  f.height = height;
  const std::size_t pixels = width * height;
  f.rgb.assign(pixels * 3, 0.0f);
  f.depth.assign(pixels, 0.0f);
  f.masks.assign(w.objects.size(), std::vector<std::uint8_t>(pixels, 0));

  std::vector<std::vector<Vec2>> polys;
  for (const auto& o : w.objects) polys.push_back(o.world_vertices());
  const double sx = w.container.width / static_cast<double>(width);
  const double sy = w.container.height / static_cast<double>(height);

  for (std::size_t j = 0; j < height; ++j) {
    for (std::size_t i = 0; i < width; ++i) {
      const Vec2 c{(static_cast<double>(i) + 0.5) * sx, (static_cast<double>(j) + 0.5) * sy};
      const std::size_t px = j * width + i;
      int owner = -1;
      double top = 0;
      for (std::size_t k = 0; k < polys.size(); ++k) {
        if (!point_in_polygon(c, polys[k])) continue;
        // Strictly taller wins, so equal heights keep the lower id.
        if (owner < 0 || w.objects[k].height > top) {
          owner = static_cast<int>(k);
          top = w.objects[k].height;
        }
      }
      std::array<double, 3> color = background_color;
      if (owner >= 0) {
        f.masks[static_cast<std::size_t>(owner)][px] = 1;
        color = shape(w.objects[static_cast<std::size_t>(owner)].shape_id).color;
      }
      if (length(c - w.pusher.position) <= w.pusher.radius && w.pusher.height > top) {
        top = w.pusher.height;
        color = pusher_color;
      }
      for (std::size_t ch = 0; ch < 3; ++ch) f.rgb[px * 3 + ch] = static_cast<float>(color[ch]);
      f.depth[px] = static_cast<float>(std::clamp(top / w.container.depth_scale, 0.0, 1.0));
    }
  }
  return f;
}

}  // namespace odyn::sim
