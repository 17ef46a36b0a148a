#include "vaot/endpoints.hpp"

#include <algorithm>

#include "vaot/error.hpp"
#include "vaot/nets.hpp"
#include "vaot/rng.hpp"

namespace vaot {

EndpointSet detect_endpoints(const BinaryMask& skel) {
  int h = static_cast<int>(skel.grid.rows()), w = static_cast<int>(skel.grid.cols());
  EndpointSet out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (skel.grid(y, x) == 0.0) continue;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          if (skel.grid(yy, xx) != 0.0) ++count;
        }
      }
      if (count <= 1) out.points.emplace_back(y, x);
    }
  }
  return out;
}

std::pair<int, int> clamp_window(std::pair<int, int> center, int l, int h, int w) {
  if (l > h || l > w)
    throw ConfigError("clamp_window: window side " + std::to_string(l) +
                      " exceeds image dims " + std::to_string(h) + "x" + std::to_string(w));
  int r0 = std::clamp(center.first - l / 2, 0, h - l);
  int c0 = std::clamp(center.second - l / 2, 0, w - l);
  return {r0, c0};
}

EndpointSet merge_endpoints(const EndpointSet& a, const EndpointSet& b) {
  EndpointSet out;
  out.points = a.points;
  out.points.insert(out.points.end(), b.points.begin(), b.points.end());
  std::sort(out.points.begin(), out.points.end());
  out.points.erase(std::unique(out.points.begin(), out.points.end()), out.points.end());
  return out;
}

EndpointSet subsample_endpoints(const EndpointSet& s, int m_max, std::uint64_t seed) {
  check(m_max >= 0, "subsample_endpoints: negative cap");
  if (s.size() <= m_max) return s;
  std::vector<int> idx(s.points.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  Rng rng = Rng::stream(seed, 0x616e63686f72ULL);  // "anchor"
  for (int i = 0; i < m_max; ++i) {
    int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(idx.size() - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m_max);
  std::sort(idx.begin(), idx.end());
  EndpointSet out;
  out.source = s.source;
  out.points.reserve(m_max);
  for (int i : idx) out.points.push_back(s.points[i]);
  return out;
}

EndpointSet anchor_pipeline(const Grid& x, const Grid& xhat, const Segmenter& seg, int k,
                            double tau, int m_max, std::uint64_t seed) {
  EndpointSet a = detect_endpoints(hard_skeletonize(binarize(seg.segment(x), tau), k));
  a.source = EndpointSet::Source::Input;
  EndpointSet b = detect_endpoints(hard_skeletonize(binarize(seg.segment(xhat), tau), k));
  b.source = EndpointSet::Source::Enhanced;
  EndpointSet u = merge_endpoints(a, b);
  u.source = EndpointSet::Source::Union;
  return subsample_endpoints(u, m_max, seed);
}

}  // namespace vaot
