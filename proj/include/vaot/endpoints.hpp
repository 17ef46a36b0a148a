#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "vaot/morphology.hpp"

namespace vaot {

// Ordered (row, col) skeleton endpoints; row-major, no duplicates.
struct EndpointSet {
  enum class Source { Input, Enhanced, Union };
  std::vector<std::pair<int, int>> points;
  Source source = Source::Union;

  int size() const { return static_cast<int>(points.size()); }
  bool empty() const { return points.empty(); }
};

// A skeleton pixel is an endpoint iff its 8-connected neighborhood contains
// 0 or 1 other skeleton pixels.
EndpointSet detect_endpoints(const BinaryMask& skel);

// Top-left corner of the l x l window nominally centered at `center`, clamped
// so the window lies fully in-bounds. Throws ConfigError if l > min(H, W).
std::pair<int, int> clamp_window(std::pair<int, int> center, int l, int h, int w);

class Segmenter;  // nets.hpp

// Endpoint anchors for the EVP loss: union of endpoints detected on the
// hard skeletons of binarize(S(x), tau) and binarize(S(xhat), tau),
// deduplicated row-major; if more than m_max survive, a seeded uniform
// subsample is kept (re-sorted row-major).
EndpointSet anchor_pipeline(const Grid& x, const Grid& xhat, const Segmenter& seg, int k,
                            double tau, int m_max, std::uint64_t seed);

// Deduplicate + sort row-major; shared by anchor_pipeline and tests.
EndpointSet merge_endpoints(const EndpointSet& a, const EndpointSet& b);
EndpointSet subsample_endpoints(const EndpointSet& s, int m_max, std::uint64_t seed);

}  // namespace vaot
