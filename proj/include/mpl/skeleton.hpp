#pragma once

#include <string>
#include <vector>

#include "mpl/skeleton_types.hpp"

namespace mpl {

// Keypoint vocabulary plus the mapping machinery between the 2D estimator's
// format and evaluation formats: composite (averaged) keypoints and the
// subset of indices whose definitions agree across formats.
struct KeypointFormat {
  struct Composite {
    std::string name;
    std::vector<std::string> sources;
  };

  std::vector<std::string> names;
  std::vector<Composite> composites;
  std::vector<i64> kp_star;

  i64 joint_count() const { return i64(names.size()); }
  i64 index_of(const std::string& name) const;  // -1 when absent

  // ConfigError on duplicate names, out-of-range kp_star indices, or a
  // composite source that is neither a base name nor an earlier composite.
  void validate() const;

  // Base names followed by composite names in declaration order.
  std::vector<std::string> extended_names() const;
};

// The 17-keypoint estimator format, with the standard averaged keypoints
// (pelvis, neck, torso, head) and the bilateral subset whose definitions are
// stable across formats (shoulders, elbows, wrists, knees, ankles).
KeypointFormat builtin_coco17();

// Appends one joint per composite rule, each the arithmetic mean of its
// sources. Rules are evaluated in declaration order, so later rules may
// reference earlier composites. MissingSource names the absent keypoint.
Skeleton2D composite_keypoints(const Skeleton2D& skel,
                               const KeypointFormat& fmt);
Skeleton3D composite_keypoints(const Skeleton3D& skel,
                               const KeypointFormat& fmt);

// Mask over the K base joints, true exactly on kp_star indices.
std::vector<uint8_t> kp_star_mask(const KeypointFormat& fmt);

// Bilateral (left_*/right_*) index pairs, used by the synthetic noise model's
// swap corruption. Pairs are ordered by the left joint's index.
std::vector<std::pair<i64, i64>> bilateral_pairs(const KeypointFormat& fmt);

}  // namespace mpl
