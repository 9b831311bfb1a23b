#include "mpl/skeleton.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace mpl {

i64 KeypointFormat::index_of(const std::string& n) const {
  for (size_t i = 0; i < names.size(); ++i) {
    if (names[i] == n) return i64(i);
  }
  return -1;
}

void KeypointFormat::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) {
      raise(Err::config_error, "duplicate keypoint name '" + n + "'");
    }
  }
  for (const auto& c : composites) {
    for (const auto& src : c.sources) {
      if (!seen.count(src)) {
        raise(Err::missing_source, src);
      }
    }
    if (c.sources.empty()) {
      raise(Err::config_error, "composite '" + c.name + "' has no sources");
    }
    if (!seen.insert(c.name).second) {
      raise(Err::config_error,
            "composite '" + c.name + "' collides with an existing keypoint");
    }
  }
  for (i64 idx : kp_star) {
    if (idx < 0 || idx >= joint_count()) {
      raise(Err::config_error,
            strfmt("kp_star index %lld outside [0, %lld)", (long long)idx,
                   (long long)joint_count()));
    }
  }
}

std::vector<std::string> KeypointFormat::extended_names() const {
  std::vector<std::string> out = names;
  for (const auto& c : composites) out.push_back(c.name);
  return out;
}

KeypointFormat builtin_coco17() {
  KeypointFormat fmt;
  fmt.names = {"nose",           "left_eye",      "right_eye",
               "left_ear",       "right_ear",     "left_shoulder",
               "right_shoulder", "left_elbow",    "right_elbow",
               "left_wrist",     "right_wrist",   "left_hip",
               "right_hip",      "left_knee",     "right_knee",
               "left_ankle",     "right_ankle"};
  fmt.composites = {
      {"pelvis", {"left_hip", "right_hip"}},
      {"neck", {"left_shoulder", "right_shoulder"}},
      {"torso", {"neck", "pelvis"}},
      {"head", {"left_ear", "right_ear", "left_eye", "right_eye"}},
  };
  fmt.kp_star = {5, 6, 7, 8, 9, 10, 13, 14, 15, 16};
  fmt.validate();
  return fmt;
}

namespace {

// Index lookup over base + already-appended composite names.
std::unordered_map<std::string, size_t> name_index(
    const KeypointFormat& fmt) {
  std::unordered_map<std::string, size_t> idx;
  for (size_t i = 0; i < fmt.names.size(); ++i) idx[fmt.names[i]] = i;
  return idx;
}

}  // namespace

Skeleton2D composite_keypoints(const Skeleton2D& skel,
                               const KeypointFormat& fmt) {
  if (skel.joint_count() < fmt.joint_count()) {
    raise(Err::shape_mismatch,
          strfmt("skeleton has %lld joints, format expects at least %lld",
                 (long long)skel.joint_count(), (long long)fmt.joint_count()));
  }
  auto idx = name_index(fmt);
  Skeleton2D out = skel;
  for (const auto& c : fmt.composites) {
    double u = 0, v = 0;
    bool vis = true;
    for (const auto& src : c.sources) {
      auto it = idx.find(src);
      if (it == idx.end()) raise(Err::missing_source, src);
      u += out.joints[it->second].u;
      v += out.joints[it->second].v;
      vis = vis && out.visible[it->second];
    }
    const double n = double(c.sources.size());
    idx[c.name] = out.joints.size();
    out.joints.push_back({u / n, v / n});
    out.visible.push_back(vis ? 1 : 0);
  }
  return out;
}

Skeleton3D composite_keypoints(const Skeleton3D& skel,
                               const KeypointFormat& fmt) {
  if (skel.joint_count() < fmt.joint_count()) {
    raise(Err::shape_mismatch,
          strfmt("skeleton has %lld joints, format expects at least %lld",
                 (long long)skel.joint_count(), (long long)fmt.joint_count()));
  }
  auto idx = name_index(fmt);
  Skeleton3D out = skel;
  for (const auto& c : fmt.composites) {
    Vec3 acc{};
    for (const auto& src : c.sources) {
      auto it = idx.find(src);
      if (it == idx.end()) raise(Err::missing_source, src);
      acc = acc + out.joints[it->second];
    }
    idx[c.name] = out.joints.size();
    out.joints.push_back(acc * (1.0 / double(c.sources.size())));
  }
  return out;
}

std::vector<uint8_t> kp_star_mask(const KeypointFormat& fmt) {
  std::vector<uint8_t> mask(static_cast<size_t>(fmt.joint_count()), 0);
  for (i64 idx : fmt.kp_star) mask[size_t(idx)] = 1;
  return mask;
}

std::vector<std::pair<i64, i64>> bilateral_pairs(const KeypointFormat& fmt) {
  std::vector<std::pair<i64, i64>> pairs;
  for (size_t i = 0; i < fmt.names.size(); ++i) {
    const std::string& n = fmt.names[i];
    if (n.rfind("left_", 0) == 0) {
      const i64 r = fmt.index_of("right_" + n.substr(5));
      if (r >= 0) pairs.emplace_back(i64(i), r);
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

}  // namespace mpl
