#ifndef CAUSALPOSE_SKELETON_HPP
#define CAUSALPOSE_SKELETON_HPP

#include <string>
#include <utility>
#include <vector>

namespace causalpose {

// Static skeleton description: K keypoints, physical edges, and named
// semantic groups ("hyperedges"). Immutable once validated.
struct SkeletonSpec {
  int k = 0;
  std::vector<std::string> names;
  std::vector<std::pair<int, int>> edges;  // normalized: first < second, sorted, deduped
  struct Hyperedge {
    std::string name;
    std::vector<int> members;  // sorted, deduped
  };
  std::vector<Hyperedge> hyperedges;

  // groups containing keypoint k, in hyperedge declaration order
  std::vector<std::vector<int>> groups_of;

  static SkeletonSpec make(int k, std::vector<std::string> names,
                           std::vector<std::pair<int, int>> edges,
                           std::vector<Hyperedge> hyperedges);
  static SkeletonSpec load_file(const std::string& path);
  static SkeletonSpec builtin(const std::string& name);  // "toy8"

  std::vector<int> neighbors(int kp) const;
  std::vector<std::string> validate() const;  // empty when valid

  int group_count() const { return static_cast<int>(hyperedges.size()); }

  // Name-keyed canonical rendering; two specs that differ only by a
  // consistent relabeling of keypoint indices produce identical strings.
  std::string canonical_form() const;
  std::string serialize() const;
};

}  // namespace causalpose

#endif
