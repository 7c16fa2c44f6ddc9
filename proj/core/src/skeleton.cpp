#include "causalpose/skeleton.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "causalpose/errors.hpp"
#include "causalpose/kvconfig.hpp"

namespace causalpose {

SkeletonSpec SkeletonSpec::make(int k, std::vector<std::string> names,
                                std::vector<std::pair<int, int>> edges,
                                std::vector<Hyperedge> hyperedges) {
  SkeletonSpec s;
  s.k = k;
  s.names = std::move(names);
  for (auto [a, b] : edges) {
    if (a > b) std::swap(a, b);
    s.edges.emplace_back(a, b);
  }
  std::sort(s.edges.begin(), s.edges.end());
  s.edges.erase(std::unique(s.edges.begin(), s.edges.end()), s.edges.end());
  for (auto& h : hyperedges) {
    std::sort(h.members.begin(), h.members.end());
    h.members.erase(std::unique(h.members.begin(), h.members.end()), h.members.end());
    s.hyperedges.push_back(std::move(h));
  }
  s.groups_of.assign(static_cast<size_t>(std::max(k, 0)), {});
  for (size_t g = 0; g < s.hyperedges.size(); ++g) {
    for (int m : s.hyperedges[g].members) {
      if (m >= 0 && m < k) s.groups_of[static_cast<size_t>(m)].push_back(static_cast<int>(g));
    }
  }
  return s;
}

std::vector<int> SkeletonSpec::neighbors(int kp) const {
  if (kp < 0 || kp >= k) {
    throw DataError("neighbors: keypoint index " + std::to_string(kp) + " out of range [0," +
                    std::to_string(k) + ")");
  }
  std::vector<int> out;
  for (auto [a, b] : edges) {
    if (a == kp) out.push_back(b);
    if (b == kp) out.push_back(a);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> SkeletonSpec::validate() const {
  std::vector<std::string> violations;
  if (k < 1) violations.push_back("keypoint count must be positive");
  if (static_cast<int>(names.size()) != k) {
    violations.push_back("expected " + std::to_string(k) + " names, got " +
                         std::to_string(names.size()));
  }
  {
    std::set<std::string> uniq(names.begin(), names.end());
    if (uniq.size() != names.size()) violations.push_back("keypoint names must be unique");
  }
  for (auto [a, b] : edges) {
    if (a < 0 || a >= k || b < 0 || b >= k) {
      violations.push_back("edge (" + std::to_string(a) + "," + std::to_string(b) +
                           ") index out of range");
    } else if (a == b) {
      violations.push_back("self-loop edge at keypoint " + std::to_string(a));
    }
  }
  for (const auto& h : hyperedges) {
    for (int m : h.members) {
      if (m < 0 || m >= k) {
        violations.push_back("hyperedge `" + h.name + "` member " + std::to_string(m) +
                             " out of range");
      }
    }
    if (h.members.empty()) violations.push_back("hyperedge `" + h.name + "` is empty");
  }
  for (int i = 0; i < k; ++i) {
    if (i < static_cast<int>(groups_of.size()) && groups_of[static_cast<size_t>(i)].empty()) {
      violations.push_back("uncovered keypoint " + std::to_string(i) +
                           " belongs to no hyperedge");
    }
  }
  // connectivity over the physical edges
  if (k > 0 && violations.empty()) {
    std::vector<bool> seen(static_cast<size_t>(k), false);
    std::vector<int> stack{0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
      int cur = stack.back();
      stack.pop_back();
      for (int nb : neighbors(cur)) {
        if (!seen[static_cast<size_t>(nb)]) {
          seen[static_cast<size_t>(nb)] = true;
          ++count;
          stack.push_back(nb);
        }
      }
    }
    if (count != k) violations.push_back("edge graph is not connected");
  }
  return violations;
}

std::string SkeletonSpec::canonical_form() const {
  std::ostringstream os;
  std::vector<std::string> sorted_names = names;
  std::sort(sorted_names.begin(), sorted_names.end());
  os << "k=" << k << ";names=";
  for (const auto& n : sorted_names) os << n << ",";
  std::vector<std::string> edge_strs;
  for (auto [a, b] : edges) {
    std::string na = names[static_cast<size_t>(a)];
    std::string nb = names[static_cast<size_t>(b)];
    if (nb < na) std::swap(na, nb);
    edge_strs.push_back(na + "-" + nb);
  }
  std::sort(edge_strs.begin(), edge_strs.end());
  os << ";edges=";
  for (const auto& e : edge_strs) os << e << ",";
  std::vector<std::string> hyper_strs;
  for (const auto& h : hyperedges) {
    std::vector<std::string> ms;
    for (int m : h.members) ms.push_back(names[static_cast<size_t>(m)]);
    std::sort(ms.begin(), ms.end());
    std::string s = h.name + ":";
    for (const auto& m : ms) s += m + "+";
    hyper_strs.push_back(s);
  }
  std::sort(hyper_strs.begin(), hyper_strs.end());
  os << ";hyper=";
  for (const auto& h : hyper_strs) os << h << ",";
  return os.str();
}

std::string SkeletonSpec::serialize() const {
  std::ostringstream os;
  os << "k = " << k << "\n";
  os << "names =";
  for (const auto& n : names) os << " " << n;
  os << "\n";
  for (auto [a, b] : edges) os << "edge = " << a << " " << b << "\n";
  for (const auto& h : hyperedges) {
    os << "hyperedge = " << h.name << " :";
    for (int m : h.members) os << " " << m;
    os << "\n";
  }
  return os.str();
}

SkeletonSpec SkeletonSpec::load_file(const std::string& path) {
  KvConfig cfg = KvConfig::parse_file(path);
  int k = static_cast<int>(cfg.get_int("k"));
  std::vector<std::string> names = cfg.get_tokens("names");
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : cfg.get_all("edge")) {
    std::istringstream in(e);
    int a, b;
    if (!(in >> a >> b)) throw DataError("skeleton file: bad edge line: " + e);
    edges.emplace_back(a, b);
  }
  std::vector<SkeletonSpec::Hyperedge> hyper;
  for (const auto& h : cfg.get_all("hyperedge")) {
    std::istringstream in(h);
    SkeletonSpec::Hyperedge he;
    if (!(in >> he.name)) throw DataError("skeleton file: bad hyperedge line: " + h);
    std::string tok;
    while (in >> tok) {
      if (tok == ":") continue;
      try {
        he.members.push_back(std::stoi(tok));
      } catch (const std::exception&) {
        throw DataError("skeleton file: bad hyperedge member `" + tok + "` in: " + h);
      }
    }
    hyper.push_back(std::move(he));
  }
  SkeletonSpec spec = make(k, std::move(names), std::move(edges), std::move(hyper));
  auto violations = spec.validate();
  if (!violations.empty()) {
    std::string msg = "skeleton file " + path + " invalid:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw DataError(msg);
  }
  return spec;
}

SkeletonSpec SkeletonSpec::builtin(const std::string& name) {
  if (name == "toy8") {
    // Smallest skeleton that exercises multi-group membership: neck sits in
    // head+torso, shoulders in arms+torso.
    return make(8,
                {"head", "neck", "l_shoulder", "r_shoulder", "l_hand", "r_hand", "l_foot",
                 "r_foot"},
                {{0, 1}, {1, 2}, {1, 3}, {2, 4}, {3, 5}, {1, 6}, {1, 7}},
                {{"head", {0, 1}}, {"arms", {2, 3, 4, 5}}, {"legs", {6, 7}}, {"torso", {1, 2, 3}}});
  }
  throw ConfigError("unknown builtin skeleton: " + name);
}

}  // namespace causalpose
