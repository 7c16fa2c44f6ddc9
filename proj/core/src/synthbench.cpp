#include "causalpose/synthbench.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "causalpose/errors.hpp"
#include "causalpose/kvconfig.hpp"
#include "causalpose/rng.hpp"

namespace causalpose {

namespace {
constexpr int kSignatureDim = 4;
constexpr double kTemplateLo = 0.15;
constexpr double kTemplateHi = 0.85;
constexpr double kTemplateMinSep = 0.25;
// sin/cos positional code per coordinate; the top frequency resolves a
// 1/32 cell so shallow heads can decode sharp bin distributions
constexpr int kFreqCount = 5;
constexpr double kFrequencies[kFreqCount] = {1.0, 2.0, 4.0, 8.0, 16.0};
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr uint32_t kDatasetMagic = 0x53445043;  // "CPDS"
constexpr uint32_t kDatasetVersion = 1;

void encode_coordinate(double v, double* out) {
  for (int j = 0; j < kFreqCount; ++j) {
    out[2 * j] = std::sin(kTwoPi * kFrequencies[j] * v);
    out[2 * j + 1] = std::cos(kTwoPi * kFrequencies[j] * v);
  }
}

uint64_t mode_tag(BenchMode m) { return m == BenchMode::Confounded ? 0x636f6eULL : 0x646563ULL; }

// planted cluster for a context; clusters and contexts share a count here
int planted_cluster(int context, int n_clusters) { return context % n_clusters; }

uint64_t fnv1a(const uint8_t* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  for (size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("dataset file: truncated read");
  return v;
}
}  // namespace

BenchConfig BenchConfig::from_file(const std::string& path) {
  KvConfig cfg = KvConfig::parse_file(path);
  BenchConfig b;
  b.n_samples = static_cast<int>(cfg.get_int("n_samples", b.n_samples));
  b.n_contexts = static_cast<int>(cfg.get_int("n_contexts", b.n_contexts));
  b.n_clusters = static_cast<int>(cfg.get_int("n_clusters", b.n_clusters));
  b.confound_strength = cfg.get_double("confound_strength", b.confound_strength);
  b.occlusion_rate = cfg.get_double("occlusion_rate", b.occlusion_rate);
  b.decoy_strength = cfg.get_double("decoy_strength", b.decoy_strength);
  b.noise_sigma = cfg.get_double("noise_sigma", b.noise_sigma);
  b.pose_sigma = cfg.get_double("pose_sigma", b.pose_sigma);
  b.shift_sigma = cfg.get_double("shift_sigma", b.shift_sigma);
  b.seed = static_cast<uint64_t>(cfg.get_int("seed", 1));
  b.skeleton = cfg.get_str("skeleton", b.skeleton);
  std::string mode = cfg.get_str("mode", "confounded");
  if (mode == "confounded") {
    b.mode = BenchMode::Confounded;
  } else if (mode == "decorrelated") {
    b.mode = BenchMode::Decorrelated;
  } else {
    throw ConfigError("bench config: mode must be confounded|decorrelated, got " + mode);
  }
  if (b.n_samples <= 0) throw ConfigError("bench config: n_samples must be positive");
  if (b.n_contexts < 2) throw ConfigError("bench config: need at least 2 contexts");
  if (b.n_clusters < 2 || b.n_clusters > b.n_contexts) {
    throw ConfigError("bench config: n_clusters must lie in [2, n_contexts]");
  }
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in01(b.confound_strength) || !in01(b.occlusion_rate)) {
    throw ConfigError("bench config: rates must lie in [0,1]");
  }
  return b;
}

std::string BenchConfig::serialize() const {
  std::ostringstream os;
  os.precision(17);
  os << "n_samples = " << n_samples << "\n";
  os << "n_contexts = " << n_contexts << "\n";
  os << "n_clusters = " << n_clusters << "\n";
  os << "confound_strength = " << confound_strength << "\n";
  os << "occlusion_rate = " << occlusion_rate << "\n";
  os << "decoy_strength = " << decoy_strength << "\n";
  os << "noise_sigma = " << noise_sigma << "\n";
  os << "pose_sigma = " << pose_sigma << "\n";
  os << "shift_sigma = " << shift_sigma << "\n";
  os << "mode = " << (mode == BenchMode::Confounded ? "confounded" : "decorrelated") << "\n";
  os << "seed = " << seed << "\n";
  os << "skeleton = " << skeleton << "\n";
  return os.str();
}

SkeletonSpec resolve_skeleton(const std::string& ref) {
  if (ref.rfind("builtin:", 0) == 0) return SkeletonSpec::builtin(ref.substr(8));
  return SkeletonSpec::load_file(ref);
}

int bench_feature_dim(const SkeletonSpec& spec) {
  return 2 * 2 * kFreqCount * spec.k + kSignatureDim;
}

BenchWorld bench_world(const BenchConfig& config, const SkeletonSpec& spec) {
  BenchWorld w;
  int t = config.n_clusters;
  // cluster templates: per keypoint, positions kept pairwise separated so
  // cluster identity stays resolvable at the benchmark's accuracy radius
  Rng rng(mix64(config.seed, 0x776f726cULL));
  w.templates.assign(static_cast<size_t>(t), Tensor({spec.k, 2}));
  for (int kp = 0; kp < spec.k; ++kp) {
    std::vector<std::pair<double, double>> placed;
    for (int c = 0; c < t; ++c) {
      double x = 0.0, y = 0.0;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        x = rng.uniform(kTemplateLo, kTemplateHi);
        y = rng.uniform(kTemplateLo, kTemplateHi);
        bool ok = true;
        for (auto [px, py] : placed) {
          double dx = x - px, dy = y - py;
          if (std::sqrt(dx * dx + dy * dy) < kTemplateMinSep) {
            ok = false;
            break;
          }
        }
        if (ok) break;
        if (attempt == 999) {
          throw ConfigError("bench world: cannot separate " + std::to_string(t) +
                            " cluster templates; reduce n_clusters");
        }
      }
      placed.emplace_back(x, y);
      w.templates[static_cast<size_t>(c)].at2(kp, 0) = x;
      w.templates[static_cast<size_t>(c)].at2(kp, 1) = y;
    }
  }
  w.signatures.assign(static_cast<size_t>(config.n_contexts), {});
  for (int c = 0; c < config.n_contexts; ++c) {
    Rng srng(mix64(config.seed, 0x736967ULL, static_cast<uint64_t>(c)));
    auto& sig = w.signatures[static_cast<size_t>(c)];
    sig.resize(kSignatureDim);
    for (double& v : sig) v = srng.normal();
  }
  return w;
}

Dataset generate_dataset(const BenchConfig& config) {
  Dataset ds;
  ds.config = config;
  ds.skeleton = resolve_skeleton(config.skeleton);
  auto violations = ds.skeleton.validate();
  if (!violations.empty()) throw DataError("generate_dataset: invalid skeleton " + violations[0]);
  ds.d_in = bench_feature_dim(ds.skeleton);
  BenchWorld world = bench_world(config, ds.skeleton);

  int k = ds.skeleton.k;
  int t = config.n_clusters;
  ds.samples.resize(static_cast<size_t>(config.n_samples));
  for (int i = 0; i < config.n_samples; ++i) {
    Rng rng(mix64(config.seed, mode_tag(config.mode), static_cast<uint64_t>(i)));
    PoseSample& s = ds.samples[static_cast<size_t>(i)];
    s.context_id = rng.uniform_int(config.n_contexts);
    if (config.mode == BenchMode::Confounded && rng.bernoulli(config.confound_strength)) {
      s.cluster_id = planted_cluster(s.context_id, t);
    } else {
      s.cluster_id = rng.uniform_int(t);
    }
    const Tensor& tmpl = world.templates[static_cast<size_t>(s.cluster_id)];
    double shift_x = rng.normal(0.0, config.shift_sigma);
    double shift_y = rng.normal(0.0, config.shift_sigma);

    s.gt_coords.resize(static_cast<size_t>(2 * k));
    s.visibility.assign(static_cast<size_t>(k), 1);
    s.occluded.resize(static_cast<size_t>(k));
    for (int kp = 0; kp < k; ++kp) {
      double x = tmpl.at2(kp, 0) + shift_x + rng.normal(0.0, config.pose_sigma);
      double y = tmpl.at2(kp, 1) + shift_y + rng.normal(0.0, config.pose_sigma);
      s.gt_coords[static_cast<size_t>(2 * kp)] = std::clamp(x, 0.01, 0.99);
      s.gt_coords[static_cast<size_t>(2 * kp + 1)] = std::clamp(y, 0.01, 0.99);
      s.occluded[static_cast<size_t>(kp)] = rng.bernoulli(config.occlusion_rate) ? 1 : 0;
    }

    const Tensor& decoy_tmpl =
        world.templates[static_cast<size_t>(planted_cluster(s.context_id, t))];
    s.features.resize(static_cast<size_t>(ds.d_in));
    int block = 4 * kFreqCount;  // per-keypoint positional code, both axes
    for (int kp = 0; kp < k; ++kp) {
      double bx, by;
      if (s.occluded[static_cast<size_t>(kp)]) {
        // the spurious cue: context-determined coordinates in place of evidence
        bx = decoy_tmpl.at2(kp, 0);
        by = decoy_tmpl.at2(kp, 1);
      } else {
        bx = s.gt_coords[static_cast<size_t>(2 * kp)];
        by = s.gt_coords[static_cast<size_t>(2 * kp + 1)];
      }
      bx += rng.normal(0.0, config.noise_sigma);
      by += rng.normal(0.0, config.noise_sigma);
      double* base = s.features.data() + static_cast<size_t>(kp) * block;
      encode_coordinate(bx, base);
      encode_coordinate(by, base + 2 * kFreqCount);
      if (s.occluded[static_cast<size_t>(kp)]) {
        for (int j = 0; j < block; ++j) base[j] *= config.decoy_strength;
      }
    }
    const auto& sig = world.signatures[static_cast<size_t>(s.context_id)];
    for (int j = 0; j < kSignatureDim; ++j) {
      s.features[static_cast<size_t>(k * block + j)] = sig[static_cast<size_t>(j)];
    }
  }
  return ds;
}

Batch make_batch(const Dataset& ds, const std::vector<int>& indices) {
  Batch b;
  int n = static_cast<int>(indices.size());
  int k = ds.k();
  b.x = Tensor({n, ds.d_in});
  b.coords = Tensor({n, k, 2});
  b.visibility = Tensor({n, k});
  b.sample_ids = indices;
  for (int i = 0; i < n; ++i) {
    const PoseSample& s = ds.samples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
    for (int j = 0; j < ds.d_in; ++j) b.x.at2(i, j) = s.features[static_cast<size_t>(j)];
    for (int kp = 0; kp < k; ++kp) {
      b.coords.at3(i, kp, 0) = s.gt_coords[static_cast<size_t>(2 * kp)];
      b.coords.at3(i, kp, 1) = s.gt_coords[static_cast<size_t>(2 * kp + 1)];
      b.visibility.at2(i, kp) = s.visibility[static_cast<size_t>(kp)] ? 1.0 : 0.0;
    }
  }
  return b;
}

void save_dataset(const Dataset& ds, const std::string& path, const std::string& manifest_path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file: " + path);
  put(out, kDatasetMagic);
  put(out, kDatasetVersion);
  put(out, static_cast<uint32_t>(ds.k()));
  put(out, static_cast<uint32_t>(ds.d_in));
  put(out, static_cast<uint32_t>(ds.samples.size()));
  put(out, static_cast<uint32_t>(ds.config.n_contexts));
  std::string skel = ds.skeleton.serialize();
  std::string cfg = ds.config.serialize();
  put(out, static_cast<uint32_t>(skel.size()));
  out.write(skel.data(), static_cast<std::streamsize>(skel.size()));
  put(out, static_cast<uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  for (const PoseSample& s : ds.samples) {
    out.write(reinterpret_cast<const char*>(s.features.data()),
              static_cast<std::streamsize>(s.features.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(s.gt_coords.data()),
              static_cast<std::streamsize>(s.gt_coords.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(s.visibility.data()),
              static_cast<std::streamsize>(s.visibility.size()));
    out.write(reinterpret_cast<const char*>(s.occluded.data()),
              static_cast<std::streamsize>(s.occluded.size()));
    put(out, s.context_id);
    put(out, s.cluster_id);
  }
  if (!out) throw DataError("dataset write failed: " + path);
  out.close();

  if (!manifest_path.empty()) {
    std::ofstream mf(manifest_path);
    if (!mf) throw DataError("cannot write manifest: " + manifest_path);
    mf << ds.config.serialize();
    mf << "k = " << ds.k() << "\n";
    mf << "d_in = " << ds.d_in << "\n";
    char hex[32];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(dataset_content_hash(ds)));
    mf << "content_hash = " << hex << "\n";
  }
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  if (take<uint32_t>(in) != kDatasetMagic) throw DataError("dataset file: bad magic: " + path);
  if (take<uint32_t>(in) != kDatasetVersion) throw DataError("dataset file: unknown version");
  uint32_t k = take<uint32_t>(in);
  uint32_t d_in = take<uint32_t>(in);
  uint32_t n = take<uint32_t>(in);
  uint32_t n_contexts = take<uint32_t>(in);
  uint32_t skel_len = take<uint32_t>(in);
  std::string skel_text(skel_len, '\0');
  in.read(skel_text.data(), skel_len);
  uint32_t cfg_len = take<uint32_t>(in);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw DataError("dataset file: truncated header");

  Dataset ds;
  {
    KvConfig kc = KvConfig::parse_text(skel_text, path + "#skeleton");
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : kc.get_all("edge")) {
      std::istringstream es(e);
      int a, b;
      es >> a >> b;
      edges.emplace_back(a, b);
    }
    std::vector<SkeletonSpec::Hyperedge> hyper;
    for (const auto& h : kc.get_all("hyperedge")) {
      std::istringstream hs(h);
      SkeletonSpec::Hyperedge he;
      hs >> he.name;
      std::string tok;
      while (hs >> tok) {
        if (tok != ":") he.members.push_back(std::stoi(tok));
      }
      hyper.push_back(std::move(he));
    }
    ds.skeleton = SkeletonSpec::make(static_cast<int>(kc.get_int("k")), kc.get_tokens("names"),
                                     std::move(edges), std::move(hyper));
  }
  if (ds.skeleton.k != static_cast<int>(k)) throw DataError("dataset file: header K mismatch");
  ds.d_in = static_cast<int>(d_in);
  ds.config.n_contexts = static_cast<int>(n_contexts);
  {
    KvConfig kc = KvConfig::parse_text(cfg_text, path + "#config");
    ds.config.n_samples = static_cast<int>(kc.get_int("n_samples", n));
    ds.config.n_clusters = static_cast<int>(kc.get_int("n_clusters", ds.config.n_contexts));
    ds.config.confound_strength = kc.get_double("confound_strength", 0.0);
    ds.config.occlusion_rate = kc.get_double("occlusion_rate", 0.0);
    ds.config.decoy_strength = kc.get_double("decoy_strength", 0.0);
    ds.config.noise_sigma = kc.get_double("noise_sigma", 0.0);
    ds.config.pose_sigma = kc.get_double("pose_sigma", 0.0);
    ds.config.shift_sigma = kc.get_double("shift_sigma", 0.0);
    ds.config.seed = static_cast<uint64_t>(kc.get_int("seed", 0));
    ds.config.skeleton = kc.get_str("skeleton", "builtin:toy8");
    ds.config.mode = kc.get_str("mode", "confounded") == "decorrelated" ? BenchMode::Decorrelated
                                                                        : BenchMode::Confounded;
  }

  ds.samples.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    PoseSample& s = ds.samples[i];
    s.features.resize(d_in);
    in.read(reinterpret_cast<char*>(s.features.data()),
            static_cast<std::streamsize>(d_in * sizeof(double)));
    s.gt_coords.resize(2 * k);
    in.read(reinterpret_cast<char*>(s.gt_coords.data()),
            static_cast<std::streamsize>(2 * k * sizeof(double)));
    s.visibility.resize(k);
    in.read(reinterpret_cast<char*>(s.visibility.data()), k);
    s.occluded.resize(k);
    in.read(reinterpret_cast<char*>(s.occluded.data()), k);
    s.context_id = take<int32_t>(in);
    s.cluster_id = take<int32_t>(in);
    if (!in) throw DataError("dataset file: truncated at sample " + std::to_string(i));
  }
  return ds;
}

uint64_t dataset_content_hash(const Dataset& ds) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, size_t n) { h = fnv1a(static_cast<const uint8_t*>(p), n, h); };
  for (const PoseSample& s : ds.samples) {
    feed(s.features.data(), s.features.size() * sizeof(double));
    feed(s.gt_coords.data(), s.gt_coords.size() * sizeof(double));
    feed(s.visibility.data(), s.visibility.size());
    feed(s.occluded.data(), s.occluded.size());
    feed(&s.context_id, sizeof(s.context_id));
    feed(&s.cluster_id, sizeof(s.cluster_id));
  }
  return h;
}

}  // namespace causalpose
