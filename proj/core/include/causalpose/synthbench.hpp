#ifndef CAUSALPOSE_SYNTHBENCH_HPP
#define CAUSALPOSE_SYNTHBENCH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "causalpose/skeleton.hpp"
#include "causalpose/tensor.hpp"

namespace causalpose {

// One generated pose observation. Occlusion replaces the keypoint's feature
// block with a context decoy but keeps the ground-truth coordinates; the
// visibility flags drive the loss weights and stay independent of occlusion.
struct PoseSample {
  std::vector<double> features;     // d_in
  std::vector<double> gt_coords;    // 2K, (x,y) per keypoint, in [0,1]
  std::vector<uint8_t> visibility;  // K
  std::vector<uint8_t> occluded;    // K
  int32_t context_id = 0;           // realized confounder
  int32_t cluster_id = 0;           // realized pose cluster (generator metadata)
};

enum class BenchMode { Confounded, Decorrelated };

struct BenchConfig {
  int n_samples = 1000;
  int n_contexts = 4;               // distinct context signatures
  int n_clusters = 4;               // pose clusters; planted cluster of c is c mod n_clusters
  double confound_strength = 0.8;   // rho: P(cluster == planted(c)) bias in confounded mode
  double occlusion_rate = 0.3;
  double decoy_strength = 1.0;
  double noise_sigma = 0.01;
  double pose_sigma = 0.03;         // per-keypoint jitter around the cluster template
  double shift_sigma = 0.0;         // optional per-instance global offset
  BenchMode mode = BenchMode::Confounded;
  uint64_t seed = 1;
  std::string skeleton = "builtin:toy8";

  static BenchConfig from_file(const std::string& path);
  std::string serialize() const;
};

struct Dataset {
  BenchConfig config;
  SkeletonSpec skeleton;
  int d_in = 0;
  std::vector<PoseSample> samples;

  int k() const { return skeleton.k; }
  int size() const { return static_cast<int>(samples.size()); }
};

// Resolves "builtin:<name>" or a path to a skeleton file.
SkeletonSpec resolve_skeleton(const std::string& ref);

// Generative model: context c uniform; pose cluster biased toward the
// planted cluster of c (confounded mode) or uniform (decorrelated);
// coordinates = cluster template + shared shift + per-keypoint jitter;
// features = noisy per-keypoint coordinate blocks plus a fixed context
// signature; occluded blocks are replaced by the planted cluster's template
// coordinates scaled by decoy_strength. Every sample is a pure function of
// (seed, mode, index); the template/signature world is a pure function of
// the seed, so train/test splits generated from the same seed share it.
Dataset generate_dataset(const BenchConfig& config);

// Feature dimensionality implied by a skeleton under this generator.
int bench_feature_dim(const SkeletonSpec& spec);

// World tables, exposed for inspection/tests.
struct BenchWorld {
  std::vector<Tensor> templates;       // per cluster: K x 2
  std::vector<std::vector<double>> signatures;  // per context
};
BenchWorld bench_world(const BenchConfig& config, const SkeletonSpec& spec);

struct Batch {
  Tensor x;           // B x d_in
  Tensor coords;      // B x K x 2
  Tensor visibility;  // B x K
  std::vector<int> sample_ids;
};
Batch make_batch(const Dataset& ds, const std::vector<int>& indices);

// Binary dataset container with a human-readable manifest next to it.
void save_dataset(const Dataset& ds, const std::string& path, const std::string& manifest_path);
Dataset load_dataset(const std::string& path);
uint64_t dataset_content_hash(const Dataset& ds);

}  // namespace causalpose

#endif
