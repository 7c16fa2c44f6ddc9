#ifndef CAUSALPOSE_CHECKPOINT_HPP
#define CAUSALPOSE_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "causalpose/model.hpp"

namespace causalpose {

// Binary snapshot: magic, version, meta text, skeleton text, shape table,
// row-major f64 payload (canonical table included), optional optimizer state
// for exact resume, FNV-64 trailer. No timestamps anywhere, so identical
// training runs produce byte-identical files.
struct Checkpoint {
  ModelDims dims;
  InterventionStrategy strategy;
  double lambda = 0.0;
  std::string skeleton_text;
  std::vector<std::pair<std::string, Tensor>> params;

  bool has_trainer_state = false;
  std::vector<Tensor> moment1, moment2;
  int64_t opt_iter = 0;
  int32_t epochs_done = 0;

  static Checkpoint from_model(const PoseModel& model, double lambda);
  PoseModel to_model() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace causalpose

#endif
