#pragma once

#include <cstdint>
#include <vector>

#include "objfield/errors.hpp"
#include "objfield/image.hpp"
#include "objfield/masks.hpp"
#include "objfield/renderer.hpp"

namespace objfield {

// K masks (rows) x N slots (columns), entries in [0,1].
struct AffinityMatrix {
  int num_masks = 0, num_slots = 0;
  std::vector<double> values;

  AffinityMatrix() = default;
  AffinityMatrix(int k, int n) : num_masks(k), num_slots(n), values(size_t(k) * n, 0.0) {}
  double& at(int m, int n) { return values[size_t(m) * num_slots + n]; }
  double at(int m, int n) const { return values[size_t(m) * num_slots + n]; }
};

// Injective assignment mask index -> slot index.
struct MatchingResult {
  std::vector<int> gamma;
  double total_affinity = 0;
};

// Soft IoU of a [0,1]-valued slot image against a binary mask:
// sum(min) / sum(max), 0 when both are empty. Reduces to classical IoU for
// binary inputs.
double affinity(const float* slot_values, const ImageU8& mask);
double affinity(const ImageF& slot_image, const ImageU8& mask);

AffinityMatrix compute_affinities(const ProbabilityImage& probs, const MaskSet& masks);
// Training-path variant over a row-major (pixels x slots) probability array.
AffinityMatrix compute_affinities(const float* probs, int64_t num_pixels, int num_slots,
                                  const MaskSet& masks);

// Optimal injective assignment maximizing total affinity (Hungarian on the
// rectangular K x N matrix, run as minimization of 1 - affinity). Slot ties
// resolve to the lowest index. Requires K <= N. No gradients flow through
// this computation.
MatchingResult match(const AffinityMatrix& aff);

// Ablation: per-mask independent argmax; slots may repeat.
MatchingResult match_argmax(const AffinityMatrix& aff);

}  // namespace objfield
