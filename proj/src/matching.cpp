#include "objfield/matching.hpp"

#include <algorithm>
#include <limits>

namespace objfield {

double affinity(const float* slot_values, const ImageU8& mask) {
  double num = 0, den = 0;
  const size_t n = mask.data.size();
  for (size_t p = 0; p < n; ++p) {
    double o = slot_values[p];
    double m = mask.data[p] ? 1.0 : 0.0;
    num += o < m ? o : m;
    den += o > m ? o : m;
  }
  return den > 0 ? num / den : 0.0;
}

double affinity(const ImageF& slot_image, const ImageU8& mask) {
  if (slot_image.height != mask.height || slot_image.width != mask.width ||
      slot_image.channels != 1 || mask.channels != 1)
    throw InputDomainError("affinity: shape mismatch");
  return affinity(slot_image.data.data(), mask);
}

AffinityMatrix compute_affinities(const ProbabilityImage& probs, const MaskSet& masks) {
  if (probs.height != masks.height || probs.width != masks.width)
    throw InputDomainError("compute_affinities: mask/render resolution mismatch");
  AffinityMatrix aff(masks.count(), probs.num_slots);
  for (int m = 0; m < masks.count(); ++m)
    for (int n = 0; n < probs.num_slots; ++n)
      aff.at(m, n) = affinity(probs.slot_plane(n), masks.masks[m]);
  return aff;
}

AffinityMatrix compute_affinities(const float* probs, int64_t num_pixels, int num_slots,
                                  const MaskSet& masks) {
  AffinityMatrix aff(masks.count(), num_slots);
  for (int m = 0; m < masks.count(); ++m) {
    const ImageU8& mask = masks.masks[m];
    if (static_cast<int64_t>(mask.data.size()) != num_pixels)
      throw InputDomainError("compute_affinities: mask/render resolution mismatch");
    std::vector<double> num(num_slots, 0.0), den(num_slots, 0.0);
    for (int64_t p = 0; p < num_pixels; ++p) {
      const float* row = probs + p * num_slots;
      double mv = mask.data[p] ? 1.0 : 0.0;
      for (int n = 0; n < num_slots; ++n) {
        double o = row[n];
        num[n] += o < mv ? o : mv;
        den[n] += o > mv ? o : mv;
      }
    }
    for (int n = 0; n < num_slots; ++n) aff.at(m, n) = den[n] > 0 ? num[n] / den[n] : 0.0;
  }
  return aff;
}

MatchingResult match(const AffinityMatrix& aff) {
  const int K = aff.num_masks, N = aff.num_slots;
  if (K > N)
    throw CapacityError("match: " + std::to_string(K) + " masks exceed " + std::to_string(N) +
                        " slots");
  MatchingResult res;
  res.gamma.assign(K, -1);
  if (K == 0) return res;

  // Hungarian via potentials on the rectangular cost matrix c = 1 - affinity
  // (rows = masks, columns = slots, K <= N). Column scans run in index order
  // with strict improvement, so equal-cost ties land on the lowest slot.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(K + 1, 0.0), v(N + 1, 0.0);
  std::vector<int> assigned(N + 1, 0);  // column -> row (1-based), 0 = free
  std::vector<int> way(N + 1, 0);
  for (int i = 1; i <= K; ++i) {
    assigned[0] = i;
    int j0 = 0;
    std::vector<double> min_slack(N + 1, kInf);
    std::vector<bool> used(N + 1, false);
    do {
      used[j0] = true;
      int i0 = assigned[j0], j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= N; ++j) {
        if (used[j]) continue;
        double cur = (1.0 - aff.at(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < min_slack[j]) {
          min_slack[j] = cur;
          way[j] = j0;
        }
        if (min_slack[j] < delta) {
          delta = min_slack[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= N; ++j) {
        if (used[j]) {
          u[assigned[j]] += delta;
          v[j] -= delta;
        } else {
          min_slack[j] -= delta;
        }
      }
      j0 = j1;
    } while (assigned[j0] != 0);
    do {
      int j1 = way[j0];
      assigned[j0] = assigned[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= N; ++j)
    if (assigned[j] != 0) res.gamma[assigned[j] - 1] = j - 1;
  for (int m = 0; m < K; ++m) res.total_affinity += aff.at(m, res.gamma[m]);
  return res;
}

MatchingResult match_argmax(const AffinityMatrix& aff) {
  MatchingResult res;
  res.gamma.assign(aff.num_masks, -1);
  for (int m = 0; m < aff.num_masks; ++m) {
    int best = 0;
    for (int n = 1; n < aff.num_slots; ++n)
      if (aff.at(m, n) > aff.at(m, best)) best = n;
    res.gamma[m] = best;
    res.total_affinity += aff.at(m, best);
  }
  return res;
}

}  // namespace objfield
