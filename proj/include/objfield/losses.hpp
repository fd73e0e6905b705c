#pragma once

#include <cstdint>
#include <string>

#include "objfield/fields.hpp"
#include "objfield/masks.hpp"
#include "objfield/matching.hpp"
#include "objfield/tape.hpp"

namespace objfield {

struct LossWeights {
  double lambda_fp = 0.01;
  double lambda_tv = 0.01;
  double lambda_empty = 1e-4;

  void validate() const {
    if (lambda_fp < 0 || lambda_tv < 0 || lambda_empty < 0)
      throw ConfigError("loss weights must be >= 0");
  }
};

// One line of the training log.
struct LossReport {
  int64_t iteration = 0;
  double rgb = 0, empty = 0, matching = 0, false_positive = 0, tv = 0;
  double total = 0;
  double learning_rate = 0;

  std::string to_json_line() const;
};

// Mean over rays of the squared color error (Eq. of the photometric fit):
// per ray the 3 channel errors are summed, then averaged across rays.
template <class S>
typename Tape<S>::Var rgb_loss(Tape<S>& tape, typename Tape<S>::Var rendered,
                               const Tensor<S>& target) {
  const Tensor<S>& pred = tape.val(rendered);
  if (pred.rows != target.rows || pred.cols != target.cols)
    throw InputDomainError("rgb_loss: shape mismatch");
  auto diff = tape.sub(rendered, tape.constant(target));
  return tape.scale(tape.sum_squares(diff), S(1) / static_cast<S>(target.rows));
}

// L1 regularizer on densities at uniform random points of the sampling
// domain [-2,2]^3; densities are nonnegative by construction so the mean is
// the L1 mean.
template <class S>
typename Tape<S>::Var empty_space_loss(Tape<S>& tape, RadianceField<S>& radiance, int num_points,
                                       LevelMask mask, uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3<S>> pts(num_points);
  for (auto& p : pts)
    p = {static_cast<S>(rng.uniform(-2, 2)), static_cast<S>(rng.uniform(-2, 2)),
         static_cast<S>(rng.uniform(-2, 2))};
  auto sigma = eval_density(tape, radiance, pts, mask);
  return tape.mean_all(sigma);
}

// Matching loss: (1/K) sum_m ||M_m - O_{gamma(m)}||^2 over pixels, with the
// per-pixel mean convention by default (pixel_mean=false reproduces the raw
// sum). gamma is stop-gradient: only the probability image receives
// gradients. K = 0 contributes zero.
template <class S>
typename Tape<S>::Var matching_loss(Tape<S>& tape, typename Tape<S>::Var probs,
                                    const MaskSet& masks, const MatchingResult& gamma,
                                    bool pixel_mean = true) {
  const Tensor<S>& O = tape.val(probs);
  const int K = masks.count();
  const int64_t R = O.rows;
  Tensor<S> y(1, 1);
  if (K == 0) return tape.constant(std::move(y));
  if (static_cast<int>(gamma.gamma.size()) != K)
    throw InputDomainError("matching_loss: gamma does not cover the mask set");
  const S norm = (pixel_mean ? S(1) / static_cast<S>(R) : S(1)) / static_cast<S>(K);

  double acc = 0;
  for (int m = 0; m < K; ++m) {
    const ImageU8& mask = masks.masks[m];
    int n = gamma.gamma[m];
    for (int64_t r = 0; r < R; ++r) {
      double d = (mask.data[r] ? 1.0 : 0.0) - static_cast<double>(O(r, n));
      acc += d * d;
    }
  }
  y.v[0] = static_cast<S>(acc) * norm;

  const MaskSet* mp = &masks;
  std::vector<int> g = gamma.gamma;
  return tape.add_node(std::move(y), tape.needs_grad(probs),
                       [probs, mp, g, norm](Tape<S>& t, typename Tape<S>::Var self) {
                         if (!t.needs_grad(probs)) return;
                         S up = t.grad(self).v[0];
                         const Tensor<S>& O = t.val(probs);
                         Tensor<S>& gO = t.grad(probs);
                         for (size_t m = 0; m < g.size(); ++m) {
                           const ImageU8& mask = mp->masks[m];
                           int n = g[m];
                           for (int64_t r = 0; r < O.rows; ++r) {
                             S mv = mask.data[r] ? S(1) : S(0);
                             gO(r, n) += up * norm * S(2) * (O(r, n) - mv);
                           }
                         }
                       });
}

// False-positive loss: (1/K) sum_m sum_{n != gamma(m)} ||M_m * O_n||^2, the
// squared pixel-wise product, zero outside mask support by construction.
template <class S>
typename Tape<S>::Var false_positive_loss(Tape<S>& tape, typename Tape<S>::Var probs,
                                          const MaskSet& masks, const MatchingResult& gamma,
                                          bool pixel_mean = true) {
  const Tensor<S>& O = tape.val(probs);
  const int K = masks.count();
  const int64_t R = O.rows;
  const int64_t N = O.cols;
  Tensor<S> y(1, 1);
  if (K == 0) return tape.constant(std::move(y));
  if (static_cast<int>(gamma.gamma.size()) != K)
    throw InputDomainError("false_positive_loss: gamma does not cover the mask set");
  const S norm = (pixel_mean ? S(1) / static_cast<S>(R) : S(1)) / static_cast<S>(K);

  double acc = 0;
  for (int m = 0; m < K; ++m) {
    const ImageU8& mask = masks.masks[m];
    int assigned = gamma.gamma[m];
    for (int64_t r = 0; r < R; ++r) {
      if (!mask.data[r]) continue;
      const S* row = O.v.data() + r * N;
      for (int64_t n = 0; n < N; ++n) {
        if (n == assigned) continue;
        acc += static_cast<double>(row[n]) * row[n];
      }
    }
  }
  y.v[0] = static_cast<S>(acc) * norm;

  const MaskSet* mp = &masks;
  std::vector<int> g = gamma.gamma;
  return tape.add_node(std::move(y), tape.needs_grad(probs),
                       [probs, mp, g, norm, N](Tape<S>& t, typename Tape<S>::Var self) {
                         if (!t.needs_grad(probs)) return;
                         S up = t.grad(self).v[0];
                         const Tensor<S>& O = t.val(probs);
                         Tensor<S>& gO = t.grad(probs);
                         for (size_t m = 0; m < g.size(); ++m) {
                           const ImageU8& mask = mp->masks[m];
                           int assigned = g[m];
                           for (int64_t r = 0; r < O.rows; ++r) {
                             if (!mask.data[r]) continue;
                             const S* row = O.v.data() + r * N;
                             S* grow = gO.v.data() + r * N;
                             for (int64_t n = 0; n < N; ++n) {
                               if (n == static_cast<int64_t>(assigned)) continue;
                               grow[n] += up * norm * S(2) * row[n];
                             }
                           }
                         }
                       });
}

}  // namespace objfield
