#pragma once

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <vector>

#include "objfield/rng.hpp"
#include "objfield/tape.hpp"
#include "objfield/tensor.hpp"
#include "objfield/vec.hpp"

namespace objfield {

struct HashGridConfig {
  int num_levels = 16;
  int features_per_level = 2;
  int base_resolution = 16;
  float per_level_scale = 1.447f;
  int64_t table_size = int64_t(1) << 19;  // power of two
  int dense_threshold = 64;  // levels at most this many voxels/axis store a full lattice

  void validate() const {
    if (num_levels < 1) throw ConfigError("hash grid needs at least one level");
    if (table_size < 2 || (table_size & (table_size - 1)) != 0)
      throw ConfigError("hash grid table_size must be a power of two");
    if (!(per_level_scale > 1.0f)) throw ConfigError("per_level_scale must exceed 1");
  }
};

// Count of enabled levels, coarsest first (coarse-to-fine schedule).
struct LevelMask {
  int active_levels = 0;
};

// The sampling domain is [-2, 2]^3 (callers contract first).
inline constexpr float kDomainHalfWidth = 2.0f;

template <class S>
struct HashGrid {
  HashGridConfig config;
  std::vector<int> resolutions;       // voxels per axis, per level
  std::vector<bool> dense;            // dense lattice vs hashed table
  std::vector<ParamBlock<S>> levels;  // entries * features_per_level each

  int feature_dim() const { return config.num_levels * config.features_per_level; }
  int64_t level_entries(int l) const {
    if (dense[l]) {
      int64_t n = resolutions[l] + 1;
      return n * n * n;
    }
    return config.table_size;
  }

  LevelMask full_mask() const { return LevelMask{config.num_levels}; }

  template <class U>
  HashGrid<U> cast() const {
    HashGrid<U> out;
    out.config = config;
    out.resolutions = resolutions;
    out.dense = dense;
    out.levels.reserve(levels.size());
    for (const auto& block : levels) out.levels.push_back(block.template cast<U>());
    return out;
  }
};

template <class S>
HashGrid<S> make_hash_grid(const HashGridConfig& cfg, const std::string& name_prefix,
                           Rng& rng, double init_std = 1e-2) {
  cfg.validate();
  HashGrid<S> grid;
  grid.config = cfg;
  double res = cfg.base_resolution;
  for (int l = 0; l < cfg.num_levels; ++l) {
    int r = static_cast<int>(res);
    grid.resolutions.push_back(r);
    grid.dense.push_back(r <= cfg.dense_threshold);
    res *= cfg.per_level_scale;
  }
  for (int l = 0; l < cfg.num_levels; ++l) {
    int64_t n = grid.level_entries(l) * cfg.features_per_level;
    ParamBlock<S> block(name_prefix + ".level" + std::to_string(l), static_cast<size_t>(n));
    for (S& v : block.value) v = static_cast<S>(rng.truncated_normal(init_std));
    grid.levels.push_back(std::move(block));
  }
  return grid;
}

namespace detail {

// Spatial hash: XOR of coordinate-times-large-prime products, masked to the
// power-of-two table size.
inline uint32_t spatial_hash(uint32_t x, uint32_t y, uint32_t z, uint32_t mask) {
  return ((x * 2654435761u) ^ (y * 805459861u) ^ (z * 3674653429u)) & mask;
}

template <class S>
struct CornerSet {
  int64_t idx[8];
  S w[8];
};

// Corner indices and trilinear weights of the voxel containing x at one level.
template <class S>
CornerSet<S> corners_at(const Vec3<S>& x, int resolution, bool dense, int64_t table_size) {
  CornerSet<S> out;
  S u[3], f[3];
  int c[3];
  for (int a = 0; a < 3; ++a) {
    S t = (x[a] + S(kDomainHalfWidth)) / S(2 * kDomainHalfWidth);  // [0, 1]
    if (t < S(0)) t = S(0);
    if (t > S(1)) t = S(1);
    u[a] = t * S(resolution);
    int ci = static_cast<int>(u[a]);
    if (ci > resolution - 1) ci = resolution - 1;
    c[a] = ci;
    f[a] = u[a] - S(ci);
  }
  int side = resolution + 1;
  uint32_t mask = static_cast<uint32_t>(table_size - 1);
  for (int k = 0; k < 8; ++k) {
    int dx = k & 1, dy = (k >> 1) & 1, dz = (k >> 2) & 1;
    int gx = c[0] + dx, gy = c[1] + dy, gz = c[2] + dz;
    if (dense)
      out.idx[k] = (static_cast<int64_t>(gx) * side + gy) * side + gz;
    else
      out.idx[k] = spatial_hash(gx, gy, gz, mask);
    S wx = dx ? f[0] : S(1) - f[0];
    S wy = dy ? f[1] : S(1) - f[1];
    S wz = dz ? f[2] : S(1) - f[2];
    out.w[k] = wx * wy * wz;
  }
  return out;
}

void note_domain_clamp();  // logs once per process

}  // namespace detail

// Trilinear multi-level feature lookup for a batch of (already contracted)
// points. Output is P x (num_levels * features_per_level); inactive levels
// contribute exact zeros. Differentiable w.r.t. the feature tables of
// active levels; gradient scatter is serialized per table.
template <class S>
typename Tape<S>::Var hash_encode(Tape<S>& tape, HashGrid<S>& grid,
                                  const std::vector<Vec3<S>>& points, LevelMask mask) {
  const HashGridConfig& cfg = grid.config;
  int active = std::min(std::max(mask.active_levels, 1), cfg.num_levels);
  int64_t P = static_cast<int64_t>(points.size());
  int F = cfg.features_per_level;
  Tensor<S> y(P, grid.feature_dim());

  for (const Vec3<S>& p : points)
    if (std::abs(p.x) > S(kDomainHalfWidth) || std::abs(p.y) > S(kDomainHalfWidth) ||
        std::abs(p.z) > S(kDomainHalfWidth)) {
      detail::note_domain_clamp();
      break;
    }

  // Forward writes are disjoint per (level, point): free to parallelize both.
  auto pr = static_partition(P, kScatterPartitions);
  int nparts = static_cast<int>(pr.size());
  parallel_ranges(static_cast<int64_t>(active) * nparts, 0, [&](int, int64_t b, int64_t e) {
    for (int64_t task = b; task < e; ++task) {
      int l = static_cast<int>(task / nparts);
      int part = static_cast<int>(task % nparts);
      const S* table = grid.levels[l].value.data();
      for (int64_t p = pr[part].begin; p < pr[part].end; ++p) {
        auto cs = detail::corners_at(points[p], grid.resolutions[l], grid.dense[l] != 0,
                                     cfg.table_size);
        S* out = y.v.data() + p * y.cols + static_cast<int64_t>(l) * F;
        for (int k = 0; k < 8; ++k) {
          const S* feat = table + cs.idx[k] * F;
          for (int f = 0; f < F; ++f) out[f] += cs.w[k] * feat[f];
        }
      }
    }
  });

  bool any_trainable = false;
  for (int l = 0; l < active; ++l) any_trainable |= !grid.levels[l].frozen;
  HashGrid<S>* gp = &grid;
  const std::vector<Vec3<S>>* pts = &points;
  return tape.add_node(std::move(y), any_trainable, [gp, pts, active, F](Tape<S>& t,
                                                                         typename Tape<S>::Var self) {
    const Tensor<S>& g = t.grad(self);
    int64_t P = static_cast<int64_t>(pts->size());
    // One task per level: scatter-adds into a table stay single-writer and
    // run in point order, so results are bit-stable.
    parallel_ranges(active, 0, [&](int, int64_t lb, int64_t le) {
      for (int64_t l = lb; l < le; ++l) {
        ParamBlock<S>& block = gp->levels[l];
        if (block.frozen) continue;
        S* gt = block.grad.data();
        for (int64_t p = 0; p < P; ++p) {
          auto cs = detail::corners_at((*pts)[p], gp->resolutions[l], gp->dense[l] != 0,
                                       gp->config.table_size);
          const S* gin = g.v.data() + p * g.cols + l * F;
          for (int k = 0; k < 8; ++k) {
            S* dst = gt + cs.idx[k] * F;
            for (int f = 0; f < F; ++f) dst[f] += cs.w[k] * gin[f];
          }
        }
      }
    });
  });
}

namespace detail {

// Exact (value, per-entry gradient factor pairs) TV over a dense lattice:
// sum of squared feature differences over axis-adjacent lattice points,
// normalized by the pair count 3*R*(R+1)^2.
template <class S>
S dense_tv_forward(const HashGrid<S>& grid, int level, std::vector<S>* grad_out, S upstream) {
  int R = grid.resolutions[level];
  int side = R + 1;
  int F = grid.config.features_per_level;
  const S* table = grid.levels[level].value.data();
  double pair_count = 3.0 * R * static_cast<double>(side) * side;
  S inv = static_cast<S>(1.0 / pair_count);
  double acc = 0;
  auto at = [&](int x, int y, int z) { return (static_cast<int64_t>(x) * side + y) * side + z; };
  for (int x = 0; x < side; ++x)
    for (int y = 0; y < side; ++y)
      for (int z = 0; z < side; ++z) {
        int64_t i = at(x, y, z);
        for (int axis = 0; axis < 3; ++axis) {
          int nx = x + (axis == 0), ny = y + (axis == 1), nz = z + (axis == 2);
          if (nx > R || ny > R || nz > R) continue;
          int64_t j = at(nx, ny, nz);
          for (int f = 0; f < F; ++f) {
            S d = table[i * F + f] - table[j * F + f];
            acc += static_cast<double>(d) * d;
            if (grad_out) {
              S gg = S(2) * d * inv * upstream;
              (*grad_out)[i * F + f] += gg;
              (*grad_out)[j * F + f] -= gg;
            }
          }
        }
      }
  return static_cast<S>(acc) * inv;
}

// Unbiased stochastic TV over a hashed level: num_pairs axis-adjacent pairs
// drawn uniformly from the virtual lattice, hashed to table entries,
// normalized by the sample count.
template <class S>
S hashed_tv_forward(const HashGrid<S>& grid, int level, int num_pairs, uint64_t seed,
                    std::vector<S>* grad_out, S upstream) {
  int R = grid.resolutions[level];
  int F = grid.config.features_per_level;
  const S* table = grid.levels[level].value.data();
  uint32_t mask = static_cast<uint32_t>(grid.config.table_size - 1);
  Rng rng(seed);
  S inv = S(1) / static_cast<S>(num_pairs);
  double acc = 0;
  for (int s = 0; s < num_pairs; ++s) {
    int axis = static_cast<int>(rng.uniform_int(0, 2));
    int x = static_cast<int>(rng.uniform_int(0, axis == 0 ? R - 1 : R));
    int y = static_cast<int>(rng.uniform_int(0, axis == 1 ? R - 1 : R));
    int z = static_cast<int>(rng.uniform_int(0, axis == 2 ? R - 1 : R));
    int64_t i = spatial_hash(x, y, z, mask);
    int64_t j = spatial_hash(x + (axis == 0), y + (axis == 1), z + (axis == 2), mask);
    for (int f = 0; f < F; ++f) {
      S d = table[i * F + f] - table[j * F + f];
      acc += static_cast<double>(d) * d;
      if (grad_out) {
        S gg = S(2) * d * inv * upstream;
        (*grad_out)[i * F + f] += gg;
        (*grad_out)[j * F + f] -= gg;
      }
    }
  }
  return static_cast<S>(acc) * inv;
}

}  // namespace detail

// Total-variation regularizer over grid features: exact per-level mean over
// all axis-adjacent pairs on dense levels, an unbiased num_pairs-sample
// estimate on hashed levels, summed across levels. Deterministic given seed.
template <class S>
typename Tape<S>::Var tv_loss(Tape<S>& tape, HashGrid<S>& grid, int num_pairs, uint64_t seed) {
  int L = grid.config.num_levels;
  Tensor<S> y(1, 1);
  std::vector<S> per_level(L);
  parallel_ranges(L, 0, [&](int, int64_t b, int64_t e) {
    for (int64_t l = b; l < e; ++l) {
      per_level[l] = grid.dense[l]
                         ? detail::dense_tv_forward<S>(grid, static_cast<int>(l), nullptr, S(0))
                         : detail::hashed_tv_forward<S>(grid, static_cast<int>(l), num_pairs,
                                                        derive_seed(seed, 0x7471u, l), nullptr,
                                                        S(0));
    }
  });
  S total = S(0);
  for (S v : per_level) total += v;
  y.v[0] = total;

  bool trainable = false;
  for (const auto& b : grid.levels) trainable |= !b.frozen;
  HashGrid<S>* gp = &grid;
  return tape.add_node(std::move(y), trainable, [gp, num_pairs, seed](Tape<S>& t,
                                                                      typename Tape<S>::Var self) {
    S g = t.grad(self).v[0];
    int L = gp->config.num_levels;
    parallel_ranges(L, 0, [&](int, int64_t b, int64_t e) {
      for (int64_t l = b; l < e; ++l) {
        if (gp->levels[l].frozen) continue;
        if (gp->dense[l])
          detail::dense_tv_forward<S>(*gp, static_cast<int>(l), &gp->levels[l].grad, g);
        else
          detail::hashed_tv_forward<S>(*gp, static_cast<int>(l), num_pairs,
                                       derive_seed(seed, 0x7471u, l), &gp->levels[l].grad, g);
      }
    });
  });
}

}  // namespace objfield
