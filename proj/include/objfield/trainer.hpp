#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "objfield/dataset.hpp"
#include "objfield/fields.hpp"
#include "objfield/losses.hpp"
#include "objfield/masks.hpp"
#include "objfield/renderer.hpp"

namespace objfield {

struct TrainConfig {
  int stage1_iters = 10000;
  int stage1_rays_per_batch = 4096;
  int stage2_iters = 2000;
  int stage2_batch_views = 5;  // B
  double lr_stage1 = 1e-2;
  double lr_stage2 = 0.15;
  int warmup_iters = 20;       // stage-2 linear warmup
  double lr_decay = 0.005;     // multiplicative (1 - decay) per post-warmup iteration
  int coarse2fine_start = 4;   // active levels at iteration 0
  int coarse2fine_interval = 50;  // +1 level every this many iterations
  int empty_points = 1024;     // samples for the empty-space regularizer
  int held_out_view = -1;      // -1 = last view; excluded from stage-1 batches
  float prune_threshold = 1e-3f;
  bool no_matching = false;    // ablation: independent per-mask argmax
  bool pixel_mean_losses = true;
  uint64_t seed = 0;

  void validate() const {
    if (stage1_iters < 1 || stage2_iters < 1 || stage1_rays_per_batch < 1 ||
        stage2_batch_views < 1 || warmup_iters < 1 || empty_points < 1)
      throw ConfigError("train counts must be >= 1");
    if (!(lr_stage1 > 0) || !(lr_stage2 > 0)) throw ConfigError("learning rates must be > 0");
    if (coarse2fine_start < 1 || coarse2fine_interval < 1)
      throw ConfigError("coarse-to-fine schedule must be >= 1");
  }
};

// N = 2 * K_max over all views.
struct SlotBudget {
  int k_max = 0;
  int num_slots = 0;
};
SlotBudget compute_slot_budget(const std::vector<MaskSet>& masks);

// Adaptive-moment optimizer (beta1 0.9, beta2 0.99, eps 1e-15), bias
// corrected, no weight decay.
class Adam {
 public:
  double beta1 = 0.9, beta2 = 0.99, eps = 1e-15;
  int64_t step_count = 0;
  std::vector<std::vector<float>> m, v;

  void init(const std::vector<ParamBlock<float>*>& blocks);
  bool initialized() const { return !m.empty(); }
  void step(const std::vector<ParamBlock<float>*>& blocks, double lr);
};

// Single-file training state: field parameters, optimizer moments, configs,
// and iteration counters. Round-trips bit-exactly, so save -> load ->
// continue reproduces an uninterrupted run.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;
  RadianceFieldConfig radiance_config;
  ObjectFieldConfig object_config;
  TrainConfig train;
  SamplingConfig sampling;
  LossWeights weights;
  RadianceField<float> radiance;
  std::optional<ObjectField<float>> objects;
  int64_t stage1_iter = 0;
  int64_t stage2_iter = 0;
  Adam adam_stage1, adam_stage2;
};

Checkpoint init_checkpoint(const RadianceFieldConfig& radiance_cfg, const TrainConfig& train,
                           const SamplingConfig& sampling, const LossWeights& weights);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Coarse-to-fine level activation at a given iteration.
LevelMask level_schedule(const TrainConfig& cfg, int64_t iteration, int num_levels);

using LossCallback = std::function<void(const LossReport&)>;

// Stage 1: photometric fit on random rays across the non-held-out views,
// with the empty-space regularizer and the coarse-to-fine schedule.
// Throws DivergenceError on a non-finite loss.
void train_radiance(Checkpoint& ck, const SceneDataset& dataset, const LossCallback& on_loss);

// PSNR of the held-out view against its ground-truth image.
double held_out_psnr(Checkpoint& ck, const SceneDataset& dataset);

// Loads the supervision masks, applies post-processing, and appends the
// rendered background mask per view.
struct MaskIngestConfig {
  double min_area_frac = 0.03;
  double min_score = 0.70;
  int dilate_px = 5;
  bool append_background = true;
};
std::vector<MaskSet> prepare_supervision(const SceneDataset& dataset, Checkpoint& ck,
                                         const MaskIngestConfig& ingest);

// Stage 2: freezes the radiance weights (verified by hashing), builds the
// per-view ray caches, and optimizes the object field on whole-view mask
// batches with Hungarian matching per view.
void train_objects(Checkpoint& ck, const SceneDataset& dataset,
                   const std::vector<MaskSet>& supervision, const LossCallback& on_loss);

// FNV-1a over the byte representation of every parameter block (freeze
// verification and determinism checks).
uint64_t hash_params(std::vector<ParamBlock<float>*> blocks);

}  // namespace objfield
