#include "objfield/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "objfield/config.hpp"
#include "objfield/matching.hpp"
#include "objfield/parallel.hpp"

namespace objfield {

SlotBudget compute_slot_budget(const std::vector<MaskSet>& masks) {
  SlotBudget budget;
  for (const MaskSet& set : masks) budget.k_max = std::max(budget.k_max, set.count());
  if (budget.k_max == 0) throw DataError("no supervision masks in any view");
  budget.num_slots = 2 * budget.k_max;
  return budget;
}

void Adam::init(const std::vector<ParamBlock<float>*>& blocks) {
  m.clear();
  v.clear();
  step_count = 0;
  for (const auto* b : blocks) {
    m.emplace_back(b->size(), 0.0f);
    v.emplace_back(b->size(), 0.0f);
  }
}

void Adam::step(const std::vector<ParamBlock<float>*>& blocks, double lr) {
  if (m.size() != blocks.size()) throw NumericalError("optimizer state/block mismatch");
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t k = 0; k < blocks.size(); ++k) {
    ParamBlock<float>& block = *blocks[k];
    float* mk = m[k].data();
    float* vk = v[k].data();
    float* val = block.value.data();
    const float* grad = block.grad.data();
    const float b1 = static_cast<float>(beta1), b2 = static_cast<float>(beta2);
    parallel_for(static_cast<int64_t>(block.size()), [&](int64_t i) {
      float g = grad[i];
      mk[i] = b1 * mk[i] + (1.0f - b1) * g;
      vk[i] = b2 * vk[i] + (1.0f - b2) * g * g;
      double mhat = mk[i] / bc1;
      double vhat = vk[i] / bc2;
      val[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
    });
  }
}

LevelMask level_schedule(const TrainConfig& cfg, int64_t iteration, int num_levels) {
  int64_t active = cfg.coarse2fine_start + iteration / cfg.coarse2fine_interval;
  return LevelMask{static_cast<int>(std::min<int64_t>(active, num_levels))};
}

uint64_t hash_params(std::vector<ParamBlock<float>*> blocks) {
  uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto* b : blocks) mix(b->value.data(), b->value.size() * sizeof(float));
  return h;
}

// ---- checkpoint io ----

namespace {

constexpr char kCkptMagic[8] = {'O', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void write_section(std::ofstream& out, const std::string& name, uint8_t type, const void* data,
                   uint64_t count) {
  uint32_t name_len = static_cast<uint32_t>(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), 4);
  out.write(name.data(), name_len);
  out.write(reinterpret_cast<const char*>(&type), 1);
  out.write(reinterpret_cast<const char*>(&count), 8);
  out.write(static_cast<const char*>(data), count * (type == 0 ? 4 : 1));
}

struct Section {
  uint8_t type = 0;
  std::vector<char> bytes;

  const float* floats() const { return reinterpret_cast<const float*>(bytes.data()); }
  uint64_t count() const { return type == 0 ? bytes.size() / 4 : bytes.size(); }
};

std::map<std::string, Section> read_sections(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  uint32_t version = 0, count = 0;
  in.read(magic, 8);
  if (std::memcmp(magic, kCkptMagic, 8) != 0)
    throw DataError("bad checkpoint magic: " + path.string());
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != Checkpoint::kVersion) throw DataError("unsupported checkpoint version");
  in.read(reinterpret_cast<char*>(&count), 4);
  std::map<std::string, Section> out;
  for (uint32_t s = 0; s < count; ++s) {
    uint32_t name_len = 0;
    in.read(reinterpret_cast<char*>(&name_len), 4);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    Section sec;
    uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&sec.type), 1);
    in.read(reinterpret_cast<char*>(&n), 8);
    sec.bytes.resize(n * (sec.type == 0 ? 4 : 1));
    in.read(sec.bytes.data(), static_cast<std::streamsize>(sec.bytes.size()));
    if (!in) throw DataError("truncated checkpoint " + path.string());
    out[std::move(name)] = std::move(sec);
  }
  return out;
}

void fill_block(const std::map<std::string, Section>& sections, ParamBlock<float>& block) {
  auto it = sections.find(block.name);
  if (it == sections.end()) throw DataError("checkpoint missing tensor " + block.name);
  if (it->second.count() != block.size())
    throw DataError("checkpoint tensor size mismatch for " + block.name);
  std::copy_n(it->second.floats(), block.size(), block.value.data());
}

void write_adam(std::ofstream& out, const std::string& prefix, const Adam& adam) {
  for (size_t k = 0; k < adam.m.size(); ++k) {
    write_section(out, prefix + ".m" + std::to_string(k), 0, adam.m[k].data(), adam.m[k].size());
    write_section(out, prefix + ".v" + std::to_string(k), 0, adam.v[k].data(), adam.v[k].size());
  }
}

void read_adam(const std::map<std::string, Section>& sections, const std::string& prefix,
               int64_t step_count, const std::vector<ParamBlock<float>*>& blocks, Adam& adam) {
  if (step_count == 0 || sections.find(prefix + ".m0") == sections.end()) return;
  adam.init(blocks);
  adam.step_count = step_count;
  for (size_t k = 0; k < blocks.size(); ++k) {
    const Section& ms = sections.at(prefix + ".m" + std::to_string(k));
    const Section& vs = sections.at(prefix + ".v" + std::to_string(k));
    if (ms.count() != blocks[k]->size() || vs.count() != blocks[k]->size())
      throw DataError("checkpoint optimizer state size mismatch");
    std::copy_n(ms.floats(), ms.count(), adam.m[k].data());
    std::copy_n(vs.floats(), vs.count(), adam.v[k].data());
  }
}

}  // namespace

Checkpoint init_checkpoint(const RadianceFieldConfig& radiance_cfg, const TrainConfig& train,
                           const SamplingConfig& sampling, const LossWeights& weights) {
  train.validate();
  sampling.validate();
  weights.validate();
  Checkpoint ck;
  ck.radiance_config = radiance_cfg;
  ck.train = train;
  ck.sampling = sampling;
  ck.weights = weights;
  Rng rng(derive_seed(train.seed, 0x1217ULL));
  ck.radiance = make_radiance_field<float>(radiance_cfg, rng);
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());

  nlohmann::ordered_json meta;
  meta["radiance_config"] = to_json(ck.radiance_config);
  meta["train"] = to_json(ck.train);
  meta["sampling"] = to_json(ck.sampling);
  meta["weights"] = to_json(ck.weights);
  meta["stage1_iter"] = ck.stage1_iter;
  meta["stage2_iter"] = ck.stage2_iter;
  meta["adam1_steps"] = ck.adam_stage1.step_count;
  meta["adam2_steps"] = ck.adam_stage2.step_count;
  meta["has_objects"] = ck.objects.has_value();
  if (ck.objects) meta["object_config"] = to_json(ck.object_config);
  std::string config = meta.dump();

  std::vector<ParamBlock<float>*> rparams = const_cast<Checkpoint&>(ck).radiance.params();
  std::vector<ParamBlock<float>*> oparams;
  if (ck.objects) oparams = const_cast<Checkpoint&>(ck).objects->params();

  uint32_t sections = 1 + static_cast<uint32_t>(rparams.size() + oparams.size()) +
                      2 * static_cast<uint32_t>(ck.adam_stage1.m.size()) +
                      2 * static_cast<uint32_t>(ck.adam_stage2.m.size());
  out.write(kCkptMagic, 8);
  uint32_t version = Checkpoint::kVersion;
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&sections), 4);
  write_section(out, "config", 1, config.data(), config.size());
  for (const auto* b : rparams)
    write_section(out, b->name, 0, b->value.data(), b->value.size());
  for (const auto* b : oparams)
    write_section(out, b->name, 0, b->value.data(), b->value.size());
  uint32_t dummy = 0;
  write_adam(out, "adam1", ck.adam_stage1, dummy);
  write_adam(out, "adam2", ck.adam_stage2, dummy);
  if (!out) throw DataError("short checkpoint write " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto sections = read_sections(path);
  auto cfg_it = sections.find("config");
  if (cfg_it == sections.end()) throw DataError("checkpoint missing config section");
  nlohmann::json meta =
      nlohmann::json::parse(std::string(cfg_it->second.bytes.begin(), cfg_it->second.bytes.end()));

  Checkpoint ck;
  ck.radiance_config = radiance_config_from_json(meta.at("radiance_config"));
  ck.train = train_config_from_json(meta.at("train"));
  ck.sampling = sampling_config_from_json(meta.at("sampling"));
  ck.weights = loss_weights_from_json(meta.at("weights"));
  ck.stage1_iter = meta.at("stage1_iter").get<int64_t>();
  ck.stage2_iter = meta.at("stage2_iter").get<int64_t>();

  Rng rng(0);
  ck.radiance = make_radiance_field<float>(ck.radiance_config, rng);
  for (auto* b : ck.radiance.params()) fill_block(sections, *b);
  if (meta.value("has_objects", false)) {
    ck.object_config = object_config_from_json(meta.at("object_config"));
    ck.objects = make_object_field<float>(ck.object_config, rng);
    for (auto* b : ck.objects->params()) fill_block(sections, *b);
  }
  read_adam(sections, "adam1", meta.value("adam1_steps", int64_t(0)), ck.radiance.params(),
            ck.adam_stage1);
  ck.adam_stage1.step_count = meta.value("adam1_steps", int64_t(0));
  if (ck.objects) {
    read_adam(sections, "adam2", meta.value("adam2_steps", int64_t(0)), ck.objects->params(),
              ck.adam_stage2);
    ck.adam_stage2.step_count = meta.value("adam2_steps", int64_t(0));
  }
  return ck;
}

// ---- stage 1 ----

void train_radiance(Checkpoint& ck, const SceneDataset& dataset, const LossCallback& on_loss) {
  const TrainConfig& cfg = ck.train;
  cfg.validate();
  if (dataset.num_views() < 2) throw DataError("train_radiance needs at least 2 posed views");
  const int held_out = cfg.held_out_view < 0 ? dataset.num_views() - 1 : cfg.held_out_view;

  std::vector<ImageF> images(dataset.num_views());
  std::vector<int> train_views;
  for (int v = 0; v < dataset.num_views(); ++v) {
    if (v == held_out) continue;
    images[v] = dataset.load_image(v);
    train_views.push_back(v);
  }

  SamplingConfig scfg = ck.sampling;
  scfg.background = dataset.background;
  scfg.stratified = true;  // jittered quadrature during optimization

  ck.radiance.set_frozen(false);
  auto params = ck.radiance.params();
  if (!ck.adam_stage1.initialized()) ck.adam_stage1.init(params);

  const int R = cfg.stage1_rays_per_batch;
  const int64_t chunk = 2048;
  for (int64_t iter = ck.stage1_iter; iter < cfg.stage1_iters; ++iter) {
    LevelMask mask = level_schedule(cfg, iter, ck.radiance_config.grid.num_levels);
    Rng rng(derive_seed(cfg.seed, 0x57a9e1ULL, static_cast<uint64_t>(iter)));
    std::vector<Ray> rays;
    rays.reserve(R);
    Tensor<float> target(R, 3);
    for (int r = 0; r < R; ++r) {
      int v = train_views[rng.uniform_int(0, static_cast<int64_t>(train_views.size()) - 1)];
      const Camera& cam = dataset.views[v].camera;
      int i = static_cast<int>(rng.uniform_int(0, cam.height - 1));
      int j = static_cast<int>(rng.uniform_int(0, cam.width - 1));
      rays.push_back(generate_ray(cam, i, j));
      for (int c = 0; c < 3; ++c) target(r, c) = images[v].at(i, j, c);
    }

    for (auto* b : params) b->zero_grad();
    double rgb_sum = 0;
    for (int64_t b0 = 0; b0 < R; b0 += chunk) {
      int64_t b1 = std::min<int64_t>(R, b0 + chunk);
      std::vector<Ray> sub(rays.begin() + b0, rays.begin() + b1);
      Tensor<float> sub_target(b1 - b0, 3);
      std::copy_n(target.v.data() + b0 * 3, (b1 - b0) * 3, sub_target.v.data());
      Tape<float> tape;
      auto rv = render_rays(tape, sub, ck.radiance, static_cast<ObjectField<float>*>(nullptr),
                            scfg, mask,
                            derive_seed(cfg.seed, 0xc41cULL, static_cast<uint64_t>(iter * 131 + b0)));
      auto diff = tape.sub(rv.color(tape), tape.constant(std::move(sub_target)));
      auto chunk_loss = tape.sum_squares(diff);
      rgb_sum += tape.val(chunk_loss).v[0];
      tape.backward(chunk_loss, 1.0f / static_cast<float>(R));
    }
    double rgb_value = rgb_sum / R;

    Tape<float> etape;
    auto empty = empty_space_loss(etape, ck.radiance, cfg.empty_points, mask,
                                  derive_seed(cfg.seed, 0xe3b7ULL, static_cast<uint64_t>(iter)));
    double empty_value = etape.val(empty).v[0];
    etape.backward(empty, static_cast<float>(ck.weights.lambda_empty));

    LossReport report;
    report.iteration = iter;
    report.rgb = rgb_value;
    report.empty = empty_value;
    report.total = rgb_value + ck.weights.lambda_empty * empty_value;
    report.learning_rate = cfg.lr_stage1;
    if (!std::isfinite(report.total))
      throw DivergenceError("stage-1 loss diverged at iteration " + std::to_string(iter));

    ck.adam_stage1.step(params, cfg.lr_stage1);
    ck.stage1_iter = iter + 1;
    if (on_loss) on_loss(report);
  }
}

double held_out_psnr(Checkpoint& ck, const SceneDataset& dataset) {
  const int held_out =
      ck.train.held_out_view < 0 ? dataset.num_views() - 1 : ck.train.held_out_view;
  SamplingConfig scfg = ck.sampling;
  scfg.background = dataset.background;
  scfg.stratified = false;
  auto [rgb, prob] = render_image(dataset.views[held_out].camera, ck.radiance,
                                  static_cast<ObjectField<float>*>(nullptr), scfg,
                                  ck.radiance.grid.full_mask(), derive_seed(ck.train.seed, 0x4e1dULL));
  (void)prob;
  return psnr(rgb, dataset.load_image(held_out));
}

// ---- supervision ingestion ----

std::vector<MaskSet> prepare_supervision(const SceneDataset& dataset, Checkpoint& ck,
                                         const MaskIngestConfig& ingest) {
  SamplingConfig scfg = ck.sampling;
  scfg.background = dataset.background;
  scfg.stratified = false;
  std::vector<MaskSet> out;
  for (int v = 0; v < dataset.num_views(); ++v) {
    MaskSet raw = dataset.load_masks(v);
    MaskSet processed =
        postprocess(raw, ingest.min_area_frac, ingest.min_score, ingest.dilate_px);
    if (ingest.append_background) {
      ImageU8 bg = background_mask(dataset.views[v].camera, ck.radiance, scfg,
                                   ck.radiance.grid.full_mask(),
                                   derive_seed(ck.train.seed, 0xb69ULL, v));
      if (mask_area(bg) > 0) processed.push(std::move(bg), std::nullopt, true);
    }
    out.push_back(std::move(processed));
  }
  return out;
}

// ---- stage 2 ----

namespace {

double stage2_lr(const TrainConfig& cfg, int64_t iter) {
  if (iter < cfg.warmup_iters)
    return cfg.lr_stage2 * static_cast<double>(iter + 1) / cfg.warmup_iters;
  return cfg.lr_stage2 * std::pow(1.0 - cfg.lr_decay, static_cast<double>(iter + 1 - cfg.warmup_iters));
}

}  // namespace

void train_objects(Checkpoint& ck, const SceneDataset& dataset,
                   const std::vector<MaskSet>& supervision, const LossCallback& on_loss) {
  const TrainConfig& cfg = ck.train;
  cfg.validate();
  if (static_cast<int>(supervision.size()) != dataset.num_views())
    throw DataError("supervision must cover every view");

  if (!ck.objects) {
    SlotBudget budget = compute_slot_budget(supervision);
    ObjectFieldConfig ocfg = ck.object_config;
    ocfg.num_slots = budget.num_slots;
    Rng rng(derive_seed(cfg.seed, 0x0bf31dULL));
    ck.objects = make_object_field<float>(ocfg, rng);
    ck.object_config = ocfg;
  }
  for (const MaskSet& set : supervision)
    if (set.count() > ck.objects->num_slots())
      throw CapacityError("a view has more masks than object slots");

  ck.radiance.set_frozen(true);
  const uint64_t radiance_hash = hash_params(ck.radiance.params());

  SamplingConfig scfg = ck.sampling;
  scfg.background = dataset.background;
  LevelMask rad_mask = ck.radiance.grid.full_mask();
  std::vector<ViewRayCache<float>> caches(dataset.num_views());
  for (int v = 0; v < dataset.num_views(); ++v)
    caches[v] = build_ray_cache(dataset.views[v].camera, ck.radiance, scfg, rad_mask,
                                derive_seed(cfg.seed, 0xcac8eULL, v), cfg.prune_threshold);

  auto params = ck.objects->params();
  if (!ck.adam_stage2.initialized()) ck.adam_stage2.init(params);
  const int B = std::min(cfg.stage2_batch_views, dataset.num_views());

  for (int64_t iter = ck.stage2_iter; iter < cfg.stage2_iters; ++iter) {
    Rng rng(derive_seed(cfg.seed, 0x57a9e2ULL, static_cast<uint64_t>(iter)));
    // B distinct views per iteration.
    std::vector<int> pool(dataset.num_views());
    std::iota(pool.begin(), pool.end(), 0);
    for (int b = 0; b < B; ++b)
      std::swap(pool[b], pool[rng.uniform_int(b, static_cast<int64_t>(pool.size()) - 1)]);
    pool.resize(B);

    for (auto* b : params) b->zero_grad();
    double lg_sum = 0, lfp_sum = 0;
    for (int v : pool) {
      if (supervision[v].count() == 0) continue;  // contributes only the TV term
      Tape<float> tape;
      auto obj = eval_object(tape, *ck.objects, caches[v].points, ck.objects->grid.full_mask());
      auto O = weighted_composite(tape, obj, caches[v]);
      AffinityMatrix aff = compute_affinities(tape.val(O).v.data(), tape.val(O).rows,
                                              ck.objects->num_slots(), supervision[v]);
      MatchingResult gamma = cfg.no_matching ? match_argmax(aff) : match(aff);
      auto lg = matching_loss(tape, O, supervision[v], gamma, cfg.pixel_mean_losses);
      auto lfp = false_positive_loss(tape, O, supervision[v], gamma, cfg.pixel_mean_losses);
      lg_sum += tape.val(lg).v[0];
      lfp_sum += tape.val(lfp).v[0];
      auto view_loss = tape.add(lg, tape.scale(lfp, static_cast<float>(ck.weights.lambda_fp)));
      tape.backward(view_loss, 1.0f / static_cast<float>(B));
    }

    Tape<float> ttape;
    auto tv = tv_loss(ttape, ck.objects->grid, 4096,
                      derive_seed(cfg.seed, 0x7471aULL, static_cast<uint64_t>(iter)));
    double tv_value = ttape.val(tv).v[0];
    ttape.backward(tv, static_cast<float>(ck.weights.lambda_tv));

    LossReport report;
    report.iteration = iter;
    report.matching = lg_sum / B;
    report.false_positive = lfp_sum / B;
    report.tv = tv_value;
    report.total = report.matching + ck.weights.lambda_fp * report.false_positive +
                   ck.weights.lambda_tv * report.tv;
    report.learning_rate = stage2_lr(cfg, iter);
    if (!std::isfinite(report.total))
      throw DivergenceError("stage-2 loss diverged at iteration " + std::to_string(iter));

    ck.adam_stage2.step(params, report.learning_rate);
    ck.stage2_iter = iter + 1;
    if (on_loss) on_loss(report);
  }

  if (hash_params(ck.radiance.params()) != radiance_hash)
    throw NumericalError("radiance parameters changed during object training");
}

}  // namespace objfield
