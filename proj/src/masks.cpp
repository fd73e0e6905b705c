#include "objfield/masks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "objfield/rng.hpp"

namespace objfield {

namespace {

// Disk structuring element offsets for a given radius.
std::vector<std::pair<int, int>> disk_offsets(int radius) {
  std::vector<std::pair<int, int>> out;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx)
      if (dy * dy + dx * dx <= radius * radius) out.emplace_back(dy, dx);
  return out;
}

bool subset_of(const ImageU8& a, const ImageU8& b) {
  for (size_t p = 0; p < a.data.size(); ++p)
    if (a.data[p] && !b.data[p]) return false;
  return true;
}

}  // namespace

int mask_area(const ImageU8& mask) {
  int n = 0;
  for (uint8_t v : mask.data) n += v ? 1 : 0;
  return n;
}

ImageU8 dilate(const ImageU8& mask, int radius) {
  if (radius <= 0) return mask;
  ImageU8 out(mask.height, mask.width, 1);
  auto offsets = disk_offsets(radius);
  for (int i = 0; i < mask.height; ++i)
    for (int j = 0; j < mask.width; ++j) {
      if (!mask.at(i, j)) continue;
      for (auto [dy, dx] : offsets) {
        int y = i + dy, x = j + dx;
        if (y >= 0 && y < mask.height && x >= 0 && x < mask.width) out.at(y, x) = 1;
      }
    }
  return out;
}

ImageU8 erode(const ImageU8& mask, int radius) {
  if (radius <= 0) return mask;
  ImageU8 out(mask.height, mask.width, 1);
  auto offsets = disk_offsets(radius);
  for (int i = 0; i < mask.height; ++i)
    for (int j = 0; j < mask.width; ++j) {
      bool keep = mask.at(i, j) != 0;
      for (auto [dy, dx] : offsets) {
        if (!keep) break;
        int y = i + dy, x = j + dx;
        keep = y >= 0 && y < mask.height && x >= 0 && x < mask.width && mask.at(y, x);
      }
      out.at(i, j) = keep ? 1 : 0;
    }
  return out;
}

MaskSet postprocess(const MaskSet& raw, double min_area_frac, double min_score, int dilate_px) {
  if (raw.processed) return raw;
  const int k = raw.count();
  std::vector<int> areas(k);
  for (int m = 0; m < k; ++m) areas[m] = mask_area(raw.masks[m]);

  std::vector<bool> removed(k, false);
  // Containment: drop masks included in another mask; identical masks keep
  // the first occurrence.
  for (int m = 0; m < k; ++m)
    for (int j = 0; j < k && !removed[m]; ++j) {
      if (j == m || areas[m] > areas[j]) continue;
      if (!subset_of(raw.masks[m], raw.masks[j])) continue;
      if (areas[m] < areas[j] || j < m) removed[m] = true;
    }
  double min_area = min_area_frac * raw.height * raw.width;
  for (int m = 0; m < k; ++m) {
    if (removed[m]) continue;
    if (areas[m] < min_area) removed[m] = true;
    if (!removed[m] && raw.scores[m].has_value()) {
      const auto& s = *raw.scores[m];
      if (s.predicted_iou < min_score || s.stability < min_score) removed[m] = true;
    }
  }

  MaskSet out;
  out.view_id = raw.view_id;
  out.height = raw.height;
  out.width = raw.width;
  out.processed = true;
  for (int m = 0; m < k; ++m) {
    if (removed[m]) continue;
    out.push(dilate(raw.masks[m], dilate_px), raw.scores[m], raw.is_background[m]);
  }
  return out;
}

MaskSet corrupt_masks(const MaskSet& clean, const CorruptionConfig& cfg, uint64_t view_index) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, 0xc02201ULL, view_index));
  MaskSet out;
  out.view_id = clean.view_id;
  out.height = clean.height;
  out.width = clean.width;

  std::vector<ImageU8> work;
  for (int m = 0; m < clean.count(); ++m) {
    if (rng.bernoulli(cfg.drop_prob)) continue;
    work.push_back(clean.masks[m]);
  }

  // Straight-cut splits through the mask centroid at a random angle.
  std::vector<ImageU8> split_out;
  for (ImageU8& mask : work) {
    bool do_split = rng.bernoulli(cfg.split_prob);
    double angle = rng.uniform(0.0, 2.0 * M_PI);  // drawn either way to keep streams aligned
    if (!do_split) {
      split_out.push_back(std::move(mask));
      continue;
    }
    long long sy = 0, sx = 0, n = 0;
    for (int i = 0; i < mask.height; ++i)
      for (int j = 0; j < mask.width; ++j)
        if (mask.at(i, j)) {
          sy += i;
          sx += j;
          ++n;
        }
    if (n == 0) continue;
    double cy = double(sy) / n, cx = double(sx) / n;
    double ny = std::sin(angle), nx = std::cos(angle);
    ImageU8 a(mask.height, mask.width, 1), b(mask.height, mask.width, 1);
    for (int i = 0; i < mask.height; ++i)
      for (int j = 0; j < mask.width; ++j) {
        if (!mask.at(i, j)) continue;
        ((i - cy) * ny + (j - cx) * nx > 0 ? a : b).at(i, j) = 1;
      }
    if (mask_area(a) > 0) split_out.push_back(std::move(a));
    if (mask_area(b) > 0) split_out.push_back(std::move(b));
  }
  work = std::move(split_out);

  // Merge touching pairs (adjacency via 1-px dilation overlap).
  if (cfg.merge_prob > 0) {
    std::vector<bool> gone(work.size(), false);
    for (size_t i = 0; i < work.size(); ++i) {
      if (gone[i]) continue;
      ImageU8 grown = dilate(work[i], 1);
      for (size_t j = i + 1; j < work.size(); ++j) {
        if (gone[j]) continue;
        bool touching = false;
        for (size_t p = 0; p < grown.data.size() && !touching; ++p)
          touching = grown.data[p] && work[j].data[p];
        if (!touching || !rng.bernoulli(cfg.merge_prob)) continue;
        for (size_t p = 0; p < work[i].data.size(); ++p)
          work[i].data[p] = work[i].data[p] || work[j].data[p];
        gone[j] = true;
        grown = dilate(work[i], 1);
      }
    }
    std::vector<ImageU8> kept;
    for (size_t i = 0; i < work.size(); ++i)
      if (!gone[i]) kept.push_back(std::move(work[i]));
    work = std::move(kept);
  }

  // Boundary jitter: dilate or erode by a random radius up to jitter_px.
  if (cfg.jitter_px > 0) {
    std::vector<ImageU8> kept;
    for (ImageU8& mask : work) {
      int r = static_cast<int>(rng.uniform_int(-cfg.jitter_px, cfg.jitter_px));
      ImageU8 jittered = r >= 0 ? dilate(mask, r) : erode(mask, -r);
      if (mask_area(jittered) > 0) kept.push_back(std::move(jittered));
    }
    work = std::move(kept);
  }

  // Masks carry no cross-view identity: permute the per-view order.
  std::vector<size_t> order(work.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (size_t idx : order) out.push(std::move(work[idx]));
  return out;
}

MaskSet load_mask_set(const std::filesystem::path& masks_dir, const std::string& view_id,
                      int height, int width) {
  namespace fs = std::filesystem;
  MaskSet set;
  set.view_id = view_id;
  set.height = height;
  set.width = width;
  fs::path dir = masks_dir / view_id;
  if (!fs::exists(dir)) throw DataError("mask directory missing: " + dir.string());

  nlohmann::json meta;
  fs::path meta_path = dir / "meta.json";
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    in >> meta;
  }

  std::vector<int> keys;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".png") continue;
    keys.push_back(std::stoi(entry.path().stem().string()));
  }
  std::sort(keys.begin(), keys.end());
  for (int k : keys) {
    ImageU8 raw = read_png_gray8(dir / (std::to_string(k) + ".png"));
    if (raw.height != height || raw.width != width) raw = resize_nearest(raw, height, width);
    for (uint8_t& v : raw.data) v = v >= 128 ? 1 : 0;
    std::optional<MaskSet::Scores> score;
    std::string key = std::to_string(k);
    if (meta.contains(key)) {
      score = MaskSet::Scores{meta[key].value("predicted_iou", 0.0f),
                              meta[key].value("stability", 0.0f)};
    }
    set.push(std::move(raw), score);
  }
  return set;
}

void save_mask_set(const std::filesystem::path& masks_dir, const MaskSet& set) {
  namespace fs = std::filesystem;
  fs::path dir = masks_dir / set.view_id;
  fs::create_directories(dir);
  nlohmann::json meta;
  for (int m = 0; m < set.count(); ++m) {
    ImageU8 png(set.height, set.width, 1);
    for (size_t p = 0; p < png.data.size(); ++p) png.data[p] = set.masks[m].data[p] ? 255 : 0;
    write_png8(dir / (std::to_string(m) + ".png"), png);
    if (set.scores[m].has_value()) {
      meta[std::to_string(m)] = {{"predicted_iou", set.scores[m]->predicted_iou},
                                 {"stability", set.scores[m]->stability}};
    }
  }
  if (!meta.empty()) {
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
}

}  // namespace objfield
