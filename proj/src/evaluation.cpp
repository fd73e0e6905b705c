#include "objfield/evaluation.hpp"

#include <algorithm>
#include <map>

#include "objfield/errors.hpp"
#include "objfield/matching.hpp"

namespace objfield {

SegmentationImage segment(const ProbabilityImage& probs) {
  SegmentationImage seg;
  seg.labels = ImageU16(probs.height, probs.width, 1);
  for (int i = 0; i < probs.height; ++i)
    for (int j = 0; j < probs.width; ++j) {
      if (probs.opacity.at(i, j) < 0.5f) {
        seg.labels.at(i, j) = 0;
        continue;
      }
      int best = 0;
      for (int n = 1; n < probs.num_slots; ++n)
        if (probs.at(n, i, j) > probs.at(best, i, j)) best = n;
      seg.labels.at(i, j) = static_cast<uint16_t>(best + 1);
    }
  return seg;
}

std::vector<ImageU8> label_map_to_masks(const ImageU16& labels) {
  std::map<uint16_t, ImageU8> by_label;
  for (int i = 0; i < labels.height; ++i)
    for (int j = 0; j < labels.width; ++j) {
      uint16_t id = labels.at(i, j);
      if (id == 0) continue;
      auto [it, inserted] = by_label.try_emplace(id, labels.height, labels.width, 1);
      it->second.at(i, j) = 1;
    }
  std::vector<ImageU8> out;
  out.reserve(by_label.size());
  for (auto& [id, mask] : by_label) out.push_back(std::move(mask));
  return out;
}

namespace {

// Joint histogram of two label maps restricted to nonzero ids.
struct Overlap {
  std::map<uint16_t, int64_t> area_a, area_b;
  std::map<std::pair<uint16_t, uint16_t>, int64_t> inter;
};

Overlap overlap_counts(const ImageU16& a, const ImageU16& b) {
  if (a.height != b.height || a.width != b.width)
    throw InputDomainError("label maps differ in size");
  Overlap o;
  for (size_t p = 0; p < a.data.size(); ++p) {
    uint16_t ia = a.data[p], ib = b.data[p];
    if (ia) ++o.area_a[ia];
    if (ib) ++o.area_b[ib];
    if (ia && ib) ++o.inter[{ia, ib}];
  }
  return o;
}

}  // namespace

double weighted_iou(const SegmentationImage& pred, const ImageU16& gt, bool one_to_one,
                    std::vector<MetricReport::PerMask>* breakdown) {
  Overlap o = overlap_counts(gt, pred.labels);
  if (o.area_a.empty()) throw UndefinedMetricError("weighted_iou: empty ground truth");
  if (breakdown) breakdown->clear();

  if (!one_to_one) {
    double num = 0, den = 0;
    for (auto& [gid, garea] : o.area_a) {
      double best = 0;
      for (auto& [pid, parea] : o.area_b) {
        auto it = o.inter.find({gid, pid});
        if (it == o.inter.end()) continue;
        double iou = double(it->second) / double(garea + parea - it->second);
        best = std::max(best, iou);
      }
      num += garea * best;
      den += garea;
      if (breakdown) breakdown->push_back({gid, double(garea), best});
    }
    return num / den;
  }

  // Injective variant: assign predicted masks to ground-truth masks with the
  // Hungarian matcher, maximizing the area-weighted IoU sum. Pad with
  // zero-affinity virtual predictions when predictions are scarce.
  std::vector<uint16_t> gids, pids;
  for (auto& [gid, _] : o.area_a) gids.push_back(gid);
  for (auto& [pid, _] : o.area_b) pids.push_back(pid);
  int K = static_cast<int>(gids.size());
  int N = std::max<int>(K, static_cast<int>(pids.size()));
  AffinityMatrix aff(K, N);
  double den = 0, total_area = 0;
  for (auto& [gid, garea] : o.area_a) total_area += garea;
  for (int m = 0; m < K; ++m) {
    int64_t garea = o.area_a[gids[m]];
    den += garea;
    for (int n = 0; n < static_cast<int>(pids.size()); ++n) {
      auto it = o.inter.find({gids[m], pids[n]});
      if (it == o.inter.end()) continue;
      double iou = double(it->second) / double(garea + o.area_b[pids[n]] - it->second);
      aff.at(m, n) = iou * garea / total_area;  // scaled into [0,1]
    }
  }
  MatchingResult res = match(aff);
  double num = 0;
  for (int m = 0; m < K; ++m) {
    double scaled = aff.at(m, res.gamma[m]);
    double iou = scaled * total_area / o.area_a[gids[m]];
    num += o.area_a[gids[m]] * iou;
    if (breakdown) breakdown->push_back({gids[m], double(o.area_a[gids[m]]), iou});
  }
  return num / den;
}

double best_dice(const std::vector<ImageU8>& p, const std::vector<ImageU8>& g) {
  if (p.empty() || g.empty()) throw UndefinedMetricError("best_dice: empty mask set");
  double total = 0;
  for (const ImageU8& pm : p) {
    int64_t pa = 0;
    for (uint8_t v : pm.data) pa += v ? 1 : 0;
    double best = 0;
    for (const ImageU8& gm : g) {
      if (pm.data.size() != gm.data.size())
        throw InputDomainError("best_dice: mask shape mismatch");
      int64_t ga = 0, inter = 0;
      for (size_t q = 0; q < gm.data.size(); ++q) {
        ga += gm.data[q] ? 1 : 0;
        inter += (pm.data[q] && gm.data[q]) ? 1 : 0;
      }
      if (pa + ga > 0) best = std::max(best, 2.0 * inter / double(pa + ga));
    }
    total += best;
  }
  return total / static_cast<double>(p.size());
}

double sbd(const std::vector<ImageU8>& p, const std::vector<ImageU8>& g) {
  return std::min(best_dice(p, g), best_dice(g, p));
}

ImageF confidence_map(const ProbabilityImage& probs) {
  ImageF conf(probs.height, probs.width, 1);
  for (int i = 0; i < probs.height; ++i)
    for (int j = 0; j < probs.width; ++j) {
      float best = 0;
      for (int n = 0; n < probs.num_slots; ++n) best = std::max(best, probs.at(n, i, j));
      conf.at(i, j) = best;
    }
  return conf;
}

MetricReport evaluate_view(const SegmentationImage& pred, const ImageU16& gt) {
  MetricReport report;
  report.weighted_iou = weighted_iou(pred, gt, false, &report.per_mask);
  std::vector<ImageU8> pred_masks = label_map_to_masks(pred.labels);
  std::vector<ImageU8> gt_masks = label_map_to_masks(gt);
  report.bd = best_dice(pred_masks, gt_masks);
  report.sbd = std::min(report.bd, best_dice(gt_masks, pred_masks));
  return report;
}

}  // namespace objfield
