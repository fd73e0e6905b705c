#pragma once

#include <vector>

#include "objfield/image.hpp"
#include "objfield/renderer.hpp"

namespace objfield {

// Per-pixel argmax labels: 0 is background (opacity < 0.5), slots are 1..N.
struct SegmentationImage {
  ImageU16 labels;

  int height() const { return labels.height; }
  int width() const { return labels.width; }
};

struct MetricReport {
  double weighted_iou = 0;
  double bd = 0;   // BD(prediction, ground truth)
  double sbd = 0;  // min of both directions
  struct PerMask {
    int gt_id = 0;
    double area = 0;
    double iou = 0;
  };
  std::vector<PerMask> per_mask;
};

// Argmax segmentation; ties resolve to the lowest slot id.
SegmentationImage segment(const ProbabilityImage& probs);

// Pixel sets per distinct nonzero label.
std::vector<ImageU8> label_map_to_masks(const ImageU16& labels);

// Area-weighted best-IoU match of each ground-truth mask against the
// predicted masks. Non-exclusive by default (a predicted mask may serve
// several ground-truth masks); one_to_one switches to an injective matching.
double weighted_iou(const SegmentationImage& pred, const ImageU16& gt, bool one_to_one = false,
                    std::vector<MetricReport::PerMask>* breakdown = nullptr);

// Mean over P's masks of the best Dice score against G's masks.
double best_dice(const std::vector<ImageU8>& p, const std::vector<ImageU8>& g);
double sbd(const std::vector<ImageU8>& p, const std::vector<ImageU8>& g);

// Per-pixel maximum over rendered slot probabilities.
ImageF confidence_map(const ProbabilityImage& probs);

MetricReport evaluate_view(const SegmentationImage& pred, const ImageU16& gt);

}  // namespace objfield
