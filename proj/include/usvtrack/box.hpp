#pragma once

#include <vector>

namespace usvtrack {

// Axis-aligned box in normalized image coordinates, center + size form.
struct BoundingBox {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x1() const { return cx - 0.5 * w; }
  double y1() const { return cy - 0.5 * h; }
  double x2() const { return cx + 0.5 * w; }
  double y2() const { return cy + 0.5 * h; }
  double area() const { return w * h; }

  static BoundingBox from_corners(double x1, double y1, double x2, double y2) {
    return {0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1};
  }
};

struct Detection {
  BoundingBox box;
  int class_id = 0;
  double confidence = 0.0;
};

// Intersection over union, in [0,1]. Zero for disjoint boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

// Regression loss 1 - IoU + (Ac - Ap - Ag + I)/Ac with Ac the smallest
// enclosing box; algebraically 1 - GIoU. Zero iff the boxes coincide,
// always < 2.
double box_loss(const BoundingBox& pred, const BoundingBox& truth);

// d box_loss / d (pred.cx, pred.cy, pred.w, pred.h). Piecewise smooth;
// subgradient convention at corner ties.
void box_loss_grad(const BoundingBox& pred, const BoundingBox& truth, double grad[4]);

// Confidence filter + greedy same-class suppression. Survivors are ordered by
// descending confidence with deterministic tie-breaking.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold = 0.5,
                           double conf_threshold = 0.5);

}  // namespace usvtrack
