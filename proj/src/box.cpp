#include "usvtrack/box.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace usvtrack {

double iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double box_loss(const BoundingBox& pred, const BoundingBox& truth) {
  const double iw = std::min(pred.x2(), truth.x2()) - std::max(pred.x1(), truth.x1());
  const double ih = std::min(pred.y2(), truth.y2()) - std::max(pred.y1(), truth.y1());
  const double inter = (iw > 0.0 && ih > 0.0) ? iw * ih : 0.0;
  const double uni = pred.area() + truth.area() - inter;

  const double cw = std::max(pred.x2(), truth.x2()) - std::min(pred.x1(), truth.x1());
  const double ch = std::max(pred.y2(), truth.y2()) - std::min(pred.y1(), truth.y1());
  const double enclosing = cw * ch;
  if (enclosing <= 0.0) throw std::invalid_argument("box_loss: degenerate enclosing area");

  // Ac - Ap - Ag + I == Ac - union; written as stated so the identity is
  // checked against the union form in tests.
  return 1.0 - inter / uni + (enclosing - pred.area() - truth.area() + inter) / enclosing;
}

void box_loss_grad(const BoundingBox& pred, const BoundingBox& truth, double grad[4]) {
  const double ax1 = pred.x1(), ay1 = pred.y1(), ax2 = pred.x2(), ay2 = pred.y2();
  const double bx1 = truth.x1(), by1 = truth.y1(), bx2 = truth.x2(), by2 = truth.y2();

  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double ih = std::min(ay2, by2) - std::max(ay1, by1);
  const bool overlap = iw > 0.0 && ih > 0.0;
  const double inter = overlap ? iw * ih : 0.0;
  const double ap = pred.area(), ag = truth.area();
  const double uni = ap + ag - inter;

  const double cw = std::max(ax2, bx2) - std::min(ax1, bx1);
  const double ch = std::max(ay2, by2) - std::min(ay1, by1);
  const double ac = cw * ch;

  // L = 2 - I/U - U/Ac with U = Ap + Ag - I
  // partials of L wrt I, Ap, Ac (holding the others fixed):
  const double dL_dI = -(uni + inter) / (uni * uni) + 1.0 / ac;
  const double dL_dAp = inter / (uni * uni) - 1.0 / ac;
  const double dL_dAc = uni / (ac * ac);

  // corner derivatives of I (nonzero only where pred's corner is active)
  double dI[4] = {0, 0, 0, 0};  // d inter / d(ax1, ay1, ax2, ay2)
  if (overlap) {
    if (ax1 > bx1) dI[0] = -ih;
    if (ay1 > by1) dI[1] = -iw;
    if (ax2 < bx2) dI[2] = ih;
    if (ay2 < by2) dI[3] = iw;
  }
  // corner derivatives of Ap
  const double dAp[4] = {-pred.h, -pred.w, pred.h, pred.w};
  // corner derivatives of Ac (active when pred's corner defines the hull)
  double dAc[4] = {0, 0, 0, 0};
  if (ax1 < bx1) dAc[0] = -ch;
  if (ay1 < by1) dAc[1] = -cw;
  if (ax2 > bx2) dAc[2] = ch;
  if (ay2 > by2) dAc[3] = cw;

  double dcorner[4];
  for (int i = 0; i < 4; ++i)
    dcorner[i] = dL_dI * dI[i] + dL_dAp * dAp[i] + dL_dAc * dAc[i];

  // corners -> (cx, cy, w, h)
  grad[0] = dcorner[0] + dcorner[2];
  grad[1] = dcorner[1] + dcorner[3];
  grad[2] = 0.5 * (dcorner[2] - dcorner[0]);
  grad[3] = 0.5 * (dcorner[3] - dcorner[1]);
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold,
                           double conf_threshold) {
  std::erase_if(dets, [&](const Detection& d) { return d.confidence < conf_threshold; });
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (a.class_id != b.class_id) return a.class_id < b.class_id;
    if (a.box.cx != b.box.cx) return a.box.cx < b.box.cx;
    return a.box.cy < b.box.cy;
  });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept)
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace usvtrack
