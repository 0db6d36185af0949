#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "usvtrack/box.hpp"
#include "usvtrack/image.hpp"
#include "usvtrack/nn.hpp"

namespace usvtrack::data {
struct DatasetManifest;
}

namespace usvtrack::det {

struct GridSpec {
  int k = 8;                // grid side; image split into k x k cells
  int anchors_per_cell = 2; // M
  int num_classes = 6;      // C
  double lambda_noobj = 0.5;
  std::vector<std::array<double, 2>> anchors;  // M normalized (w, h) priors
};

struct AssignedSlot {
  bool positive = false;
  BoundingBox truth;
  int class_id = 0;
};

// One slot per (cell, anchor). Each surviving ground-truth box owns exactly
// one slot; collisions keep the larger-area truth.
struct TargetAssignment {
  int k = 0, m = 0, num_classes = 0;
  double lambda_noobj = 0.5;
  std::vector<AssignedSlot> slots;  // (row*k + col)*m + anchor
  int dropped = 0;

  int index(int cell, int anchor) const { return cell * m + anchor; }
  int positives() const {
    int n = 0;
    for (const auto& s : slots) n += s.positive ? 1 : 0;
    return n;
  }
};

// Cell of the box center (floor, clamped to the last cell on the 1.0 edge),
// anchor by highest IoU against the truth's (w,h); ties to the lowest index.
TargetAssignment assign_targets(const std::vector<std::pair<int, BoundingBox>>& truths,
                                const GridSpec& grid);

// Decoded predictions per (cell, anchor), probability space.
struct GridPredictions {
  int k = 0, m = 0, num_classes = 0;
  std::vector<BoundingBox> boxes;
  std::vector<double> confidence;   // sigmoid outputs
  std::vector<double> class_probs;  // slot-major, then class (softmax outputs)
};

// per-class binary cross-entropy summed over positive slots
double clc_loss(const TargetAssignment& assign, const std::vector<double>& class_probs);
// BCE(conf, 1) over positives + lambda_noobj * BCE(conf, 0) over negatives
double conf_loss(const TargetAssignment& assign, const std::vector<double>& confidence);
// box_loss summed over positive slots
double box_loss_total(const TargetAssignment& assign, const std::vector<BoundingBox>& boxes);

double total_loss(const TargetAssignment& assign, const GridPredictions& pred);

// Three stride-2 conv stages and a 1x1 head mapping H x W x 3 to raw
// k x k x M x (5+C) predictions; k = H/8.
struct DetectorNet {
  int base = 16;
  GridSpec grid;
  int native_h = 64, native_w = 64;

  nn::Conv2d conv1, conv2, conv3, head;
  nn::BatchNorm2d bn1, bn2, bn3;
  nn::LeakyReLU act1, act2, act3;

  DetectorNet(int base_width, const GridSpec& grid_spec, int input_h, int input_w);
  void init(Rng& rng);
  std::vector<nn::ParamRef> params();
  void zero_grad();

  nn::Tensor forward(const nn::Tensor& x, bool training);
  nn::Tensor backward(const nn::Tensor& draw);
};

// sigmoid center offsets within the cell, exponential anchor scaling for size
GridPredictions decode(const nn::Tensor& raw, int sample, const GridSpec& grid);

// Batch training objective: mean per-image total_loss. With do_backward the
// gradient is propagated through decode and the net into parameter grads.
double detector_training_loss(DetectorNet& net, const nn::Tensor& x,
                              const std::vector<TargetAssignment>& assigns, bool do_backward);

struct DetTrainConfig {
  int epochs = 150;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int base_width = 16;
  int anchors_per_cell = 2;
  int num_classes = 6;
  double lambda_noobj = 0.5;
  bool train_on_hazy = false;  // default: clear frames
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
};

struct DetLossRecord {
  int epoch = 0;
  double loss = 0.0;
};

struct DetectorCheckpoint {
  DetTrainConfig cfg;
  GridSpec grid;
  DetectorNet net;
  std::vector<DetLossRecord> history;

  DetectorCheckpoint() : net(16, GridSpec{}, 64, 64) {}
};

// Deterministic per seed; anchors fitted by seeded 2-means over the training
// truth sizes; records per-epoch mean loss.
DetectorCheckpoint train_detector(const data::DatasetManifest& manifest,
                                  const DetTrainConfig& cfg);

// Forward + decode + NMS. Inputs whose sides are an integer multiple of the
// native size are mean-pooled down first; anything else is an error.
std::vector<Detection> detect(DetectorCheckpoint& ckpt, const ImageBuffer& image,
                              double iou_threshold = 0.5, double conf_threshold = 0.5);

void save_detector_checkpoint(const DetectorCheckpoint& ckpt, const std::string& path);
DetectorCheckpoint load_detector_checkpoint(const std::string& path);

void write_det_loss_csv(const std::vector<DetLossRecord>& history, const std::string& path);

std::vector<std::array<double, 2>> kmeans_anchors(
    const std::vector<std::array<double, 2>>& sizes, int m, std::uint64_t seed);

}  // namespace usvtrack::det
