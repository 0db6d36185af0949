#include "usvtrack/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "usvtrack/checkpoint.hpp"
#include "usvtrack/dataset.hpp"

namespace usvtrack::det {

using nn::Tensor;

namespace {

constexpr double kEps = 1e-7;       // probability clamp, shared with the GAN losses
constexpr double kLogSizeCap = 6.0; // |tw|,|th| saturation for exp decode

inline double clamp_prob(double p) { return std::clamp(p, kEps, 1.0 - kEps); }

inline double bce_term(double p, double y) {
  p = clamp_prob(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

inline double bce_term_dp(double p, double y) {
  if (p < kEps || p > 1.0 - kEps) return 0.0;
  return -y / p + (1.0 - y) / (1.0 - p);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// IoU of two sizes centered on each other (anchor matching)
double size_iou(double w1, double h1, double w2, double h2) {
  const double inter = std::min(w1, w2) * std::min(h1, h2);
  const double uni = w1 * h1 + w2 * h2 - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace

TargetAssignment assign_targets(const std::vector<std::pair<int, BoundingBox>>& truths,
                                const GridSpec& grid) {
  if (grid.k < 1 || grid.anchors_per_cell < 1 || grid.num_classes < 1)
    throw std::invalid_argument("assign_targets: invalid grid spec");
  if (static_cast<int>(grid.anchors.size()) != grid.anchors_per_cell)
    throw std::invalid_argument("assign_targets: anchor list size != M");

  TargetAssignment a;
  a.k = grid.k;
  a.m = grid.anchors_per_cell;
  a.num_classes = grid.num_classes;
  a.lambda_noobj = grid.lambda_noobj;
  a.slots.assign(static_cast<std::size_t>(grid.k) * grid.k * grid.anchors_per_cell, {});

  for (const auto& [cls, box] : truths) {
    if (cls < 0 || cls >= grid.num_classes)
      throw std::invalid_argument("assign_targets: class_id " + std::to_string(cls) +
                                  " outside [0," + std::to_string(grid.num_classes) + ")");
    if (!(box.w > 0.0 && box.h > 0.0))
      throw std::invalid_argument("assign_targets: degenerate truth box");
    const int col = std::min(grid.k - 1, std::max(0, static_cast<int>(box.cx * grid.k)));
    const int row = std::min(grid.k - 1, std::max(0, static_cast<int>(box.cy * grid.k)));
    int best = 0;
    double best_iou = -1.0;
    for (int j = 0; j < grid.anchors_per_cell; ++j) {
      const double v = size_iou(box.w, box.h, grid.anchors[j][0], grid.anchors[j][1]);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    auto& slot = a.slots[a.index(row * grid.k + col, best)];
    if (slot.positive) {
      a.dropped++;
      if (box.area() <= slot.truth.area()) {
        std::clog << "assign_targets: dropping truth box (cell collision, smaller area)\n";
        continue;
      }
      std::clog << "assign_targets: replacing truth box (cell collision, smaller area)\n";
    }
    slot.positive = true;
    slot.truth = box;
    slot.class_id = cls;
  }
  return a;
}

double clc_loss(const TargetAssignment& assign, const std::vector<double>& class_probs) {
  if (class_probs.size() != assign.slots.size() * assign.num_classes)
    throw std::invalid_argument("clc_loss: class_probs size mismatch");
  double loss = 0.0;
  for (std::size_t s = 0; s < assign.slots.size(); ++s) {
    if (!assign.slots[s].positive) continue;
    for (int c = 0; c < assign.num_classes; ++c) {
      const double y = (c == assign.slots[s].class_id) ? 1.0 : 0.0;
      loss += bce_term(class_probs[s * assign.num_classes + c], y);
    }
  }
  return loss;
}

double conf_loss(const TargetAssignment& assign, const std::vector<double>& confidence) {
  if (confidence.size() != assign.slots.size())
    throw std::invalid_argument("conf_loss: confidence size mismatch");
  double loss = 0.0;
  for (std::size_t s = 0; s < assign.slots.size(); ++s) {
    if (assign.slots[s].positive)
      loss += bce_term(confidence[s], 1.0);
    else
      loss += assign.lambda_noobj * bce_term(confidence[s], 0.0);
  }
  return loss;
}

double box_loss_total(const TargetAssignment& assign, const std::vector<BoundingBox>& boxes) {
  if (boxes.size() != assign.slots.size())
    throw std::invalid_argument("box_loss_total: box list size mismatch");
  double loss = 0.0;
  for (std::size_t s = 0; s < assign.slots.size(); ++s)
    if (assign.slots[s].positive) loss += box_loss(boxes[s], assign.slots[s].truth);
  return loss;
}

double total_loss(const TargetAssignment& assign, const GridPredictions& pred) {
  return clc_loss(assign, pred.class_probs) + box_loss_total(assign, pred.boxes) +
         conf_loss(assign, pred.confidence);
}

// ---- network ----

DetectorNet::DetectorNet(int base_width, const GridSpec& grid_spec, int input_h, int input_w)
    : base(base_width),
      grid(grid_spec),
      native_h(input_h),
      native_w(input_w),
      conv1(3, base_width, 3, 2, 1),
      conv2(base_width, 2 * base_width, 3, 2, 1),
      conv3(2 * base_width, 4 * base_width, 3, 2, 1),
      head(4 * base_width, grid_spec.anchors_per_cell * (5 + grid_spec.num_classes), 1, 1, 0),
      bn1(base_width),
      bn2(2 * base_width),
      bn3(4 * base_width) {
  if (input_h != input_w || input_h % 8 != 0)
    throw std::invalid_argument("DetectorNet: input must be square with side divisible by 8");
  if (grid.k != input_h / 8)
    throw std::invalid_argument("DetectorNet: grid.k must equal input side / 8");
}

void DetectorNet::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
  conv3.init(rng);
  head.init(rng);
}

std::vector<nn::ParamRef> DetectorNet::params() {
  std::vector<nn::ParamRef> out;
  conv1.collect("conv1", out);
  bn1.collect("bn1", out);
  conv2.collect("conv2", out);
  bn2.collect("bn2", out);
  conv3.collect("conv3", out);
  bn3.collect("bn3", out);
  head.collect("head", out);
  return out;
}

void DetectorNet::zero_grad() {
  for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

Tensor DetectorNet::forward(const Tensor& x, bool training) {
  if (x.h != native_h || x.w != native_w)
    throw std::invalid_argument("DetectorNet: expected " + std::to_string(native_h) + "x" +
                                std::to_string(native_w) + " input, got " +
                                std::to_string(x.h) + "x" + std::to_string(x.w));
  Tensor t = act1.forward(bn1.forward(conv1.forward(x), training));
  t = act2.forward(bn2.forward(conv2.forward(t), training));
  t = act3.forward(bn3.forward(conv3.forward(t), training));
  return head.forward(t);
}

Tensor DetectorNet::backward(const Tensor& draw) {
  Tensor d = head.backward(draw);
  d = conv3.backward(bn3.backward(act3.backward(d)));
  d = conv2.backward(bn2.backward(act2.backward(d)));
  return conv1.backward(bn1.backward(act1.backward(d)));
}

GridPredictions decode(const Tensor& raw, int sample, const GridSpec& grid) {
  const int k = grid.k, m = grid.anchors_per_cell, c = grid.num_classes;
  if (raw.c != m * (5 + c) || raw.h != k || raw.w != k)
    throw std::invalid_argument("decode: raw tensor shape mismatch");

  GridPredictions out;
  out.k = k;
  out.m = m;
  out.num_classes = c;
  out.boxes.resize(static_cast<std::size_t>(k) * k * m);
  out.confidence.resize(out.boxes.size());
  out.class_probs.resize(out.boxes.size() * c);

  const double* base = raw.sample(sample);
  const std::size_t plane = static_cast<std::size_t>(k) * k;
  auto at = [&](int ch, int row, int col) {
    return base[plane * ch + static_cast<std::size_t>(row) * k + col];
  };

  for (int row = 0; row < k; ++row)
    for (int col = 0; col < k; ++col)
      for (int a = 0; a < m; ++a) {
        const int ch0 = a * (5 + c);
        const std::size_t slot = (static_cast<std::size_t>(row) * k + col) * m + a;
        const double tw = std::clamp(at(ch0 + 2, row, col), -kLogSizeCap, kLogSizeCap);
        const double th = std::clamp(at(ch0 + 3, row, col), -kLogSizeCap, kLogSizeCap);
        out.boxes[slot] = {(col + sigmoid(at(ch0 + 0, row, col))) / k,
                           (row + sigmoid(at(ch0 + 1, row, col))) / k,
                           grid.anchors[a][0] * std::exp(tw),
                           grid.anchors[a][1] * std::exp(th)};
        out.confidence[slot] = sigmoid(at(ch0 + 4, row, col));
        // softmax over class logits
        double mx = at(ch0 + 5, row, col);
        for (int cc = 1; cc < c; ++cc) mx = std::max(mx, at(ch0 + 5 + cc, row, col));
        double z = 0.0;
        for (int cc = 0; cc < c; ++cc) z += std::exp(at(ch0 + 5 + cc, row, col) - mx);
        for (int cc = 0; cc < c; ++cc)
          out.class_probs[slot * c + cc] = std::exp(at(ch0 + 5 + cc, row, col) - mx) / z;
      }
  return out;
}

namespace {

// per-image loss; when draw != nullptr the gradient lands in that sample's
// slice, scaled by `scale`
double loss_and_grad(const Tensor& raw, int sample, const TargetAssignment& assign,
                     const GridSpec& grid, Tensor* draw, double scale) {
  const GridPredictions pred = decode(raw, sample, grid);
  const double loss = total_loss(assign, pred);
  if (!draw) return loss;

  const int k = grid.k, m = grid.anchors_per_cell, c = grid.num_classes;
  const double* base = raw.sample(sample);
  double* gbase = draw->sample(sample);
  const std::size_t plane = static_cast<std::size_t>(k) * k;
  auto raw_at = [&](int ch, int row, int col) {
    return base[plane * ch + static_cast<std::size_t>(row) * k + col];
  };
  auto grad_at = [&](int ch, int row, int col) -> double& {
    return gbase[plane * ch + static_cast<std::size_t>(row) * k + col];
  };

  for (int row = 0; row < k; ++row)
    for (int col = 0; col < k; ++col)
      for (int a = 0; a < m; ++a) {
        const int ch0 = a * (5 + c);
        const std::size_t slot = (static_cast<std::size_t>(row) * k + col) * m + a;
        const AssignedSlot& as = assign.slots[slot];

        // confidence head
        {
          const double p = pred.confidence[slot];
          const double weight = as.positive ? 1.0 : assign.lambda_noobj;
          const double y = as.positive ? 1.0 : 0.0;
          grad_at(ch0 + 4, row, col) += scale * weight * bce_term_dp(p, y) * p * (1.0 - p);
        }
        if (!as.positive) continue;

        // class head: softmax jacobian against per-class BCE
        {
          std::vector<double> g(c);
          for (int cc = 0; cc < c; ++cc) {
            const double y = (cc == as.class_id) ? 1.0 : 0.0;
            g[cc] = bce_term_dp(pred.class_probs[slot * c + cc], y);
          }
          for (int kk = 0; kk < c; ++kk) {
            double acc = 0.0;
            const double pk = pred.class_probs[slot * c + kk];
            for (int cc = 0; cc < c; ++cc) {
              const double pc = pred.class_probs[slot * c + cc];
              acc += g[cc] * pc * ((cc == kk ? 1.0 : 0.0) - pk);
            }
            grad_at(ch0 + 5 + kk, row, col) += scale * acc;
          }
        }

        // box head through the decode
        {
          double bg[4];
          box_loss_grad(pred.boxes[slot], as.truth, bg);
          const double sx = sigmoid(raw_at(ch0 + 0, row, col));
          const double sy = sigmoid(raw_at(ch0 + 1, row, col));
          grad_at(ch0 + 0, row, col) += scale * bg[0] * sx * (1.0 - sx) / k;
          grad_at(ch0 + 1, row, col) += scale * bg[1] * sy * (1.0 - sy) / k;
          const double tw = raw_at(ch0 + 2, row, col);
          const double th = raw_at(ch0 + 3, row, col);
          if (std::fabs(tw) < kLogSizeCap)
            grad_at(ch0 + 2, row, col) += scale * bg[2] * pred.boxes[slot].w;
          if (std::fabs(th) < kLogSizeCap)
            grad_at(ch0 + 3, row, col) += scale * bg[3] * pred.boxes[slot].h;
        }
      }
  return loss;
}

}  // namespace

double detector_training_loss(DetectorNet& net, const Tensor& x,
                              const std::vector<TargetAssignment>& assigns, bool do_backward) {
  if (static_cast<int>(assigns.size()) != x.n)
    throw std::invalid_argument("detector_training_loss: assignment/batch size mismatch");
  Tensor raw = net.forward(x, true);
  const double scale = 1.0 / x.n;
  double total = 0.0;
  if (do_backward) {
    net.zero_grad();
    Tensor draw(raw.n, raw.c, raw.h, raw.w);
    for (int i = 0; i < x.n; ++i)
      total += loss_and_grad(raw, i, assigns[i], net.grid, &draw, scale);
    net.backward(draw);
  } else {
    for (int i = 0; i < x.n; ++i)
      total += loss_and_grad(raw, i, assigns[i], net.grid, nullptr, scale);
  }
  return total * scale;
}

// ---- anchors ----

std::vector<std::array<double, 2>> kmeans_anchors(
    const std::vector<std::array<double, 2>>& sizes, int m, std::uint64_t seed) {
  if (sizes.empty()) throw std::invalid_argument("kmeans_anchors: no box sizes");
  Rng rng(mix_seed(seed, 0xa2c4));
  std::vector<std::array<double, 2>> centers;
  for (int tries = 0; static_cast<int>(centers.size()) < m; ++tries) {
    auto cand = sizes[rng.below(sizes.size())];
    if (tries > 64) {  // not enough distinct sizes; jitter deterministically
      cand[0] *= 1.0 + 0.1 * (centers.size() + 1);
      cand[1] *= 1.0 + 0.07 * (centers.size() + 1);
    }
    bool dup = false;
    for (const auto& c : centers) dup |= (c[0] == cand[0] && c[1] == cand[1]);
    if (!dup) centers.push_back(cand);
  }

  std::vector<int> owner(sizes.size(), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
      int best = 0;
      double best_d = -1.0;
      for (int j = 0; j < m; ++j) {
        const double d = 1.0 - size_iou(sizes[i][0], sizes[i][1], centers[j][0], centers[j][1]);
        if (best_d < 0.0 || d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (owner[i] != best) {
        owner[i] = best;
        changed = true;
      }
    }
    for (int j = 0; j < m; ++j) {
      double sw = 0.0, sh = 0.0;
      int cnt = 0;
      for (std::size_t i = 0; i < sizes.size(); ++i)
        if (owner[i] == j) {
          sw += sizes[i][0];
          sh += sizes[i][1];
          ++cnt;
        }
      if (cnt > 0) centers[j] = {sw / cnt, sh / cnt};
    }
    if (!changed) break;
  }
  std::sort(centers.begin(), centers.end(),
            [](const auto& a, const auto& b) { return a[0] * a[1] < b[0] * b[1]; });
  return centers;
}

// ---- training ----

DetectorCheckpoint train_detector(const data::DatasetManifest& manifest,
                                  const DetTrainConfig& cfg) {
  const auto frames = manifest.split(true);
  if (frames.empty()) throw std::invalid_argument("train_detector: empty training split");

  std::vector<ImageBuffer> imgs;
  std::vector<std::vector<std::pair<int, BoundingBox>>> truths;
  int annotated = 0;
  for (const auto* f : frames) {
    imgs.push_back(load_image(manifest.resolve(cfg.train_on_hazy ? f->hazy_path : f->clear_path)));
    truths.push_back(f->boxes);
    annotated += f->boxes.empty() ? 0 : 1;
  }
  if (annotated == 0)
    throw std::invalid_argument("train_detector: dataset has no annotated frames");
  const int side = imgs[0].height;
  for (const auto& im : imgs)
    if (im.height != side || im.width != side)
      throw std::invalid_argument("train_detector: images must be square and uniform");

  GridSpec grid;
  grid.k = side / 8;
  grid.anchors_per_cell = cfg.anchors_per_cell;
  grid.num_classes = cfg.num_classes;
  grid.lambda_noobj = cfg.lambda_noobj;
  std::vector<std::array<double, 2>> sizes;
  for (const auto& t : truths)
    for (const auto& [cls, b] : t) sizes.push_back({b.w, b.h});
  grid.anchors = kmeans_anchors(sizes, grid.anchors_per_cell, cfg.seed);

  std::vector<TargetAssignment> assigns;
  assigns.reserve(truths.size());
  for (const auto& t : truths) assigns.push_back(assign_targets(t, grid));

  DetectorCheckpoint ck;
  ck.cfg = cfg;
  ck.grid = grid;
  ck.net = DetectorNet(cfg.base_width, grid, side, side);
  Rng init_rng(mix_seed(cfg.seed, 0xde7));
  ck.net.init(init_rng);

  nn::Adam opt(ck.net.params(), {cfg.lr, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
  const int n = static_cast<int>(imgs.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng(mix_seed(cfg.seed, 0xde70000ULL + epoch));
    erng.shuffle(order);
    double sum = 0.0;
    int counted = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      std::vector<const ImageBuffer*> batch(bs);
      std::vector<TargetAssignment> batch_assign(bs);
      for (int i = 0; i < bs; ++i) {
        batch[i] = &imgs[order[start + i]];
        batch_assign[i] = assigns[order[start + i]];
      }
      Tensor x = nn::images_to_batch(batch);
      const double loss = detector_training_loss(ck.net, x, batch_assign, true);
      opt.step();
      sum += loss * bs;
      counted += bs;
    }
    ck.history.push_back({epoch, sum / counted});
  }
  return ck;
}

std::vector<Detection> detect(DetectorCheckpoint& ckpt, const ImageBuffer& image,
                              double iou_threshold, double conf_threshold) {
  const int native = ckpt.net.native_h;
  ImageBuffer work;
  if (image.height == native && image.width == native) {
    work = image;
  } else if (image.height % native == 0 && image.width == image.height) {
    work = downscale(image, image.height / native);
  } else {
    throw std::invalid_argument("detect: image side must be " + std::to_string(native) +
                                " or a square integer multiple of it, got " +
                                std::to_string(image.height) + "x" + std::to_string(image.width));
  }

  Tensor raw = ckpt.net.forward(nn::image_to_tensor(work), false);
  GridPredictions pred = decode(raw, 0, ckpt.grid);

  std::vector<Detection> dets;
  for (std::size_t s = 0; s < pred.boxes.size(); ++s) {
    int best_cls = 0;
    for (int c = 1; c < pred.num_classes; ++c)
      if (pred.class_probs[s * pred.num_classes + c] >
          pred.class_probs[s * pred.num_classes + best_cls])
        best_cls = c;
    // clip to the unit square; drop anything that leaves no area inside
    const double x1 = std::max(0.0, pred.boxes[s].x1());
    const double y1 = std::max(0.0, pred.boxes[s].y1());
    const double x2 = std::min(1.0, pred.boxes[s].x2());
    const double y2 = std::min(1.0, pred.boxes[s].y2());
    if (x2 <= x1 || y2 <= y1) continue;
    dets.push_back({BoundingBox::from_corners(x1, y1, x2, y2), best_cls, pred.confidence[s]});
  }
  return nms(std::move(dets), iou_threshold, conf_threshold);
}

// ---- serialization ----

namespace {

std::vector<ckpt::NamedVec> det_state(DetectorCheckpoint& ck) {
  std::vector<ckpt::NamedVec> state;
  for (auto& p : ck.net.params()) state.push_back({p.name, p.value});
  state.push_back({"bn1.rm", &ck.net.bn1.running_mean});
  state.push_back({"bn1.rv", &ck.net.bn1.running_var});
  state.push_back({"bn2.rm", &ck.net.bn2.running_mean});
  state.push_back({"bn2.rv", &ck.net.bn2.running_var});
  state.push_back({"bn3.rm", &ck.net.bn3.running_mean});
  state.push_back({"bn3.rv", &ck.net.bn3.running_var});
  return state;
}

}  // namespace

void save_detector_checkpoint(const DetectorCheckpoint& ckpt_in, const std::string& path) {
  auto& ck = const_cast<DetectorCheckpoint&>(ckpt_in);
  nlohmann::json anchors = nlohmann::json::array();
  for (const auto& a : ck.grid.anchors) anchors.push_back({a[0], a[1]});
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : ck.history) history.push_back({r.epoch, r.loss});
  nlohmann::json meta{{"base_width", ck.cfg.base_width},
                      {"native", ck.net.native_h},
                      {"k", ck.grid.k},
                      {"m", ck.grid.anchors_per_cell},
                      {"c", ck.grid.num_classes},
                      {"lambda_noobj", ck.grid.lambda_noobj},
                      {"anchors", anchors},
                      {"epochs", ck.cfg.epochs},
                      {"batch_size", ck.cfg.batch_size},
                      {"lr", ck.cfg.lr},
                      {"seed", ck.cfg.seed},
                      {"train_on_hazy", ck.cfg.train_on_hazy},
                      {"history", history}};
  ckpt::save_checkpoint_file(path, "detector", meta, det_state(ck));
}

DetectorCheckpoint load_detector_checkpoint(const std::string& path) {
  ckpt::CheckpointFile file = ckpt::load_checkpoint_file(path, "detector");
  DetectorCheckpoint ck;
  ck.cfg.base_width = file.meta.at("base_width").get<int>();
  ck.cfg.epochs = file.meta.at("epochs").get<int>();
  ck.cfg.batch_size = file.meta.at("batch_size").get<int>();
  ck.cfg.lr = file.meta.at("lr").get<double>();
  ck.cfg.seed = file.meta.at("seed").get<std::uint64_t>();
  ck.cfg.train_on_hazy = file.meta.at("train_on_hazy").get<bool>();
  ck.grid.k = file.meta.at("k").get<int>();
  ck.grid.anchors_per_cell = file.meta.at("m").get<int>();
  ck.grid.num_classes = file.meta.at("c").get<int>();
  ck.grid.lambda_noobj = file.meta.at("lambda_noobj").get<double>();
  for (const auto& a : file.meta.at("anchors"))
    ck.grid.anchors.push_back({a.at(0).get<double>(), a.at(1).get<double>()});
  ck.cfg.anchors_per_cell = ck.grid.anchors_per_cell;
  ck.cfg.num_classes = ck.grid.num_classes;
  ck.cfg.lambda_noobj = ck.grid.lambda_noobj;
  for (const auto& h : file.meta.at("history"))
    ck.history.push_back({h.at(0).get<int>(), h.at(1).get<double>()});
  const int native = file.meta.at("native").get<int>();
  ck.net = DetectorNet(ck.cfg.base_width, ck.grid, native, native);
  ckpt::bind_arrays(file, det_state(ck));
  return ck;
}

void write_det_loss_csv(const std::vector<DetLossRecord>& history, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_det_loss_csv: cannot open " + path);
  std::fputs("epoch,loss\n", f);
  for (const auto& r : history) std::fprintf(f, "%d,%.17g\n", r.epoch, r.loss);
  std::fclose(f);
}

}  // namespace usvtrack::det
