#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usvtrack/image.hpp"
#include "usvtrack/nn.hpp"

namespace usvtrack::data {
struct DatasetManifest;
}

namespace usvtrack::gan {

// ---- losses (Eq. analogues on probabilities / images) ----

inline constexpr double kBceEps = 1e-7;

double l1_loss(const ImageBuffer& pred, const ImageBuffer& truth);
double mse_loss(const ImageBuffer& pred, const ImageBuffer& truth);

// Binary cross-entropy on probabilities; inputs clamped to [eps, 1-eps].
double bce_loss(double pred_prob, double label);
double bce_loss(const std::vector<double>& pred_prob, const std::vector<double>& label);

struct LossWeights {
  double w_l1 = 1.0;
  double w_mse = 1.0;
  double w_bce = 1.0;
};

// w1*L1 + w_mse*MSE + adversarial BCE against the real label.
double generator_total_loss(const ImageBuffer& pred, const ImageBuffer& truth,
                            double disc_score_on_pred, const LossWeights& w = {});

// ---- networks ----

// Encoder-decoder with skip connections: three stride-2 encoder stages, one
// residual bottleneck block, three upsample+conv decoder stages. Fully
// convolutional; accepts any H, W divisible by 8. Output through a sigmoid.
struct GeneratorNet {
  int base = 16;

  nn::Conv2d enc1, enc2, enc3, res_a, res_b, dec1, dec2, out_conv;
  nn::BatchNorm2d bn_e1, bn_e2, bn_e3, bn_ra, bn_rb, bn_d1, bn_d2;
  nn::ReLU relu_e1, relu_e2, relu_e3, relu_ra, relu_res, relu_d1, relu_d2;
  nn::Sigmoid out_act;

  explicit GeneratorNet(int base_width = 16);
  void init(Rng& rng);
  std::vector<nn::ParamRef> params();
  void zero_grad();

  nn::Tensor forward(const nn::Tensor& x, bool training);
  nn::Tensor backward(const nn::Tensor& dout);

  static constexpr int kDownsampleFactor = 8;

 private:
  nn::Tensor x_, e3_;  // skip wiring caches
};

// Four stride-2 conv stages over the 6-channel (hazy, candidate) pair,
// flattened into one sigmoid unit. Input size is fixed at construction.
struct DiscriminatorNet {
  int base = 16;
  int native_h = 64, native_w = 64;

  nn::Conv2d conv1, conv2, conv3, conv4;
  nn::BatchNorm2d bn1, bn2, bn3, bn4;
  nn::LeakyReLU act1, act2, act3, act4;
  nn::Linear fc;
  nn::Sigmoid out_act;

  DiscriminatorNet(int base_width, int input_h, int input_w);
  void init(Rng& rng);
  std::vector<nn::ParamRef> params();
  void zero_grad();

  // x: [n, 6, native_h, native_w] -> [n, 1, 1, 1] probabilities in (0,1)
  nn::Tensor forward(const nn::Tensor& x, bool training);
  nn::Tensor backward(const nn::Tensor& dprob);
};

// probability of the (hazy, candidate) pair being a real pair
double discriminator_forward(DiscriminatorNet& net, const ImageBuffer& hazy,
                             const ImageBuffer& candidate);

ImageBuffer generator_forward(GeneratorNet& net, const ImageBuffer& hazy);

// ---- training ----

struct TrainConfig {
  int epochs = 100;
  int batch_size = 8;
  double lr_g = 2e-4;
  double lr_d = 2e-4;
  std::uint64_t seed = 1;
  LossWeights weights;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int base_width = 16;
};

struct LossRecord {
  int epoch = 0;  // 1-based
  double gen_loss = 0.0;
  double disc_loss = 0.0;
};

struct GanCheckpoint {
  TrainConfig cfg;
  GeneratorNet gen;
  DiscriminatorNet disc;
  int native_h = 64, native_w = 64;
  std::vector<LossRecord> history;

  GanCheckpoint() : gen(16), disc(16, 64, 64) {}
};

// Alternating conditional-GAN updates: a discriminator step on real (label 1)
// and generated (label 0) pairs, then a generator step on the composite loss.
// Deterministic given cfg.seed: fixed init and a seeded per-epoch data order.
GanCheckpoint train(const data::DatasetManifest& manifest, const TrainConfig& cfg);

// generator_forward with the checkpoint's parameters, inference mode
ImageBuffer dehaze(GanCheckpoint& ckpt, const ImageBuffer& hazy);

void save_gan_checkpoint(const GanCheckpoint& ckpt, const std::string& path);
GanCheckpoint load_gan_checkpoint(const std::string& path);

void write_loss_csv(const std::vector<LossRecord>& history, const std::string& path);

// training-step objectives, exposed for the finite-difference checks
double generator_step_loss(GeneratorNet& gen, DiscriminatorNet& disc,
                           const nn::Tensor& hazy, const nn::Tensor& clear,
                           const LossWeights& w, bool do_backward);
double discriminator_step_loss(DiscriminatorNet& disc, const nn::Tensor& hazy,
                               const nn::Tensor& clear, const nn::Tensor& fake,
                               bool do_backward);

}  // namespace usvtrack::gan
