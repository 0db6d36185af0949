#include "usvtrack/gan.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "usvtrack/checkpoint.hpp"
#include "usvtrack/dataset.hpp"

namespace usvtrack::gan {

using nn::Tensor;

// ---- losses ----

namespace {

void require_same_shape(const ImageBuffer& a, const ImageBuffer& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

inline double clamp_prob(double p) { return std::clamp(p, kBceEps, 1.0 - kBceEps); }

inline double bce_term(double p, double y) {
  p = clamp_prob(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

// d bce_term / d p; zero where the clamp is active
inline double bce_term_dp(double p, double y) {
  if (p < kBceEps || p > 1.0 - kBceEps) return 0.0;
  return -y / p + (1.0 - y) / (1.0 - p);
}

void add_inplace(Tensor& a, const Tensor& b) {
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] += b.v[i];
}

}  // namespace

double l1_loss(const ImageBuffer& pred, const ImageBuffer& truth) {
  require_same_shape(pred, truth, "l1_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i)
    acc += std::fabs(pred.data[i] - truth.data[i]);
  return acc / static_cast<double>(pred.data.size());
}

double mse_loss(const ImageBuffer& pred, const ImageBuffer& truth) {
  require_same_shape(pred, truth, "mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - truth.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.data.size());
}

double bce_loss(double pred_prob, double label) { return bce_term(pred_prob, label); }

double bce_loss(const std::vector<double>& pred_prob, const std::vector<double>& label) {
  if (pred_prob.size() != label.size() || pred_prob.empty())
    throw std::invalid_argument("bce_loss: batch size mismatch or empty");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred_prob.size(); ++i) acc += bce_term(pred_prob[i], label[i]);
  return acc / static_cast<double>(pred_prob.size());
}

double generator_total_loss(const ImageBuffer& pred, const ImageBuffer& truth,
                            double disc_score_on_pred, const LossWeights& w) {
  return w.w_l1 * l1_loss(pred, truth) + w.w_mse * mse_loss(pred, truth) +
         w.w_bce * bce_loss(disc_score_on_pred, 1.0);
}

// ---- generator ----

GeneratorNet::GeneratorNet(int bw)
    : base(bw),
      enc1(3, bw, 3, 2, 1),
      enc2(bw, 2 * bw, 3, 2, 1),
      enc3(2 * bw, 4 * bw, 3, 2, 1),
      res_a(4 * bw, 4 * bw, 3, 1, 1),
      res_b(4 * bw, 4 * bw, 3, 1, 1),
      dec1(6 * bw, 2 * bw, 3, 1, 1),
      dec2(3 * bw, bw, 3, 1, 1),
      out_conv(bw + 3, 3, 3, 1, 1),
      bn_e1(bw),
      bn_e2(2 * bw),
      bn_e3(4 * bw),
      bn_ra(4 * bw),
      bn_rb(4 * bw),
      bn_d1(2 * bw),
      bn_d2(bw) {}

void GeneratorNet::init(Rng& rng) {
  enc1.init(rng);
  enc2.init(rng);
  enc3.init(rng);
  res_a.init(rng);
  res_b.init(rng);
  dec1.init(rng);
  dec2.init(rng);
  out_conv.init(rng);
}

std::vector<nn::ParamRef> GeneratorNet::params() {
  std::vector<nn::ParamRef> out;
  enc1.collect("enc1", out);
  bn_e1.collect("bn_e1", out);
  enc2.collect("enc2", out);
  bn_e2.collect("bn_e2", out);
  enc3.collect("enc3", out);
  bn_e3.collect("bn_e3", out);
  res_a.collect("res_a", out);
  bn_ra.collect("bn_ra", out);
  res_b.collect("res_b", out);
  bn_rb.collect("bn_rb", out);
  dec1.collect("dec1", out);
  bn_d1.collect("bn_d1", out);
  dec2.collect("dec2", out);
  bn_d2.collect("bn_d2", out);
  out_conv.collect("out_conv", out);
  return out;
}

void GeneratorNet::zero_grad() {
  for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

Tensor GeneratorNet::forward(const Tensor& x, bool training) {
  if (x.h % kDownsampleFactor != 0 || x.w % kDownsampleFactor != 0)
    throw std::invalid_argument("generator: input " + std::to_string(x.h) + "x" +
                                std::to_string(x.w) + " must be a multiple of " +
                                std::to_string(kDownsampleFactor));
  x_ = x;
  Tensor e1 = relu_e1.forward(bn_e1.forward(enc1.forward(x), training));
  Tensor e2 = relu_e2.forward(bn_e2.forward(enc2.forward(e1), training));
  Tensor e3 = relu_e3.forward(bn_e3.forward(enc3.forward(e2), training));
  e3_ = e3;

  Tensor r = relu_ra.forward(bn_ra.forward(res_a.forward(e3), training));
  r = bn_rb.forward(res_b.forward(r), training);
  add_inplace(r, e3);
  Tensor bneck = relu_res.forward(r);

  Tensor d1 = relu_d1.forward(
      bn_d1.forward(dec1.forward(nn::concat_channels(nn::upsample2x(bneck), e2)), training));
  Tensor d2 = relu_d2.forward(
      bn_d2.forward(dec2.forward(nn::concat_channels(nn::upsample2x(d1), e1)), training));
  return out_act.forward(out_conv.forward(nn::concat_channels(nn::upsample2x(d2), x)));
}

Tensor GeneratorNet::backward(const Tensor& dout) {
  Tensor d = out_conv.backward(out_act.backward(dout));
  Tensor d_up, d_skip_x;
  nn::split_channels(d, base, d_up, d_skip_x);

  d = nn::upsample2x_backward(d_up);  // wrt d2
  d = dec2.backward(bn_d2.backward(relu_d2.backward(d)));
  Tensor d_up1, d_e1_skip;
  nn::split_channels(d, 2 * base, d_up1, d_e1_skip);

  d = nn::upsample2x_backward(d_up1);  // wrt d1
  d = dec1.backward(bn_d1.backward(relu_d1.backward(d)));
  Tensor d_up0, d_e2_skip;
  nn::split_channels(d, 4 * base, d_up0, d_e2_skip);

  Tensor d_sum = relu_res.backward(nn::upsample2x_backward(d_up0));  // wrt r + e3
  Tensor d_res =
      res_a.backward(bn_ra.backward(relu_ra.backward(res_b.backward(bn_rb.backward(d_sum)))));
  Tensor d_e3 = d_sum;
  add_inplace(d_e3, d_res);

  Tensor d_e2 = enc3.backward(bn_e3.backward(relu_e3.backward(d_e3)));
  add_inplace(d_e2, d_e2_skip);
  Tensor d_e1 = enc2.backward(bn_e2.backward(relu_e2.backward(d_e2)));
  add_inplace(d_e1, d_e1_skip);
  Tensor dx = enc1.backward(bn_e1.backward(relu_e1.backward(d_e1)));
  add_inplace(dx, d_skip_x);
  return dx;
}

// ---- discriminator ----

namespace {
int spatial_after_4(int d) {
  for (int i = 0; i < 4; ++i) d = (d - 1) / 2 + 1;
  return d;
}
}  // namespace

DiscriminatorNet::DiscriminatorNet(int bw, int input_h, int input_w)
    : base(bw),
      native_h(input_h),
      native_w(input_w),
      conv1(6, bw, 3, 2, 1),
      conv2(bw, 2 * bw, 3, 2, 1),
      conv3(2 * bw, 4 * bw, 3, 2, 1),
      conv4(4 * bw, 4 * bw, 3, 2, 1),
      bn1(bw),
      bn2(2 * bw),
      bn3(4 * bw),
      bn4(4 * bw),
      fc(4 * bw * spatial_after_4(input_h) * spatial_after_4(input_w), 1) {}

void DiscriminatorNet::init(Rng& rng) {
  conv1.init(rng);
  conv2.init(rng);
  conv3.init(rng);
  conv4.init(rng);
  fc.init(rng);
}

std::vector<nn::ParamRef> DiscriminatorNet::params() {
  std::vector<nn::ParamRef> out;
  conv1.collect("conv1", out);
  bn1.collect("bn1", out);
  conv2.collect("conv2", out);
  bn2.collect("bn2", out);
  conv3.collect("conv3", out);
  bn3.collect("bn3", out);
  conv4.collect("conv4", out);
  bn4.collect("bn4", out);
  fc.collect("fc", out);
  return out;
}

void DiscriminatorNet::zero_grad() {
  for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

Tensor DiscriminatorNet::forward(const Tensor& x, bool training) {
  if (x.c != 6 || x.h != native_h || x.w != native_w)
    throw std::invalid_argument("discriminator: expected 6x" + std::to_string(native_h) + "x" +
                                std::to_string(native_w) + " input, got " +
                                std::to_string(x.c) + "x" + std::to_string(x.h) + "x" +
                                std::to_string(x.w));
  Tensor t = act1.forward(bn1.forward(conv1.forward(x), training));
  t = act2.forward(bn2.forward(conv2.forward(t), training));
  t = act3.forward(bn3.forward(conv3.forward(t), training));
  t = act4.forward(bn4.forward(conv4.forward(t), training));
  return out_act.forward(fc.forward(t));
}

Tensor DiscriminatorNet::backward(const Tensor& dprob) {
  Tensor d = fc.backward(out_act.backward(dprob));
  d = conv4.backward(bn4.backward(act4.backward(d)));
  d = conv3.backward(bn3.backward(act3.backward(d)));
  d = conv2.backward(bn2.backward(act2.backward(d)));
  return conv1.backward(bn1.backward(act1.backward(d)));
}

double discriminator_forward(DiscriminatorNet& net, const ImageBuffer& hazy,
                             const ImageBuffer& candidate) {
  if (!hazy.same_shape(candidate))
    throw std::invalid_argument("discriminator_forward: dimension mismatch");
  Tensor pair =
      nn::concat_channels(nn::image_to_tensor(hazy), nn::image_to_tensor(candidate));
  return net.forward(pair, false).v[0];
}

ImageBuffer generator_forward(GeneratorNet& net, const ImageBuffer& hazy) {
  Tensor out = net.forward(nn::image_to_tensor(hazy), false);
  ImageBuffer img = nn::tensor_to_image(out, 0);
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

// ---- training objectives ----

double generator_step_loss(GeneratorNet& gen, DiscriminatorNet& disc, const Tensor& hazy,
                           const Tensor& clear, const LossWeights& w, bool do_backward) {
  Tensor pred = gen.forward(hazy, true);
  const double n_el = static_cast<double>(pred.size());
  double l1 = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    const double d = pred.v[i] - clear.v[i];
    l1 += std::fabs(d);
    mse += d * d;
  }
  l1 /= n_el;
  mse /= n_el;

  Tensor score = disc.forward(nn::concat_channels(hazy, pred), true);
  const double n_b = static_cast<double>(score.n);
  double bce = 0.0;
  for (int i = 0; i < score.n; ++i) bce += bce_term(score.v[i], 1.0);
  bce /= n_b;

  const double loss = w.w_l1 * l1 + w.w_mse * mse + w.w_bce * bce;
  if (!do_backward) return loss;

  gen.zero_grad();
  Tensor dscore(score.n, 1, 1, 1);
  for (int i = 0; i < score.n; ++i)
    dscore.v[i] = w.w_bce * bce_term_dp(score.v[i], 1.0) / n_b;
  Tensor dpair = disc.backward(dscore);
  Tensor d_hazy_part, dpred;
  nn::split_channels(dpair, 3, d_hazy_part, dpred);

  for (std::size_t i = 0; i < dpred.v.size(); ++i) {
    const double d = pred.v[i] - clear.v[i];
    const double sgn = (d > 0.0) - (d < 0.0);
    dpred.v[i] += (w.w_l1 * sgn + w.w_mse * 2.0 * d) / n_el;
  }
  gen.backward(dpred);
  return loss;
}

double discriminator_step_loss(DiscriminatorNet& disc, const Tensor& hazy, const Tensor& clear,
                               const Tensor& fake, bool do_backward) {
  if (do_backward) disc.zero_grad();
  const double n_b = static_cast<double>(hazy.n);

  Tensor score_real = disc.forward(nn::concat_channels(hazy, clear), true);
  double loss_real = 0.0;
  for (int i = 0; i < score_real.n; ++i) loss_real += bce_term(score_real.v[i], 1.0);
  loss_real /= n_b;
  if (do_backward) {
    Tensor ds(score_real.n, 1, 1, 1);
    for (int i = 0; i < score_real.n; ++i)
      ds.v[i] = 0.5 * bce_term_dp(score_real.v[i], 1.0) / n_b;
    disc.backward(ds);
  }

  Tensor score_fake = disc.forward(nn::concat_channels(hazy, fake), true);
  double loss_fake = 0.0;
  for (int i = 0; i < score_fake.n; ++i) loss_fake += bce_term(score_fake.v[i], 0.0);
  loss_fake /= n_b;
  if (do_backward) {
    Tensor ds(score_fake.n, 1, 1, 1);
    for (int i = 0; i < score_fake.n; ++i)
      ds.v[i] = 0.5 * bce_term_dp(score_fake.v[i], 0.0) / n_b;
    disc.backward(ds);
  }

  return 0.5 * (loss_real + loss_fake);
}

// ---- training loop ----

GanCheckpoint train(const data::DatasetManifest& manifest, const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(cfg.lr_g > 0.0 && cfg.lr_d > 0.0))
    throw std::invalid_argument("train: learning rates must be > 0");

  const auto train_frames = manifest.split(true);
  if (train_frames.size() < 2)
    throw std::invalid_argument("train: dataset needs at least 2 paired training frames, has " +
                                std::to_string(train_frames.size()));

  std::vector<ImageBuffer> hazy_imgs, clear_imgs;
  hazy_imgs.reserve(train_frames.size());
  clear_imgs.reserve(train_frames.size());
  for (const auto* f : train_frames) {
    hazy_imgs.push_back(load_image(manifest.resolve(f->hazy_path)));
    clear_imgs.push_back(load_image(manifest.resolve(f->clear_path)));
  }
  const int h = hazy_imgs[0].height, w = hazy_imgs[0].width;
  for (std::size_t i = 0; i < hazy_imgs.size(); ++i)
    if (hazy_imgs[i].height != h || hazy_imgs[i].width != w || !clear_imgs[i].same_shape(hazy_imgs[i]))
      throw std::invalid_argument("train: inconsistent image dimensions in dataset");
  if (h % GeneratorNet::kDownsampleFactor || w % GeneratorNet::kDownsampleFactor)
    throw std::invalid_argument("train: image side must be a multiple of 8");

  GanCheckpoint ck;
  ck.cfg = cfg;
  ck.gen = GeneratorNet(cfg.base_width);
  ck.disc = DiscriminatorNet(cfg.base_width, h, w);
  ck.native_h = h;
  ck.native_w = w;
  Rng init_rng(mix_seed(cfg.seed, 0x6a11));
  ck.gen.init(init_rng);
  ck.disc.init(init_rng);

  nn::Adam opt_g(ck.gen.params(), {cfg.lr_g, cfg.adam_beta1, cfg.adam_beta2, 1e-8});
  nn::Adam opt_d(ck.disc.params(), {cfg.lr_d, cfg.adam_beta1, cfg.adam_beta2, 1e-8});

  const int n = static_cast<int>(hazy_imgs.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng erng(mix_seed(cfg.seed, 0xe90c0000ULL + epoch));
    erng.shuffle(order);

    double gen_sum = 0.0, disc_sum = 0.0;
    int counted = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      std::vector<const ImageBuffer*> hb(bs), cb(bs);
      for (int i = 0; i < bs; ++i) {
        hb[i] = &hazy_imgs[order[start + i]];
        cb[i] = &clear_imgs[order[start + i]];
      }
      Tensor hazy_t = nn::images_to_batch(hb);
      Tensor clear_t = nn::images_to_batch(cb);

      Tensor fake = ck.gen.forward(hazy_t, true);
      const double dl = discriminator_step_loss(ck.disc, hazy_t, clear_t, fake, true);
      opt_d.step();

      const double gl = generator_step_loss(ck.gen, ck.disc, hazy_t, clear_t, cfg.weights, true);
      opt_g.step();

      gen_sum += gl * bs;
      disc_sum += dl * bs;
      counted += bs;
    }
    ck.history.push_back({epoch, gen_sum / counted, disc_sum / counted});
  }
  return ck;
}

ImageBuffer dehaze(GanCheckpoint& ckpt, const ImageBuffer& hazy) {
  return generator_forward(ckpt.gen, hazy);
}

// ---- serialization ----

namespace {

std::vector<ckpt::NamedVec> gan_state(GanCheckpoint& ck) {
  std::vector<ckpt::NamedVec> state;
  for (auto& p : ck.gen.params()) state.push_back({"gen." + p.name, p.value});
  state.push_back({"gen.bn_e1.rm", &ck.gen.bn_e1.running_mean});
  state.push_back({"gen.bn_e1.rv", &ck.gen.bn_e1.running_var});
  state.push_back({"gen.bn_e2.rm", &ck.gen.bn_e2.running_mean});
  state.push_back({"gen.bn_e2.rv", &ck.gen.bn_e2.running_var});
  state.push_back({"gen.bn_e3.rm", &ck.gen.bn_e3.running_mean});
  state.push_back({"gen.bn_e3.rv", &ck.gen.bn_e3.running_var});
  state.push_back({"gen.bn_ra.rm", &ck.gen.bn_ra.running_mean});
  state.push_back({"gen.bn_ra.rv", &ck.gen.bn_ra.running_var});
  state.push_back({"gen.bn_rb.rm", &ck.gen.bn_rb.running_mean});
  state.push_back({"gen.bn_rb.rv", &ck.gen.bn_rb.running_var});
  state.push_back({"gen.bn_d1.rm", &ck.gen.bn_d1.running_mean});
  state.push_back({"gen.bn_d1.rv", &ck.gen.bn_d1.running_var});
  state.push_back({"gen.bn_d2.rm", &ck.gen.bn_d2.running_mean});
  state.push_back({"gen.bn_d2.rv", &ck.gen.bn_d2.running_var});
  for (auto& p : ck.disc.params()) state.push_back({"disc." + p.name, p.value});
  state.push_back({"disc.bn1.rm", &ck.disc.bn1.running_mean});
  state.push_back({"disc.bn1.rv", &ck.disc.bn1.running_var});
  state.push_back({"disc.bn2.rm", &ck.disc.bn2.running_mean});
  state.push_back({"disc.bn2.rv", &ck.disc.bn2.running_var});
  state.push_back({"disc.bn3.rm", &ck.disc.bn3.running_mean});
  state.push_back({"disc.bn3.rv", &ck.disc.bn3.running_var});
  state.push_back({"disc.bn4.rm", &ck.disc.bn4.running_mean});
  state.push_back({"disc.bn4.rv", &ck.disc.bn4.running_var});
  return state;
}

}  // namespace

void save_gan_checkpoint(const GanCheckpoint& ckpt_in, const std::string& path) {
  auto& ck = const_cast<GanCheckpoint&>(ckpt_in);  // state refs only read here
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : ck.history) history.push_back({r.epoch, r.gen_loss, r.disc_loss});
  nlohmann::json meta{{"base_width", ck.cfg.base_width},
                      {"native_h", ck.native_h},
                      {"native_w", ck.native_w},
                      {"epochs", ck.cfg.epochs},
                      {"batch_size", ck.cfg.batch_size},
                      {"lr_g", ck.cfg.lr_g},
                      {"lr_d", ck.cfg.lr_d},
                      {"seed", ck.cfg.seed},
                      {"w_l1", ck.cfg.weights.w_l1},
                      {"w_mse", ck.cfg.weights.w_mse},
                      {"w_bce", ck.cfg.weights.w_bce},
                      {"adam_beta1", ck.cfg.adam_beta1},
                      {"adam_beta2", ck.cfg.adam_beta2},
                      {"history", history}};
  ckpt::save_checkpoint_file(path, "dehaze_gan", meta, gan_state(ck));
}

GanCheckpoint load_gan_checkpoint(const std::string& path) {
  ckpt::CheckpointFile file = ckpt::load_checkpoint_file(path, "dehaze_gan");
  GanCheckpoint ck;
  ck.cfg.base_width = file.meta.at("base_width").get<int>();
  ck.native_h = file.meta.at("native_h").get<int>();
  ck.native_w = file.meta.at("native_w").get<int>();
  ck.cfg.epochs = file.meta.at("epochs").get<int>();
  ck.cfg.batch_size = file.meta.at("batch_size").get<int>();
  ck.cfg.lr_g = file.meta.at("lr_g").get<double>();
  ck.cfg.lr_d = file.meta.at("lr_d").get<double>();
  ck.cfg.seed = file.meta.at("seed").get<std::uint64_t>();
  ck.cfg.weights.w_l1 = file.meta.at("w_l1").get<double>();
  ck.cfg.weights.w_mse = file.meta.at("w_mse").get<double>();
  ck.cfg.weights.w_bce = file.meta.at("w_bce").get<double>();
  ck.cfg.adam_beta1 = file.meta.at("adam_beta1").get<double>();
  ck.cfg.adam_beta2 = file.meta.at("adam_beta2").get<double>();
  for (const auto& h : file.meta.at("history"))
    ck.history.push_back({h.at(0).get<int>(), h.at(1).get<double>(), h.at(2).get<double>()});
  ck.gen = GeneratorNet(ck.cfg.base_width);
  ck.disc = DiscriminatorNet(ck.cfg.base_width, ck.native_h, ck.native_w);
  ckpt::bind_arrays(file, gan_state(ck));
  return ck;
}

void write_loss_csv(const std::vector<LossRecord>& history, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("write_loss_csv: cannot open " + path);
  std::fputs("epoch,gen_loss,disc_loss\n", f);
  for (const auto& r : history)
    std::fprintf(f, "%d,%.17g,%.17g\n", r.epoch, r.gen_loss, r.disc_loss);
  std::fclose(f);
}

}  // namespace usvtrack::gan
