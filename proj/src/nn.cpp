#include "usvtrack/nn.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>

namespace usvtrack::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Tensor image_to_tensor(const ImageBuffer& img) {
  Tensor t(1, 3, img.height, img.width);
  const std::size_t plane = static_cast<std::size_t>(img.height) * img.width;
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < 3; ++ch)
        t.v[plane * ch + static_cast<std::size_t>(r) * img.width + c] = img.at(r, c, ch);
  return t;
}

ImageBuffer tensor_to_image(const Tensor& t, int sample) {
  if (t.c != 3) throw std::invalid_argument("tensor_to_image: need 3 channels");
  ImageBuffer img(t.h, t.w);
  const double* base = t.sample(sample);
  const std::size_t plane = static_cast<std::size_t>(t.h) * t.w;
  for (int r = 0; r < t.h; ++r)
    for (int c = 0; c < t.w; ++c)
      for (int ch = 0; ch < 3; ++ch)
        img.at(r, c, ch) = base[plane * ch + static_cast<std::size_t>(r) * t.w + c];
  return img;
}

Tensor images_to_batch(const std::vector<const ImageBuffer*>& imgs) {
  if (imgs.empty()) throw std::invalid_argument("images_to_batch: empty batch");
  const int h = imgs[0]->height, w = imgs[0]->width;
  Tensor t(static_cast<int>(imgs.size()), 3, h, w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i]->height != h || imgs[i]->width != w)
      throw std::invalid_argument("images_to_batch: mixed image sizes");
    double* base = t.sample(static_cast<int>(i));
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        for (int ch = 0; ch < 3; ++ch)
          base[plane * ch + static_cast<std::size_t>(r) * w + c] = imgs[i]->at(r, c, ch);
  }
  return t;
}

// ---- conv ----

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride_, int pad_)
    : in_c(in_channels), out_c(out_channels), ksize(kernel), stride(stride_), pad(pad_) {
  weight.assign(static_cast<std::size_t>(out_c) * in_c * ksize * ksize, 0.0);
  bias.assign(out_c, 0.0);
  gweight.assign(weight.size(), 0.0);
  gbias.assign(bias.size(), 0.0);
}

void Conv2d::init(Rng& rng) {
  const double std = std::sqrt(2.0 / (static_cast<double>(in_c) * ksize * ksize));
  for (auto& w : weight) w = rng.normal(0.0, std);
  for (auto& b : bias) b = 0.0;
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &gweight});
  out.push_back({prefix + ".bias", &bias, &gbias});
}

void Conv2d::zero_grad() {
  std::fill(gweight.begin(), gweight.end(), 0.0);
  std::fill(gbias.begin(), gbias.end(), 0.0);
}

namespace {

void im2col(const double* x, int c_in, int h, int w, int ksize, int stride, int pad,
            int oh, int ow, double* col) {
  // col layout: [c_in*k*k][oh*ow]
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < c_in; ++ci) {
    const double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int kr = 0; kr < ksize; ++kr)
      for (int kc = 0; kc < ksize; ++kc) {
        double* dst = col + (static_cast<std::size_t>(ci) * ksize * ksize + kr * ksize + kc) * ohw;
        for (int orow = 0; orow < oh; ++orow) {
          const int ir = orow * stride - pad + kr;
          if (ir < 0 || ir >= h) {
            for (int oc = 0; oc < ow; ++oc) dst[static_cast<std::size_t>(orow) * ow + oc] = 0.0;
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(ir) * w;
          for (int oc = 0; oc < ow; ++oc) {
            const int ic = oc * stride - pad + kc;
            dst[static_cast<std::size_t>(orow) * ow + oc] =
                (ic >= 0 && ic < w) ? src[ic] : 0.0;
          }
        }
      }
  }
}

void col2im(const double* col, int c_in, int h, int w, int ksize, int stride, int pad,
            int oh, int ow, double* x) {
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  std::fill(x, x + static_cast<std::size_t>(c_in) * h * w, 0.0);
  for (int ci = 0; ci < c_in; ++ci) {
    double* plane = x + static_cast<std::size_t>(ci) * h * w;
    for (int kr = 0; kr < ksize; ++kr)
      for (int kc = 0; kc < ksize; ++kc) {
        const double* src =
            col + (static_cast<std::size_t>(ci) * ksize * ksize + kr * ksize + kc) * ohw;
        for (int orow = 0; orow < oh; ++orow) {
          const int ir = orow * stride - pad + kr;
          if (ir < 0 || ir >= h) continue;
          double* dstrow = plane + static_cast<std::size_t>(ir) * w;
          for (int oc = 0; oc < ow; ++oc) {
            const int ic = oc * stride - pad + kc;
            if (ic >= 0 && ic < w) dstrow[ic] += src[static_cast<std::size_t>(orow) * ow + oc];
          }
        }
      }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_c) throw std::invalid_argument("Conv2d: channel mismatch");
  x_ = x;
  const int oh = out_h(x.h), ow = out_w(x.w);
  Tensor y(x.n, out_c, oh, ow);
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  std::vector<double> col(static_cast<std::size_t>(in_c) * ksize * ksize * ohw);
  CMapRM wmat(weight.data(), out_c, static_cast<Eigen::Index>(in_c) * ksize * ksize);
  for (int i = 0; i < x.n; ++i) {
    im2col(x.sample(i), in_c, x.h, x.w, ksize, stride, pad, oh, ow, col.data());
    CMapRM cmat(col.data(), wmat.cols(), static_cast<Eigen::Index>(ohw));
    MapRM ymat(y.sample(i), out_c, static_cast<Eigen::Index>(ohw));
    ymat.noalias() = wmat * cmat;
    for (int co = 0; co < out_c; ++co) ymat.row(co).array() += bias[co];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  const int oh = dy.h, ow = dy.w;
  const std::size_t ohw = static_cast<std::size_t>(oh) * ow;
  Tensor dx(x_.n, in_c, x_.h, x_.w);
  std::vector<double> col(static_cast<std::size_t>(in_c) * ksize * ksize * ohw);
  std::vector<double> dcol(col.size());
  CMapRM wmat(weight.data(), out_c, static_cast<Eigen::Index>(in_c) * ksize * ksize);
  MapRM gwmat(gweight.data(), out_c, wmat.cols());
  for (int i = 0; i < x_.n; ++i) {
    CMapRM dymat(dy.sample(i), out_c, static_cast<Eigen::Index>(ohw));
    // weight/bias grads
    im2col(x_.sample(i), in_c, x_.h, x_.w, ksize, stride, pad, oh, ow, col.data());
    CMapRM cmat(col.data(), wmat.cols(), static_cast<Eigen::Index>(ohw));
    gwmat.noalias() += dymat * cmat.transpose();
    for (int co = 0; co < out_c; ++co) gbias[co] += dymat.row(co).sum();
    // input grad
    MapRM dcmat(dcol.data(), wmat.cols(), static_cast<Eigen::Index>(ohw));
    dcmat.noalias() = wmat.transpose() * dymat;
    col2im(dcol.data(), in_c, x_.h, x_.w, ksize, stride, pad, oh, ow, dx.sample(i));
  }
  return dx;
}

// ---- batch norm ----

BatchNorm2d::BatchNorm2d(int channels_) : channels(channels_) {
  gamma.assign(channels, 1.0);
  beta.assign(channels, 0.0);
  ggamma.assign(channels, 0.0);
  gbeta.assign(channels, 0.0);
  running_mean.assign(channels, 0.0);
  running_var.assign(channels, 1.0);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &ggamma});
  out.push_back({prefix + ".beta", &beta, &gbeta});
}

void BatchNorm2d::zero_grad() {
  std::fill(ggamma.begin(), ggamma.end(), 0.0);
  std::fill(gbeta.begin(), gbeta.end(), 0.0);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  if (x.c != channels) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor y(x.n, x.c, x.h, x.w);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t stride = x.sample_stride();
  trained_forward_ = training;

  if (training) {
    x_ = x;
    mean_.assign(channels, 0.0);
    inv_std_.assign(channels, 0.0);
    const double m = static_cast<double>(x.n) * plane;
    for (int c = 0; c < channels; ++c) {
      double s = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const double* p = x.v.data() + stride * i + plane * c;
        for (std::size_t k = 0; k < plane; ++k) s += p[k];
      }
      const double mu = s / m;
      double var = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const double* p = x.v.data() + stride * i + plane * c;
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = p[k] - mu;
          var += d * d;
        }
      }
      var /= m;
      mean_[c] = mu;
      inv_std_[c] = 1.0 / std::sqrt(var + eps);
      running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
      running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var;
      const double g = gamma[c], b = beta[c], is = inv_std_[c];
      for (int i = 0; i < x.n; ++i) {
        const double* p = x.v.data() + stride * i + plane * c;
        double* q = y.v.data() + stride * i + plane * c;
        for (std::size_t k = 0; k < plane; ++k) q[k] = g * (p[k] - mu) * is + b;
      }
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      const double mu = running_mean[c];
      const double is = 1.0 / std::sqrt(running_var[c] + eps);
      const double g = gamma[c], b = beta[c];
      for (int i = 0; i < x.n; ++i) {
        const double* p = x.v.data() + stride * i + plane * c;
        double* q = y.v.data() + stride * i + plane * c;
        for (std::size_t k = 0; k < plane; ++k) q[k] = g * (p[k] - mu) * is + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy) {
  if (!trained_forward_)
    throw std::logic_error("BatchNorm2d: backward without a training-mode forward");
  Tensor dx(dy.n, dy.c, dy.h, dy.w);
  const std::size_t plane = static_cast<std::size_t>(dy.h) * dy.w;
  const std::size_t stride = dy.sample_stride();
  const double m = static_cast<double>(dy.n) * plane;
  for (int c = 0; c < channels; ++c) {
    const double mu = mean_[c], is = inv_std_[c], g = gamma[c];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const double* pdy = dy.v.data() + stride * i + plane * c;
      const double* px = x_.v.data() + stride * i + plane * c;
      for (std::size_t k = 0; k < plane; ++k) {
        const double xhat = (px[k] - mu) * is;
        sum_dy += pdy[k];
        sum_dy_xhat += pdy[k] * xhat;
      }
    }
    ggamma[c] += sum_dy_xhat;
    gbeta[c] += sum_dy;
    const double scale = g * is / m;
    for (int i = 0; i < dy.n; ++i) {
      const double* pdy = dy.v.data() + stride * i + plane * c;
      const double* px = x_.v.data() + stride * i + plane * c;
      double* pdx = dx.v.data() + stride * i + plane * c;
      for (std::size_t k = 0; k < plane; ++k) {
        const double xhat = (px[k] - mu) * is;
        pdx[k] = scale * (m * pdy[k] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  }
  return dx;
}

// ---- activations ----

Tensor LeakyReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (auto& v : y.v)
    if (v < 0.0) v *= slope;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    if (x_.v[i] < 0.0) dx.v[i] *= slope;
  return dx;
}

Tensor ReLU::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (auto& v : y.v)
    if (v < 0.0) v = 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    if (x_.v[i] < 0.0) dx.v[i] = 0.0;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
  y_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.v.size(); ++i)
    dx.v[i] *= y_.v[i] * (1.0 - y_.v[i]);
  return dx;
}

// ---- linear ----

Linear::Linear(int in_dim_, int out_dim_) : in_dim(in_dim_), out_dim(out_dim_) {
  weight.assign(static_cast<std::size_t>(out_dim) * in_dim, 0.0);
  bias.assign(out_dim, 0.0);
  gweight.assign(weight.size(), 0.0);
  gbias.assign(bias.size(), 0.0);
}

void Linear::init(Rng& rng) {
  const double std = std::sqrt(2.0 / in_dim);
  for (auto& w : weight) w = rng.normal(0.0, std);
  for (auto& b : bias) b = 0.0;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight, &gweight});
  out.push_back({prefix + ".bias", &bias, &gbias});
}

void Linear::zero_grad() {
  std::fill(gweight.begin(), gweight.end(), 0.0);
  std::fill(gbias.begin(), gbias.end(), 0.0);
}

Tensor Linear::forward(const Tensor& x) {
  if (static_cast<int>(x.sample_stride()) != in_dim)
    throw std::invalid_argument("Linear: flattened input size mismatch");
  x_ = x;
  Tensor y(x.n, out_dim, 1, 1);
  CMapRM wmat(weight.data(), out_dim, in_dim);
  CMapRM xmat(x.v.data(), x.n, in_dim);
  MapRM ymat(y.v.data(), x.n, out_dim);
  ymat.noalias() = xmat * wmat.transpose();
  for (int i = 0; i < x.n; ++i)
    for (int o = 0; o < out_dim; ++o) ymat(i, o) += bias[o];
  return y;
}

Tensor Linear::backward(const Tensor& dy) {
  Tensor dx(x_.n, x_.c, x_.h, x_.w);
  CMapRM dymat(dy.v.data(), dy.n, out_dim);
  CMapRM xmat(x_.v.data(), x_.n, in_dim);
  CMapRM wmat(weight.data(), out_dim, in_dim);
  MapRM gwmat(gweight.data(), out_dim, in_dim);
  MapRM dxmat(dx.v.data(), x_.n, in_dim);
  gwmat.noalias() += dymat.transpose() * xmat;
  for (int o = 0; o < out_dim; ++o) gbias[o] += dymat.col(o).sum();
  dxmat.noalias() = dymat * wmat;
  return dx;
}

// ---- shape ops ----

Tensor upsample2x(const Tensor& x) {
  Tensor y(x.n, x.c, x.h * 2, x.w * 2);
  const std::size_t xplane = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t yplane = xplane * 4;
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c) {
      const double* src = x.v.data() + x.sample_stride() * i + xplane * c;
      double* dst = y.v.data() + y.sample_stride() * i + yplane * c;
      for (int r = 0; r < x.h; ++r)
        for (int col = 0; col < x.w; ++col) {
          const double v = src[static_cast<std::size_t>(r) * x.w + col];
          double* d = dst + (static_cast<std::size_t>(r) * 2) * (x.w * 2) + col * 2;
          d[0] = v;
          d[1] = v;
          d[x.w * 2] = v;
          d[x.w * 2 + 1] = v;
        }
    }
  return y;
}

Tensor upsample2x_backward(const Tensor& dy) {
  Tensor dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
  const std::size_t xplane = static_cast<std::size_t>(dx.h) * dx.w;
  const std::size_t yplane = xplane * 4;
  for (int i = 0; i < dy.n; ++i)
    for (int c = 0; c < dy.c; ++c) {
      const double* src = dy.v.data() + dy.sample_stride() * i + yplane * c;
      double* dst = dx.v.data() + dx.sample_stride() * i + xplane * c;
      for (int r = 0; r < dx.h; ++r)
        for (int col = 0; col < dx.w; ++col) {
          const double* s = src + (static_cast<std::size_t>(r) * 2) * (dx.w * 2) + col * 2;
          dst[static_cast<std::size_t>(r) * dx.w + col] =
              s[0] + s[1] + s[dx.w * 2] + s[dx.w * 2 + 1];
        }
    }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor y(a.n, a.c + b.c, a.h, a.w);
  const std::size_t plane = static_cast<std::size_t>(a.h) * a.w;
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample(i), a.sample(i) + a.sample_stride(), y.sample(i));
    std::copy(b.sample(i), b.sample(i) + b.sample_stride(),
              y.sample(i) + plane * a.c);
  }
  return y;
}

void split_channels(const Tensor& d, int c_a, Tensor& da, Tensor& db) {
  da = Tensor(d.n, c_a, d.h, d.w);
  db = Tensor(d.n, d.c - c_a, d.h, d.w);
  const std::size_t plane = static_cast<std::size_t>(d.h) * d.w;
  for (int i = 0; i < d.n; ++i) {
    std::copy(d.sample(i), d.sample(i) + plane * c_a, da.sample(i));
    std::copy(d.sample(i) + plane * c_a, d.sample(i) + d.sample_stride(), db.sample(i));
  }
}

// ---- optimizer ----

Adam::Adam(std::vector<ParamRef> params, const AdamConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].value->size(), 0.0);
    v_[i].assign(params_[i].value->size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params_.size(); ++p) {
    auto& val = *params_[p].value;
    auto& grd = *params_[p].grad;
    auto& m = m_[p];
    auto& v = v_[p];
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * grd[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * grd[i] * grd[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

std::size_t param_count(const std::vector<ParamRef>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->size();
  return n;
}

}  // namespace usvtrack::nn
