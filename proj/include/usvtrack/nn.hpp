#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "usvtrack/image.hpp"
#include "usvtrack/rng.hpp"

namespace usvtrack::nn {

// Dense NCHW tensor. All net math runs in double; training cost is carried by
// the GEMM inside conv layers.
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {}

  std::size_t size() const { return v.size(); }
  std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }
  double* sample(int i) { return v.data() + sample_stride() * i; }
  const double* sample(int i) const { return v.data() + sample_stride() * i; }
  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

Tensor image_to_tensor(const ImageBuffer& img);
ImageBuffer tensor_to_image(const Tensor& t, int sample);
Tensor images_to_batch(const std::vector<const ImageBuffer*>& imgs);

// Named view of one parameter vector and its gradient; registry order is the
// serialization and optimizer order, so it must be stable.
struct ParamRef {
  std::string name;
  std::vector<double>* value;
  std::vector<double>* grad;
};

struct Conv2d {
  int in_c = 0, out_c = 0, ksize = 3, stride = 1, pad = 1;
  std::vector<double> weight, bias;    // weight: [out_c][in_c*k*k]
  std::vector<double> gweight, gbias;

  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride_, int pad_);

  void init(Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

  int out_h(int h) const { return (h + 2 * pad - ksize) / stride + 1; }
  int out_w(int w) const { return (w + 2 * pad - ksize) / stride + 1; }

  Tensor forward(const Tensor& x);
  // accumulates gweight/gbias, returns dx
  Tensor backward(const Tensor& dy);

 private:
  Tensor x_;  // cached input
};

struct BatchNorm2d {
  int channels = 0;
  double momentum = 0.1, eps = 1e-5;
  std::vector<double> gamma, beta, ggamma, gbeta;
  std::vector<double> running_mean, running_var;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels_);

  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

  Tensor forward(const Tensor& x, bool training);
  Tensor backward(const Tensor& dy);

 private:
  Tensor x_;
  std::vector<double> mean_, inv_std_;
  bool trained_forward_ = false;
};

struct LeakyReLU {
  double slope = 0.2;
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor x_;
};

struct ReLU {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor x_;
};

struct Sigmoid {
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_;  // cached output
};

struct Linear {
  int in_dim = 0, out_dim = 0;
  std::vector<double> weight, bias;  // weight: [out][in]
  std::vector<double> gweight, gbias;

  Linear() = default;
  Linear(int in_dim_, int out_dim_);

  void init(Rng& rng);
  void collect(const std::string& prefix, std::vector<ParamRef>& out);
  void zero_grad();

  // x flattened per sample to in_dim
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy);

 private:
  Tensor x_;
};

// nearest-neighbour 2x upsampling
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int c_a, Tensor& da, Tensor& db);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moments are kept per registry slot; step order follows the registry, which
// keeps updates bit-reproducible for a fixed seed and data order.
class Adam {
 public:
  Adam(std::vector<ParamRef> params, const AdamConfig& cfg);
  void step();
  void zero_grad();

 private:
  std::vector<ParamRef> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

std::size_t param_count(const std::vector<ParamRef>& params);

}  // namespace usvtrack::nn
