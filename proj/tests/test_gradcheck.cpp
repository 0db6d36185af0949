#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "helpers.hpp"
#include "usvtrack/detector.hpp"
#include "usvtrack/gan.hpp"

using namespace usvtrack;

namespace {

// central finite differences over every parameter vs the analytic gradient;
// returns the norm-relative error
double grad_check(std::vector<nn::ParamRef> params, const std::function<double(bool)>& loss,
                  double h = 1e-5) {
  (void)loss(true);  // fill analytic grads
  std::vector<double> analytic;
  for (const auto& p : params)
    analytic.insert(analytic.end(), p.grad->begin(), p.grad->end());

  std::vector<double> fd;
  fd.reserve(analytic.size());
  for (const auto& p : params)
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      const double keep = (*p.value)[i];
      (*p.value)[i] = keep + h;
      const double up = loss(false);
      (*p.value)[i] = keep - h;
      const double dn = loss(false);
      (*p.value)[i] = keep;
      fd.push_back((up - dn) / (2.0 * h));
    }

  double num = 0.0, na = 0.0, nf = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double d = analytic[i] - fd[i];
    num += d * d;
    na += analytic[i] * analytic[i];
    nf += fd[i] * fd[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(na), std::sqrt(nf), 1e-300});
}

nn::Tensor random_batch(int n, int c, int h, int w, std::uint64_t seed) {
  nn::Tensor t(n, c, h, w);
  Rng rng(seed);
  for (auto& v : t.v) v = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("generator composite loss gradient vs finite differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    gan::GeneratorNet gen(2);
    gan::DiscriminatorNet disc(3, 8, 8);
    Rng rng(seed);
    gen.init(rng);
    disc.init(rng);
    REQUIRE(nn::param_count(gen.params()) <= 5000);

    const nn::Tensor hazy = random_batch(2, 3, 8, 8, seed * 10 + 1);
    const nn::Tensor clear = random_batch(2, 3, 8, 8, seed * 10 + 2);
    const auto loss = [&](bool bwd) {
      return gan::generator_step_loss(gen, disc, hazy, clear, {}, bwd);
    };
    const double err = grad_check(gen.params(), loss);
    INFO("seed ", seed, " rel err ", err);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("discriminator objective gradient vs finite differences") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    gan::DiscriminatorNet disc(3, 8, 8);
    Rng rng(seed + 40);
    disc.init(rng);
    REQUIRE(nn::param_count(disc.params()) <= 5000);

    const nn::Tensor hazy = random_batch(2, 3, 8, 8, seed * 10 + 3);
    const nn::Tensor clear = random_batch(2, 3, 8, 8, seed * 10 + 4);
    const nn::Tensor fake = random_batch(2, 3, 8, 8, seed * 10 + 5);
    const auto loss = [&](bool bwd) {
      return gan::discriminator_step_loss(disc, hazy, clear, fake, bwd);
    };
    const double err = grad_check(disc.params(), loss);
    INFO("seed ", seed, " rel err ", err);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("detector total loss gradient vs finite differences") {
  det::GridSpec grid;
  grid.k = 1;  // 8 px input, three stride-2 stages
  grid.anchors_per_cell = 2;
  grid.num_classes = 2;
  grid.lambda_noobj = 0.5;
  grid.anchors = {{0.25, 0.2}, {0.5, 0.55}};

  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    det::DetectorNet net(2, grid, 8, 8);
    Rng rng(seed + 80);
    net.init(rng);
    REQUIRE(nn::param_count(net.params()) <= 5000);

    const nn::Tensor x = random_batch(2, 3, 8, 8, seed * 10 + 6);
    std::vector<det::TargetAssignment> assigns{
        det::assign_targets({{0, {0.45, 0.5, 0.3, 0.25}}}, grid),
        det::assign_targets({{1, {0.6, 0.4, 0.5, 0.5}}}, grid),
    };
    const auto loss = [&](bool bwd) {
      return det::detector_training_loss(net, x, assigns, bwd);
    };
    const double err = grad_check(net.params(), loss);
    INFO("seed ", seed, " rel err ", err);
    CHECK(err < 1e-3);
  }
}
