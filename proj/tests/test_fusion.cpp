#include <cmath>

#include "doctest.h"
#include "spikefuse/fusion.hpp"
#include "spikefuse/ops.hpp"
#include "test_util.hpp"

using namespace spikefuse;
using testutil::random_spikes;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("alignment: silence, shared weights, token padding") {
  Rng rng(1);
  LpBnSn shared("align", 8, 8, rng);
  auto z = align_modalities(Tensor::zeros({2, 4, 25, 8}), Tensor::zeros({2, 4, 48, 8}), shared, ForwardContext{});
  CHECK(density(z.skeleton) == 0.0);
  CHECK(density(z.event) == 0.0);

  Tensor s = random_spikes({2, 4, 25, 8}, rng, 0.5), e = random_spikes({2, 4, 48, 8}, rng, 0.5);
  auto a = align_modalities(s, e, shared, ForwardContext{});
  CHECK(a.skeleton.shape() == Shape{2, 4, 48, 8});
  CHECK(a.event.shape() == Shape{2, 4, 48, 8});
  for (std::size_t bt = 0; bt < 8; ++bt)
    for (std::size_t v = 25; v < 48; ++v)
      for (std::size_t c = 0; c < 8; ++c) CHECK(a.skeleton.at((bt * 48 + v) * 8 + c) == 0.0);

  Tensor e25 = random_spikes({2, 4, 25, 8}, rng, 0.5);
  auto ab = align_modalities(s, e25, shared, ForwardContext{});
  auto ba = align_modalities(e25, s, shared, ForwardContext{});
  CHECK(vec(ab.skeleton) == vec(ba.event));
  CHECK(vec(ab.event) == vec(ba.skeleton));
  CHECK_THROWS_AS(align_modalities(s, random_spikes({2, 5, 48, 8}, rng), shared, ForwardContext{}), InvalidInput);
  CHECK_THROWS_AS(pad_modalities(s, random_spikes({2, 4, 48, 6}, rng)), InvalidInput);
}

TEST_CASE("direct addition is a logical OR") {
  Rng rng(2);
  auto a = pad_modalities(random_spikes({1, 3, 4, 5}, rng), random_spikes({1, 3, 6, 5}, rng));
  Tensor y = direct_add_fuse(a);
  for (std::size_t i = 0; i < y.size(); ++i)
    CHECK(y.at(i) == (a.skeleton.at(i) + a.event.at(i) > 0.0 ? 1.0 : 0.0));
}

TEST_CASE("cross mamba: skeleton silence leaves the event residual") {
  Rng rng(3);
  SpikingCrossMamba scm("scm", 8, 4, rng);
  Tensor e = random_spikes({2, 5, 6, 8}, rng, 0.4);
  AlignedFeatures a{Tensor::zeros({2, 5, 6, 8}), e};
  CHECK(density(scm.interaction(a, ForwardContext{})) == 0.0);
  CHECK(vec(scm.forward(a, ForwardContext{})) == vec(e));
  AlignedFeatures no_event{random_spikes({2, 5, 6, 8}, rng, 0.4), Tensor::zeros({2, 5, 6, 8})};
  CHECK(density(scm.forward(no_event, ForwardContext{})) == 0.0);
  AlignedFeatures bad{Tensor::zeros({2, 5, 6, 8}), Tensor::zeros({2, 5, 7, 8})};
  CHECK_THROWS_AS(scm.forward(bad, ForwardContext{}), InvalidInput);
}

TEST_CASE("cross mamba: residual guarantee, purity and role asymmetry") {
  Rng rng(4);
  SpikingCrossMamba scm("scm", 8, 4, rng);
  ForwardContext train;
  train.training = true;
  std::size_t differ = 0;
  for (int trial = 0; trial < 5; ++trial) {
    AlignedFeatures a{random_spikes({2, 5, 6, 8}, rng, 0.5), random_spikes({2, 5, 6, 8}, rng, 0.3)};
    Tensor y = scm.forward(a, train);
    CHECK(is_binary(y));
    for (std::size_t i = 0; i < y.size(); ++i)
      if (a.event.at(i) == 1.0) CHECK(y.at(i) == 1.0);
    scm.swapped = true;
    Tensor ys = scm.forward(a, train);
    scm.swapped = false;
    for (std::size_t i = 0; i < y.size(); ++i) differ += y.at(i) != ys.at(i) ? 1 : 0;
  }
  CHECK(differ > 0);
}

TEST_CASE("cross mamba matches a scalar-token unrolled oracle") {
  Rng rng(5);
  const std::size_t T = 3, D = 2;
  SpikingCrossMamba scm("scm", D, 1, rng);
  const double wsp[] = {1.2, -0.4, 0.3, 0.9};
  std::copy(std::begin(wsp), std::end(wsp), scm.sp.lp.weight().mutable_values().begin());
  scm.sp.lp.bias().mutable_values()[1] = 0.2;
  scm.ssp.b_in.weight().mutable_values()[0] = 0.7;
  scm.ssp.b_in.weight().mutable_values()[1] = -0.3;
  scm.ssp.c_out.weight().mutable_values()[0] = 1.5;
  scm.ssp.c_out.weight().mutable_values()[1] = 0.8;
  scm.ssp.decay_logit.mutable_values()[0] = 0.4;
  scm.bn.gamma().mutable_values()[0] = 2.0;
  scm.bn.running_mean().mutable_values()[1] = 0.1;
  const std::vector<double> xs{1, 1, 0, 1, 1, 0}, xe{1, 0, 0, 0, 1, 1};
  AlignedFeatures a{Tensor::from({1, T, 1, D}, xs), Tensor::from({1, T, 1, D}, xe)};
  Tensor y = scm.forward(a, ForwardContext{});

  auto bn = [](BatchNorm& b, std::size_t c, double v) {
    return b.gamma().at(c) * (v - b.running_mean().at(c)) / std::sqrt(b.running_var().at(c) + 1e-5) + b.beta().at(c);
  };
  const double decay = 1.0 / (1.0 + std::exp(-0.4));
  std::vector<double> vg(D, 0.0), vz(D, 0.0);
  double h = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> gin(D);
    for (std::size_t c = 0; c < D; ++c)
      gin[c] = bn(scm.sp.bn, c, xs[t * D] * wsp[c] + xs[t * D + 1] * wsp[2 + c] + scm.sp.lp.bias().at(c));
    auto g = lif_step(vg, gin, LifParams{scm.sp.sn.tau().item(), 0.5, 0.0});
    vg = g.v_next;
    h = decay * h + 0.7 * xe[t * D] - 0.3 * xe[t * D + 1];
    const double active = g.spikes[0] + g.spikes[1];
    std::vector<double> zin(D);
    for (std::size_t c = 0; c < D; ++c) zin[c] = bn(scm.bn, c, active * (c == 0 ? 1.5 : 0.8) * h);
    auto z = lif_step(vz, zin, LifParams{scm.sn.tau().item(), 0.5, 0.0});
    vz = z.v_next;
    for (std::size_t c = 0; c < D; ++c) CHECK(y.at(t * D + c) == (z.spikes[c] + xe[t * D + c] > 0.5 ? 1.0 : 0.0));
  }
}

TEST_CASE("cross mamba interaction gradients match central differences") {
  Rng rng(6);
  SpikingCrossMamba scm("scm", 4, 3, rng);
  Tensor s = random_spikes({2, 3, 5, 4}, rng, 0.5);
  CHECK(testutil::op_grad_error(
            [&](const Tensor& e) { return scm.interaction(AlignedFeatures{s, e}, ForwardContext{}); },
            testutil::random_tensor({2, 3, 5, 4}, rng), rng) < 1e-6);
}
