#include <cmath>
#include <complex>
#include <numbers>

#include "doctest.h"
#include "spikefuse/ops.hpp"
#include "spikefuse/spectral.hpp"
#include "test_util.hpp"

using namespace spikefuse;
using testutil::max_abs_diff;
using testutil::random_tensor;

namespace {

// Direct double-loop transform with complex arithmetic.
std::vector<std::complex<double>> naive_transform(const std::vector<std::complex<double>>& x, int sign) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < n; ++j)
      out[k] += x[j] * std::polar(1.0, sign * 2.0 * std::numbers::pi * double(k * j) / double(n));
  return out;
}

}  // namespace

TEST_CASE("dft of a constant sequence is DC only") {
  auto s = dft(Tensor::from({4}, {1, 1, 1, 1}));
  CHECK(max_abs_diff(s.real.values(), std::vector<double>{4, 0, 0, 0}) < 1e-12);
  CHECK(max_abs_diff(s.imag.values(), std::vector<double>{0, 0, 0, 0}) < 1e-12);
}

TEST_CASE("dft of an impulse is flat") {
  auto s = dft(Tensor::from({4}, {1, 0, 0, 0}));
  CHECK(max_abs_diff(s.real.values(), std::vector<double>{1, 1, 1, 1}) < 1e-12);
  CHECK(max_abs_diff(s.imag.values(), std::vector<double>{0, 0, 0, 0}) < 1e-12);
}

TEST_CASE("dft matches direct summation for several lengths") {
  Rng rng(11);
  for (std::size_t n : {1, 2, 3, 5, 8, 12, 16}) {
    Tensor x = random_tensor({3, n}, rng);
    for (auto algo : {DftAlgorithm::kAuto, DftAlgorithm::kNaive}) {
      auto s = dft(x, algo);
      for (std::size_t r = 0; r < 3; ++r) {
        std::vector<std::complex<double>> in(n);
        for (std::size_t i = 0; i < n; ++i) in[i] = x.at(r * n + i);
        auto ref = naive_transform(in, -1);
        for (std::size_t k = 0; k < n; ++k) {
          CHECK(std::abs(s.real.at(r * n + k) - ref[k].real()) < 1e-9);
          CHECK(std::abs(s.imag.at(r * n + k) - ref[k].imag()) < 1e-9);
        }
      }
    }
  }
}

TEST_CASE("radix-2 and direct transforms agree") {
  Rng rng(5);
  Tensor x = random_tensor({32}, rng);
  auto a = dft(x, DftAlgorithm::kRadix2);
  auto b = dft(x, DftAlgorithm::kNaive);
  CHECK(max_abs_diff(a.real.values(), b.real.values()) < 1e-9);
  CHECK(max_abs_diff(a.imag.values(), b.imag.values()) < 1e-9);
  CHECK_THROWS_AS(dft(random_tensor({6}, rng), DftAlgorithm::kRadix2), InvalidInput);
}

TEST_CASE("idft inverts dft") {
  Tensor x = Tensor::from({4}, {3, -1, 2, 5});
  CHECK(max_abs_diff(idft(dft(x)).values(), x.values()) < 1e-9);
  ComplexSpectrum dc{Tensor::from({4}, {4, 0, 0, 0}), Tensor::zeros({4})};
  CHECK(max_abs_diff(idft(dc).values(), std::vector<double>{1, 1, 1, 1}) < 1e-12);

  Rng rng(3);
  for (std::size_t n : {7, 16}) {
    Tensor y = random_tensor({2, n}, rng);
    auto s = dft(y);
    Tensor back = idft(s);
    CHECK(max_abs_diff(back.values(), y.values()) < 1e-9);
    for (std::size_t r = 0; r < 2; ++r) {
      std::vector<std::complex<double>> spec(n);
      for (std::size_t k = 0; k < n; ++k) spec[k] = {s.real.at(r * n + k), s.imag.at(r * n + k)};
      auto ref = naive_transform(spec, +1);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(back.at(r * n + i) - ref[i].real() / double(n)) < 1e-9);
    }
  }
}

TEST_CASE("dft errors") {
  ComplexSpectrum bad{Tensor::zeros({4}), Tensor::zeros({5})};
  CHECK_THROWS_AS(idft(bad), InvalidInput);
  CHECK_THROWS_AS(dft(Tensor()), InvalidInput);
}

TEST_CASE("Parseval holds") {
  Rng rng(21);
  for (std::size_t n : {5, 8, 16}) {
    Tensor x = random_tensor({n}, rng);
    auto s = dft(x);
    double e_time = 0, e_freq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      e_time += x.at(i) * x.at(i);
      e_freq += s.real.at(i) * s.real.at(i) + s.imag.at(i) * s.imag.at(i);
    }
    CHECK(std::abs(e_time - e_freq / double(n)) <= 1e-6 * e_time);
  }
}

TEST_CASE("dft matrices reproduce the transform pair") {
  Rng rng(8);
  const std::size_t n = 8;
  auto m = dft_matrices(n);
  Tensor x = random_tensor({1, n, 1, 1}, rng);
  Tensor re = mix_time(x, m.fwd_cos, n), im = mix_time(x, m.fwd_sin, n);
  auto s = dft(reshape(x, {n}));
  CHECK(max_abs_diff(re.values(), s.real.values()) < 1e-12);
  CHECK(max_abs_diff(im.values(), s.imag.values()) < 1e-12);
  Tensor back = add(mix_time(re, m.inv_cos, n), mix_time(im, m.inv_sin, n));
  CHECK(max_abs_diff(back.values(), x.values()) < 1e-12);
}

TEST_CASE("backward of sum of squares") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(mul(x, x)));
  CHECK(max_abs_diff(x.grad(), std::vector<double>{2, 4, 6}) < 1e-15);
  backward(sum(mul(x, x)));
  CHECK(max_abs_diff(x.grad(), std::vector<double>{4, 8, 12}) < 1e-15);
  x.zero_grad();
  backward(sum(scale(x, 0.0)));
  CHECK(max_abs_diff(x.grad(), std::vector<double>{0, 0, 0}) == 0.0);
}

TEST_CASE("backward rejects a non-scalar loss") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), InvalidInput);
}

TEST_CASE("finite differences") {
  Rng rng(1);
  Tensor x = random_tensor({5}, rng);
  auto g = finite_diff_grad([](const Tensor& t) { return sum(t).item(); }, x, 1e-5);
  for (double v : g) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
  Tensor three = Tensor::scalar(3.0);
  auto sq = finite_diff_grad([](const Tensor& t) { return t.item() * t.item(); }, three, 1e-5);
  CHECK(std::abs(sq[0] - 6.0) < 1e-6);
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor&) { return std::nan(""); }, three, 1e-5), NumericError);
  CHECK_THROWS_AS(finite_diff_grad([](const Tensor& t) { return t.item(); }, three, 0.0), InvalidInput);
}

TEST_CASE("three-layer smooth network gradients match central differences") {
  Rng rng(42);
  Tensor x = random_tensor({4, 5}, rng);
  Tensor w1 = random_tensor({5, 6}, rng, -1, 1, true), b1 = random_tensor({6}, rng, -1, 1, true);
  Tensor w2 = random_tensor({6, 6}, rng, -1, 1, true), w3 = random_tensor({6, 3}, rng, -1, 1, true);
  auto loss = [&] { return sum(mul(linear(tanh(linear(sigmoid(linear(x, w1, b1)), w2)), w3), linear(linear(x, w1), w3))); };
  // second term reuses w1 so a parameter has two paths
  backward(mean(loss()));
  for (Tensor* p : {&w1, &b1, &w2, &w3}) {
    std::vector<double> g(p->grad().begin(), p->grad().end());
    auto fd = finite_diff_grad_inplace([&] { return mean(loss()).item(); }, *p, 1e-5);
    CHECK(testutil::max_rel_err(g, fd, 1e-6) < 1e-4);
  }
}

TEST_CASE("autograd is linear in the loss") {
  Rng rng(9);
  Tensor x = random_tensor({6}, rng, -1, 1, true);
  auto f = [&] { return sum(sigmoid(mul(x, x))); };
  auto g = [&] { return sum(tanh(scale(x, 3.0))); };
  backward(f());
  std::vector<double> gf(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(g());
  std::vector<double> gg(x.grad().begin(), x.grad().end());
  x.zero_grad();
  backward(add(scale(f(), 2.5), scale(g(), -0.75)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(x.grad()[i] - (2.5 * gf[i] - 0.75 * gg[i])) < 1e-9);
}

TEST_CASE("tape is topologically ordered and deterministic") {
  auto run = [](std::uint64_t seed) {
    Rng rng(seed);
    Tensor w = random_tensor({3, 3}, rng, -1, 1, true);
    Tensor x = random_tensor({2, 3}, rng);
    Tensor loss = sum(sigmoid(linear(tanh(linear(x, w)), w)));
    backward(loss);
    return std::make_tuple(tape_of(loss), loss.item(), std::vector<double>(w.grad().begin(), w.grad().end()));
  };
  auto [tape, v1, g1] = run(4);
  REQUIRE(!tape.empty());
  for (std::size_t i = 0; i < tape.size(); ++i)
    for (auto p : tape[i].parents) CHECK(p < i);
  auto [tape2, v2, g2] = run(4);
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("elementwise and structural op gradients") {
  Rng rng(77);
  auto x = [&](Shape s) { return random_tensor(std::move(s), rng); };
  Tensor other = x({2, 3, 4});
  Tensor w = x({4, 5}), bias = x({5});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return add(t, other); }, x({2, 3, 4}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return sub(other, t); }, x({2, 3, 4}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return mul(t, t); }, x({2, 3, 4}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return sigmoid(t); }, x({7}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return tanh(t); }, x({7}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return linear(t, w, bias); }, x({3, 4}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return linear(other, t); }, x({4, 5}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return transpose_last2(t); }, x({2, 3, 4}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return slice_last(t, 1, 3); }, x({2, 4}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return concat_last({t, scale(t, 2.0)}); }, x({2, 3}), rng) <
        1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return mean_tokens(t); }, x({2, 3, 4, 5}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return shift_time(t, -2); }, x({2, 5, 3, 2}), rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return pad_tokens(t, 5); }, x({1, 2, 3, 2}), rng) < 1e-6);
  Tensor mask = x({2, 3, 1});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return mul_broadcast_last(t, mask); }, x({2, 3, 4}), rng) <
        1e-6);
  Tensor data = x({2, 3, 4});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return mul_broadcast_last(data, t); }, x({2, 3, 1}), rng) <
        1e-6);
  Tensor adj = random_tensor({3, 3}, rng, 0.1, 1.0);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return row_normalize(t); }, adj, rng) < 1e-6);
  Tensor feats = x({1, 2, 3, 4});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return mix_tokens(feats, row_normalize(t)); },
                                random_tensor({3, 3}, rng, 0.1, 1.0), rng) < 1e-6);
  Tensor k = x({2, 2, 3, 4}), v = x({2, 2, 3, 5});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return token_gram(t, v); }, k, rng) < 1e-6);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return apply_gram(t, token_gram(k, v)); }, x({2, 2, 3, 4}),
                                rng) < 1e-6);
  Tensor decay = x({4});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return linear_recurrence(t, decay); }, x({2, 5, 3, 4}), rng) <
        1e-6);
  Tensor u = x({2, 5, 3, 4});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return linear_recurrence(u, t); }, x({4}), rng) < 1e-6);
  Tensor p = x({3, 4});
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return add_leading(t, p); }, x({2, 3, 4}), rng) < 1e-6);
  auto m = dft_matrices(5);
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return mix_time(t, m.fwd_sin, 5); }, x({2, 5, 2, 3}), rng) <
        1e-6);
  CsrMatrix h;
  h.rows = h.cols = 3;
  h.row_ptr = {0, 2, 3, 5};
  h.col = {0, 2, 1, 0, 2};
  h.val = {1.0, 0.5, 1.0, 0.25, 1.0};
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return sparse_mix(t, {h, h}); }, x({2, 3, 4}), rng) < 1e-6);
  Tensor logits = x({3, 4});
  std::vector<int> labels{0, 3, 1};
  CHECK(testutil::op_grad_error([&](const Tensor& t) { return softmax_cross_entropy(t, labels); }, logits, rng) <
        1e-6);
}

TEST_CASE("clamp passes gradient only inside the interval") {
  Tensor x = Tensor::from({4}, {-2.0, 0.2, 0.7, 3.0}, true);
  Tensor y = clamp(x, 0.0, 1.0);
  CHECK(max_abs_diff(y.values(), std::vector<double>{0.0, 0.2, 0.7, 1.0}) == 0.0);
  backward(sum(y));
  CHECK(max_abs_diff(x.grad(), std::vector<double>{0, 1, 1, 0}) == 0.0);
}

TEST_CASE("cross entropy of uniform logits is log K") {
  std::vector<int> labels{2, 0};
  CHECK(softmax_cross_entropy(Tensor::zeros({2, 5}), labels).item() == doctest::Approx(std::log(5.0)));
  std::vector<int> bad{5, 0};
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::zeros({2, 5}), bad), InvalidInput);
}

TEST_CASE("shape checks") {
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), InvalidInput);
  CHECK_THROWS_AS(linear(Tensor::zeros({2, 3}), Tensor::zeros({4, 2})), InvalidInput);
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), InvalidInput);
  CHECK_THROWS_AS(row_normalize(Tensor::zeros({2, 2})), InvalidInput);
}
