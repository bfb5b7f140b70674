#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include "lobg/errors.hpp"
#include "lobg/gradcheck.hpp"
#include "lobg/ops.hpp"
#include "test_util.hpp"

using namespace lobg;
using lobg::testing::rand_tensor;
using lobg::testing::randn;
using lobg::testing::to_vec;

TEST_CASE("softmax examples") {
  auto p = softmax(Tensor::constant({2}, {1.0, 1.0}), 1.0);
  CHECK(p.values()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p.values()[1] == doctest::Approx(0.5).epsilon(1e-15));

  // scalar oracle
  const double e2 = std::exp(2.0), e0 = 1.0;
  auto q = softmax(Tensor::constant({2}, {2.0, 0.0}), 1.0);
  CHECK(std::fabs(q.values()[0] - e2 / (e2 + e0)) < 1e-15);
  CHECK(std::fabs(q.values()[0] - 0.8808) < 1e-4);
  CHECK(std::fabs(q.values()[1] - 0.1192) < 1e-4);

  std::mt19937_64 rng(3);
  auto x = randn(6, rng);
  auto shifted = x;
  for (auto& v : shifted) v += 17.25;
  auto a = softmax(Tensor::constant({6}, x), 0.5);
  auto b = softmax(Tensor::constant({6}, shifted), 0.5);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::fabs(a.values()[i] - b.values()[i]) < 1e-14);

  CHECK_THROWS_AS(softmax(Tensor::constant({2}, {1, 2}), 0.0), InvalidParameter);
  CHECK_THROWS_AS(softmax(Tensor::constant({2}, {1, 2}), -1.0), InvalidParameter);
}

TEST_CASE("softmax rows sum to one for bounded inputs") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(5 * 7);
    for (auto& x : v) x = u(rng);
    auto p = softmax(Tensor::constant({5, 7}, v), 1.0);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(p.at(r, c) >= 0.0);
        s += p.at(r, c);
      }
      CHECK(std::fabs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("cosine_sim examples") {
  auto a = Tensor::constant({3}, {0.3, -1.0, 2.0});
  CHECK(cosine_sim(a, a).item() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::fabs(cosine_sim(Tensor::constant({2}, {1, 0}), Tensor::constant({2}, {0, 5})).item()) < 1e-15);
  // 4 / (sqrt5 * sqrt5)
  CHECK(std::fabs(cosine_sim(Tensor::constant({2}, {1, 2}), Tensor::constant({2}, {2, 1})).item() - 0.8) < 1e-12);
  CHECK_THROWS_AS(cosine_sim(Tensor::constant({2}, {0, 0}), a.detach()), InvalidInput);
  CHECK_THROWS_AS(cosine_sim(Tensor::constant({3}, {0, 0, 0}), a), DegenerateVector);
}

TEST_CASE("backward analytic examples") {
  auto x = Tensor::parameter({}, {3.0});
  backward(mul(x, x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));

  auto y = Tensor::parameter({4}, {1, -2, 3, 0.5});
  backward(sum(y));
  for (double g : y.grad()) CHECK(g == 1.0);

  auto z = Tensor::parameter({2}, {1, 2});
  CHECK_THROWS_AS(backward(scale(z, 2.0)), InvalidParameter);
}

TEST_CASE("backward matches independent finite differences on a 3-layer MLP") {
  std::mt19937_64 rng(7);
  auto w1 = Tensor::parameter({5, 8}, randn(40, rng, 0.5));
  auto w2 = Tensor::parameter({8, 8}, randn(64, rng, 0.5));
  auto w3 = Tensor::parameter({8, 3}, randn(24, rng, 0.5));
  auto b1 = Tensor::parameter({8}, randn(8, rng, 0.1));
  auto x = rand_tensor({4, 5}, rng);
  auto target = rand_tensor({4, 3}, rng);
  auto loss_fn = [&] {
    auto h1 = gelu(add_row(matmul(x, w1), b1));
    auto h2 = gelu(matmul(h1, w2));
    auto out = matmul(h2, w3);
    auto diff = sub(out, target);
    return mean(mul(diff, diff));
  };
  backward(loss_fn());
  const double h = 1e-5;
  for (Tensor* w : {&w1, &w2, &w3, &b1}) {
    auto vals = w->mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + h;
      const double fp = loss_fn().item();
      vals[i] = orig - h;
      const double fm = loss_fn().item();
      vals[i] = orig;
      const double fd = (fp - fm) / (2 * h);
      const double an = w->grad()[i];
      CHECK(std::fabs(an - fd) / (std::fabs(an) + std::fabs(fd) + 1e-12) < 1e-4);
    }
  }
}

TEST_CASE("finite_diff_check examples") {
  auto sq = [](const Tensor& t) { return mul(t, t); };
  CHECK(finite_diff_check(sq, Tensor::constant({}, {3.0}), 1e-5) < 1e-8);
  auto constant = [](const Tensor&) { return Tensor::scalar(4.0); };
  CHECK(finite_diff_check(constant, Tensor::constant({3}, {1, 2, 3}), 1e-5) == 0.0);

  std::mt19937_64 rng(5);
  auto logits = rand_tensor({4, 6}, rng, 2.0);
  const std::vector<std::size_t> labels{0, 3, 5, 2};
  auto ce = [&](const Tensor& z) {
    auto p = softmax(z, 1.0);
    return scale(sum(log_floor(pick_per_row(p, labels), 1e-300)), -0.25);
  };
  CHECK(finite_diff_check(ce, logits, 1e-5) < 1e-6);
  CHECK_THROWS_AS(finite_diff_check(ce, logits, 0.0), InvalidParameter);
}

TEST_CASE("every differentiable op passes finite_diff_check on random inputs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    std::uniform_int_distribution<std::size_t> dim(2, 8);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    CAPTURE(seed);
    auto a = rand_tensor({m, k}, rng);
    auto b = rand_tensor({k, n}, rng);
    auto bt = rand_tensor({n, k}, rng);
    auto am = rand_tensor({m, k}, rng);
    auto g = rand_tensor({k}, rng);
    auto beta = rand_tensor({k}, rng);
    auto r1 = rand_tensor({m, n}, rng);
    auto rk = rand_tensor({m, k}, rng);
    auto rkk = rand_tensor({k, k}, rng);
    auto r3 = rand_tensor({3, n}, rng);

    auto proj = [](const Tensor& out, const Tensor& r) { return sum(mul(out, r)); };

    CHECK(finite_diff_check([&](const Tensor& t) { return proj(matmul(t, b), r1); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(matmul(a, t), r1); }, b) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(matmul_nt(t, bt), r1); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(matmul_nt(a, t), r1); }, bt) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(matmul_tn(t, am), rkk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(matmul_tn(a, t), rkk); }, am) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(softmax(t, 0.7), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(layer_norm(t, g, beta), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(layer_norm(a, t, beta), rk); }, g) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(layer_norm(a, g, t), rk); }, beta) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(gelu(t), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(mul(t, am), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(sub(t, am), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(add_row(t, g), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(add_row(a, t), rk); }, g) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(normalize_rows(t), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(abs_elem(t), rk); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return sum(sqrt_elem(mul(t, t))); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return cosine_sim(t, am); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(concat_rows({t, am}), concat_rows({rk, rk})); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(slice_rows(t, 1, m - 1), slice_rows(rk, 0, m - 1)); }, a) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(gather_rows(t, {1, 0, 1}), r3); }, b) < 1e-4);
    CHECK(finite_diff_check([&](const Tensor& t) { return sum(log_floor(mul(t, t), 1e-12)); }, a) < 1e-4);

    // attention: T tokens, d = heads * dh
    const std::size_t heads = 1 + seed % 2, dh = 2 + seed % 3, T = dim(rng);
    auto qkv = rand_tensor({T, 3 * heads * dh}, rng);
    auto ro = rand_tensor({T, heads * dh}, rng);
    CHECK(finite_diff_check([&](const Tensor& t) { return proj(attention(t, heads).out, ro); }, qkv) < 1e-4);
  }
}

TEST_CASE("attention rows are probability distributions") {
  std::mt19937_64 rng(2);
  auto qkv = rand_tensor({9, 3 * 8}, rng, 3.0);
  auto res = attention(qkv, 4);
  REQUIRE(res.probs.size() == 4 * 9 * 9);
  for (std::size_t r = 0; r < 4 * 9; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 9; ++c) s += res.probs[r * 9 + c];
    CHECK(std::fabs(s - 1.0) < 1e-10);
  }
  CHECK_THROWS_AS(attention(rand_tensor({3, 10}, rng), 4), InvalidInput);
}

TEST_CASE("computation record is topological and visits each node once") {
  std::mt19937_64 rng(1);
  auto x = Tensor::parameter({3, 3}, randn(9, rng));
  auto y = matmul(x, x);  // x used twice
  auto loss = sum(add(y, x));
  auto rec = ComputationRecord::trace(loss);
  std::set<std::uint64_t> ids;
  for (const auto& e : rec.entries()) {
    CHECK(ids.insert(e.output).second);
    for (auto in : e.inputs) CHECK(ids.count(in) == 1);
  }
  CHECK(rec.entries().back().output == loss.node_id());
  CHECK(rec.entries().size() == 4);  // x, matmul, add, sum
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    std::mt19937_64 rng(9);
    auto w = Tensor::parameter({6, 6}, randn(36, rng));
    auto x = rand_tensor({5, 6}, rng);
    auto h = layer_norm(gelu(matmul(x, w)), Tensor::constant({6}, std::vector<double>(6, 1.0)),
                        Tensor::zeros({6}));
    backward(sum(softmax(h, 0.3)));
    backward(sum(mul(h, h)));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  auto g1 = run();
  auto g2 = run();
  REQUIRE(g1.size() == 36);
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("tensor shape invariants") {
  CHECK_THROWS_AS(Tensor::constant({2, 3}, {1, 2, 3}), InvalidInput);
  auto t = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(t));
  CHECK(t.grad().size() == t.numel());
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(matmul(t, t), InvalidInput);
}
