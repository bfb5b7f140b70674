#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lobg/errors.hpp"
#include "lobg/gradcheck.hpp"
#include "lobg/log.hpp"
#include "lobg/ops.hpp"
#include "lobg/stp.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lobg;
using lobg::stp::TripletSet;
using lobg::testing::rand_tensor;
using lobg::testing::to_vec;

namespace {

Tensor from_mat(const oracle::Mat& m) {
  std::vector<double> flat;
  for (const auto& r : m) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::constant({m.size(), m[0].size()}, flat);
}

TripletSet all_triplets(std::size_t b) {
  std::mt19937_64 rng(0);
  return stp::make_triplets(b, rng);
}

}  // namespace

TEST_CASE("layer weights") {
  std::mt19937_64 rng(1);
  auto one = stp::sample_layer_weights(1, 1.0, 1.0, 0.0, rng);
  REQUIRE(one.w.size() == 1);
  CHECK(one.w[0] == doctest::Approx(1.0).epsilon(1e-15));

  auto flat = stp::sample_layer_weights(4, 2.0, 1e6, 0.0, rng);
  for (double w : flat.w) CHECK(std::fabs(w - 0.25) < 1e-6);

  auto peak = stp::sample_layer_weights(4, 4.0, 1.0, 0.0, rng);
  CHECK(std::max_element(peak.w.begin(), peak.w.end()) - peak.w.begin() == 3);
  // direct kernel: exp(-(i-4)^2/2) for i = 1..4
  double z = 0;
  for (int i = 1; i <= 4; ++i) z += std::exp(-(i - 4.0) * (i - 4.0) / 2.0);
  for (int i = 1; i <= 4; ++i) CHECK(std::fabs(peak.w[i - 1] - std::exp(-(i - 4.0) * (i - 4.0) / 2.0) / z) < 1e-15);

  for (int trial = 0; trial < 50; ++trial) {
    auto w = stp::sample_layer_weights(4, 4.0, 1.0, 0.5, rng);
    CHECK(std::fabs(std::accumulate(w.w.begin(), w.w.end(), 0.0) - 1.0) < 1e-12);
    for (double v : w.w) CHECK(v >= 0.0);
  }

  CHECK_THROWS_AS(stp::sample_layer_weights(0, 1.0, 1.0, 0.0, rng), InvalidParameter);
  CHECK_THROWS_AS(stp::sample_layer_weights(4, 1.0, 0.0, 0.0, rng), InvalidParameter);
}

TEST_CASE("fuse_layers") {
  auto z1 = Tensor::constant({1, 2}, {1, 0});
  auto z2 = Tensor::constant({1, 2}, {0, 1});
  auto f = stp::fuse_layers(std::vector<Tensor>{z1, z2}, {{0.3, 0.7}});
  CHECK(f.at(0, 0) == doctest::Approx(0.3));
  CHECK(f.at(0, 1) == doctest::Approx(0.7));

  auto sel = stp::fuse_layers(std::vector<Tensor>{z1, z2}, {{0.0, 1.0}});
  CHECK(to_vec(sel) == to_vec(z2));

  auto same = stp::fuse_layers(std::vector<Tensor>{z1, z1, z1}, {{0.2, 0.5, 0.3}});
  CHECK(std::fabs(same.at(0, 0) - 1.0) < 1e-15);

  CHECK_THROWS_AS(stp::fuse_layers(std::vector<Tensor>{z1, z2}, {{1.0}}), InvalidInput);
}

TEST_CASE("triplet sets") {
  auto t4 = all_triplets(4);
  CHECK(t4.size() == 24);
  auto t8 = all_triplets(8);
  CHECK(t8.size() == 8 * 7 * 6);
  std::mt19937_64 rng(3);
  auto t20 = stp::make_triplets(20, rng);
  CHECK(t20.size() == 256);
  for (const auto& t : t20) {
    CHECK(t.i < 20);
    CHECK(t.j < 20);
    CHECK(t.k < 20);
    CHECK((t.i != t.j && t.j != t.k && t.i != t.k));
  }
  CHECK(all_triplets(2).empty());
}

TEST_CASE("angle_relation examples") {
  auto z = Tensor::constant({3, 2}, {1, 0, 0, 0, 0, 1});
  CHECK(std::fabs(stp::angle_relation(z, 0, 1, 2)->item()) < 1e-15);

  auto collinear = Tensor::constant({3, 2}, {1, 0, 0, 0, 2, 0});
  CHECK(stp::angle_relation(collinear, 0, 1, 2)->item() == doctest::Approx(1.0).epsilon(1e-12));

  auto diag = Tensor::constant({3, 2}, {1, 0, 0, 0, 1, 1});
  CHECK(std::fabs(stp::angle_relation(diag, 0, 1, 2)->item() - 1.0 / std::sqrt(2.0)) < 1e-12);
  CHECK(std::fabs(*stp::angle_relation_value(diag, 0, 1, 2) - 1.0 / std::sqrt(2.0)) < 1e-12);

  auto coincident = Tensor::constant({3, 2}, {1, 1, 1, 1, 0, 1});
  CHECK_FALSE(stp::angle_relation(coincident, 0, 1, 2).has_value());
  CHECK_THROWS_AS(stp::angle_relation(z, 0, 0, 2), InvalidInput);
}

TEST_CASE("stp_vision_loss identity, degenerate and small batches") {
  std::mt19937_64 rng(5);
  auto t = rand_tensor({4, 8}, rng);
  auto same = stp::stp_vision_loss(t, t, all_triplets(4));
  CHECK(same.value.item() == 0.0);
  CHECK(same.used == 24);

  // Two coincident rows: every triple with both as an edge is skipped.
  auto v = to_vec(t);
  std::copy(v.begin(), v.begin() + 8, v.begin() + 8);
  auto dup = Tensor::constant({4, 8}, v);
  auto r = stp::stp_vision_loss(dup, rand_tensor({4, 8}, rng), all_triplets(4));
  CHECK(r.skipped > 0);
  CHECK(r.used + r.skipped == 24);

  set_log_level(LogLevel::kQuiet);
  auto tiny = stp::stp_vision_loss(rand_tensor({2, 8}, rng), rand_tensor({2, 8}, rng), {});
  set_log_level(LogLevel::kWarning);
  CHECK(tiny.value.item() == 0.0);

  CHECK_THROWS_AS(stp::stp_vision_loss(rand_tensor({4, 8}, rng), rand_tensor({4, 7}, rng), all_triplets(4)),
                  InvalidInput);
}

TEST_CASE("stp_vision_loss matches the brute-force triple loop") {
  for (std::size_t b = 3; b <= 5; ++b) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed * 31 + b);
      auto t = rand_tensor({b, 6}, rng);
      auto s = rand_tensor({b, 6}, rng);
      const double got = stp::stp_vision_loss(t, s, all_triplets(b)).value.item();
      const double want = oracle::stp_vision(oracle::to_mat(to_vec(t), b, 6), oracle::to_mat(to_vec(s), b, 6));
      CHECK(std::fabs(got - want) <= 1e-12);
    }
  }
}

TEST_CASE("stp_vision_loss is invariant to similarity transforms") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto t = oracle::to_mat(lobg::testing::randn(4 * 8, rng), 4, 8);
    auto q = oracle::random_orthogonal(8, rng);
    auto shift = lobg::testing::randn(8, rng, 3.0);
    for (double s : {0.1, 1.0, 10.0}) {
      oracle::Mat moved(4, std::vector<double>(8, 0.0));
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t i = 0; i < 8; ++i) {
          for (std::size_t k = 0; k < 8; ++k) moved[r][i] += q[i][k] * t[r][k];
          moved[r][i] = s * moved[r][i] + shift[i];
        }
      CHECK(stp::stp_vision_loss(from_mat(t), from_mat(moved), all_triplets(4)).value.item() < 1e-9);
    }
  }
}

TEST_CASE("stp_vision_loss is permutation consistent") {
  std::mt19937_64 rng(9);
  auto t = oracle::to_mat(lobg::testing::randn(5 * 4, rng), 5, 4);
  auto s = oracle::to_mat(lobg::testing::randn(5 * 4, rng), 5, 4);
  std::mt19937_64 trng(1);
  auto trip = stp::make_triplets(5, trng, 40, 0);  // force the sampled path
  const double base = stp::stp_vision_loss(from_mat(t), from_mat(s), trip).value.item();

  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new row r holds old row perm[r]
  std::vector<std::size_t> inv(5);
  for (std::size_t r = 0; r < 5; ++r) inv[perm[r]] = r;
  oracle::Mat tp(5), sp(5);
  for (std::size_t r = 0; r < 5; ++r) {
    tp[r] = t[perm[r]];
    sp[r] = s[perm[r]];
  }
  TripletSet moved;
  for (const auto& x : trip) moved.push_back({inv[x.i], inv[x.j], inv[x.k]});
  CHECK(std::fabs(stp::stp_vision_loss(from_mat(tp), from_mat(sp), moved).value.item() - base) < 1e-14);
}

TEST_CASE("stp_text_loss") {
  std::mt19937_64 rng(11);
  auto t = rand_tensor({4, 8}, rng);
  CHECK(stp::stp_text_loss(t, t).item() == 0.0);
  auto v = to_vec(t);
  for (auto& x : v) x += 0.5;
  CHECK(std::fabs(stp::stp_text_loss(t, Tensor::constant({4, 8}, v)).item() - 0.5) < 1e-12);
  auto s = rand_tensor({4, 8}, rng);
  const double want = oracle::mean_abs_diff(oracle::to_mat(to_vec(t), 4, 8), oracle::to_mat(to_vec(s), 4, 8));
  CHECK(std::fabs(stp::stp_text_loss(t, s).item() - want) <= 1e-12);
  CHECK_THROWS_AS(stp::stp_text_loss(t, rand_tensor({3, 8}, rng)), InvalidInput);
}

TEST_CASE("stp_total") {
  CHECK(stp::stp_total(Tensor::scalar(0), Tensor::scalar(0)).item() == 0.0);
  CHECK(stp::stp_total(Tensor::scalar(0.2), Tensor::scalar(0.3)).item() == doctest::Approx(0.5));
  std::mt19937_64 rng(2);
  auto t = rand_tensor({4, 8}, rng), s = rand_tensor({4, 8}, rng);
  auto v = stp::stp_vision_loss(t, s, all_triplets(4)).value;
  auto x = stp::stp_text_loss(t, s);
  CHECK(std::fabs(stp::stp_total(v, x).item() - (v.item() + x.item())) <= 1e-15);
}

TEST_CASE("stp gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 100);
    auto t = rand_tensor({4, 8}, rng);
    auto s = rand_tensor({4, 8}, rng);
    auto tt = rand_tensor({3, 8}, rng);
    auto st = rand_tensor({3, 8}, rng);
    auto trip = all_triplets(4);
    const double err_v = finite_diff_check(
        [&](const Tensor& x) { return stp::stp_vision_loss(t, x, trip).value; }, s);
    const double err_t = finite_diff_check([&](const Tensor& x) { return stp::stp_text_loss(tt, x); }, st);
    CHECK(err_v < 1e-4);
    CHECK(err_t < 1e-4);
  }
}
