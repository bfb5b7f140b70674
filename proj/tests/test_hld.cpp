#include <doctest.h>

#include <cmath>

#include "lobg/errors.hpp"
#include "lobg/gradcheck.hpp"
#include "lobg/hld.hpp"
#include "lobg/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace lobg;
using lobg::testing::rand_tensor;
using lobg::testing::to_vec;

namespace {

Tensor random_probs(std::size_t b, std::size_t c, std::mt19937_64& rng, double spread = 2.0) {
  return softmax(rand_tensor({b, c}, rng, spread));
}

}  // namespace

TEST_CASE("ikd_loss examples") {
  auto p = Tensor::constant({1, 2}, {1.0, 0.0});
  auto q = Tensor::constant({1, 2}, {0.5, 0.5});
  CHECK(std::fabs(hld::ikd_loss(p, q).item() - std::log(2.0)) < 1e-12);
  CHECK(std::fabs(hld::ikd_loss(p, q).item() - oracle::kl({1.0, 0.0}, {0.5, 0.5})) < 1e-12);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    auto a = random_probs(4, 5, rng), b = random_probs(4, 5, rng);
    CHECK(hld::ikd_loss(a, b).item() >= 0.0);
    CHECK(std::fabs(hld::ikd_loss(a, a).item()) < 1e-15);
    const double want = oracle::ikd(oracle::to_mat(to_vec(a), 4, 5), oracle::to_mat(to_vec(b), 4, 5));
    CHECK(std::fabs(hld::ikd_loss(a, b).item() - want) < 1e-12);
  }

  // Zero student mass where the teacher has mass is floored, not infinite.
  auto z = Tensor::constant({1, 2}, {0.0, 1.0});
  CHECK(std::isfinite(hld::ikd_loss(q, z).item()));
  CHECK_THROWS_AS(hld::ikd_loss(p, Tensor::constant({1, 3}, {0.2, 0.3, 0.5})), InvalidInput);
}

TEST_CASE("class_relation examples") {
  auto onehot = Tensor::constant({2, 2}, {1, 0, 0, 1});
  auto m = hld::class_relation(onehot);
  CHECK(to_vec(m) == std::vector<double>{0.5, 0.0, 0.0, 0.5});

  auto uniform = Tensor::constant({3, 4}, std::vector<double>(12, 0.25));
  for (double v : to_vec(hld::class_relation(uniform))) CHECK(std::fabs(v - 1.0 / 16.0) < 1e-15);

  std::mt19937_64 rng(2);
  auto p = random_probs(4, 3, rng);
  auto want = oracle::class_relation(oracle::to_mat(to_vec(p), 4, 3));
  auto got = hld::class_relation(p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::fabs(got.at(i, j) - want[i][j]) <= 1e-12);
}

TEST_CASE("class_relation is symmetric PSD with entries in [0, 1]") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + trial % 8, c = 2 + trial % 6;
    auto m = hld::class_relation(random_probs(b, c, rng, 0.5 + trial % 5));
    auto mat = oracle::to_mat(to_vec(m), c, c);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(std::fabs(mat[i][j] - mat[j][i]) <= 1e-12);
        CHECK(mat[i][j] >= 0.0);
        CHECK(mat[i][j] <= 1.0);
      }
    for (double ev : oracle::symmetric_eigenvalues(mat)) CHECK(ev >= -1e-10);
  }
}

TEST_CASE("ckd_loss examples") {
  auto zero = Tensor::zeros({4, 4});
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  auto id = Tensor::constant({4, 4}, eye);
  CHECK(std::fabs(hld::ckd_loss(zero, id).item() - 0.5) < 1e-15);
  CHECK(hld::ckd_loss(id, id).item() == 0.0);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = hld::class_relation(random_probs(4, 5, rng));
    auto b = hld::class_relation(random_probs(4, 5, rng));
    const double want = oracle::ckd(oracle::to_mat(to_vec(a), 5, 5), oracle::to_mat(to_vec(b), 5, 5));
    CHECK(std::fabs(hld::ckd_loss(a, b).item() - want) <= 1e-12);
    CHECK(hld::ckd_loss(a, b).item() == doctest::Approx(hld::ckd_loss(b, a).item()).epsilon(1e-14));
  }
  CHECK_THROWS_AS(hld::ckd_loss(zero, Tensor::zeros({3, 3})), InvalidInput);
}

TEST_CASE("hld_total") {
  CHECK(hld::hld_total(Tensor::scalar(0), Tensor::scalar(0)).item() == 0.0);
  CHECK(hld::hld_total(Tensor::scalar(0.69), Tensor::scalar(0.5)).item() == doctest::Approx(1.19));
  std::mt19937_64 rng(5);
  auto a = random_probs(4, 4, rng), b = random_probs(4, 4, rng);
  auto ikd = hld::ikd_loss(a, b);
  auto ckd = hld::ckd_loss(hld::class_relation(a), hld::class_relation(b));
  CHECK(std::fabs(hld::hld_total(ikd, ckd).item() - (ikd.item() + ckd.item())) <= 1e-15);
}

TEST_CASE("hld gradients w.r.t. student logits") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed + 40);
    auto teacher = random_probs(4, 4, rng);
    auto logits = rand_tensor({4, 4}, rng);
    auto f = [&](const Tensor& x) {
      auto p = softmax(x);
      return hld::hld_total(hld::ikd_loss(teacher, p),
                            hld::ckd_loss(hld::class_relation(teacher), hld::class_relation(p)));
    };
    CHECK(finite_diff_check(f, logits) < 1e-4);
  }
}
