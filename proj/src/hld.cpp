#include "lobg/hld.hpp"

#include <cmath>

#include "lobg/errors.hpp"
#include "lobg/ops.hpp"

namespace lobg::hld {

namespace {

void same_shape(const char* what, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw InvalidInput(std::string(what) + ": teacher " + shape_str(a.shape()) + " vs student " +
                       shape_str(b.shape()));
  }
}

}  // namespace

Tensor ikd_loss(const Tensor& teacher_probs, const Tensor& student_probs) {
  same_shape("ikd_loss", teacher_probs, student_probs);
  const auto& pt = teacher_probs.values();
  const double batch = static_cast<double>(teacher_probs.rows());
  // Entropy part depends only on the teacher.
  double neg_entropy = 0.0;
  for (double p : pt)
    if (p > 0) neg_entropy += p * std::log(p);
  auto target = teacher_probs.detach();
  auto cross = sum(mul(target, log_floor(student_probs, kProbFloor)));
  return scale(sub(Tensor::scalar(neg_entropy), cross), 1.0 / batch);
}

Tensor class_relation(const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() == 0) throw InvalidInput("class_relation: need a non-empty [B, C] matrix");
  return scale(matmul_tn(probs, probs), 1.0 / static_cast<double>(probs.rows()));
}

Tensor ckd_loss(const Tensor& teacher_relation, const Tensor& student_relation) {
  same_shape("ckd_loss", teacher_relation, student_relation);
  auto diff = sub(student_relation, teacher_relation.detach());
  return scale(sqrt_elem(sum(mul(diff, diff))), 1.0 / static_cast<double>(teacher_relation.rows()));
}

Tensor hld_total(const Tensor& ikd, const Tensor& ckd) { return add(ikd, ckd); }

}  // namespace lobg::hld
