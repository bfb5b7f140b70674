#pragma once

#include "lobg/tensor.hpp"

// Hierarchical logit distillation: a per-instance KL term plus a term that
// matches class co-activation matrices across the batch.
namespace lobg::hld {

constexpr double kProbFloor = 1e-12;

// (1/B) sum_b KL(teacher_b || student_b). The teacher is treated as a
// constant; student probabilities are floored at kProbFloor inside the log.
// Throws InvalidInput on shape mismatch.
Tensor ikd_loss(const Tensor& teacher_probs, const Tensor& student_probs);

// M = (1/B) P^T P, a C x C symmetric PSD matrix.
Tensor class_relation(const Tensor& probs);

// ||M_student - M_teacher||_F / C.
Tensor ckd_loss(const Tensor& teacher_relation, const Tensor& student_relation);

Tensor hld_total(const Tensor& ikd, const Tensor& ckd);

}  // namespace lobg::hld
