#pragma once

namespace parl {

// Regularized incomplete beta function I_x(a, b), continued-fraction
// evaluation (modified Lentz), accurate to ~1e-12 for the ranges used here.
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided p-value of a Student-t statistic with `dof` degrees of freedom:
// p = I_{dof/(dof+t^2)}(dof/2, 1/2).
double student_t_two_sided_p(double t, double dof);

}  // namespace parl
