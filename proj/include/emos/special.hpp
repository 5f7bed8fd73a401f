#pragma once

namespace emos {

// Lower incomplete gamma function, unnormalised:
//   gamma_l(a, x) = integral_0^x t^(a-1) e^(-t) dt,  a > 0, x >= 0.
// Series expansion for x < a+1, continued fraction otherwise; relative
// accuracy well below 1e-12 over the range used here.
double lower_incomplete_gamma(double a, double x);

// Regularised lower incomplete gamma P(a,x) = gamma_l(a,x) / Gamma(a).
double regularized_gamma_p(double a, double x);

// Regularised incomplete beta I_x(a,b); drives the Student-t tail probability
// in the paired test.
double regularized_incomplete_beta(double a, double b, double x);

}  // namespace emos
