#pragma once

#include <span>

namespace curlm::stats {

/// Regularized incomplete beta I_x(a, b).
double regularized_incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided tail probability P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);

struct TTestResult {
  int n = 0;
  int df = 0;
  double mean_diff = 0.0;
  double sd_diff = 0.0;  // sample sd (n - 1 denominator)
  double t = 0.0;
  double p = 1.0;
  bool degenerate = false;  // sd of the differences is zero
};

/// Paired two-sided t-test on d_i = a_i - b_i. All-zero differences give
/// t = 0, p = 1; zero sd with a nonzero mean gives t = +-inf, p = 0 and sets
/// `degenerate`. Throws InvalidArgument when the lengths differ or n < 2.
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace curlm::stats
