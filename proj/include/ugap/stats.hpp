#pragma once

#include <span>

namespace ugap::stats {

/// I_x(a, b) by continued fraction (modified Lentz). a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

/// P(T <= t) for Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// P(|T| >= |t|).
double two_sided_t_pvalue(double t, double df);

double mean(std::span<const double> xs);

/// Standard deviation with the n - 1 denominator; 0 for fewer than two values.
double sample_sd(std::span<const double> xs);

double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace ugap::stats
