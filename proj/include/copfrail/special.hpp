#pragma once

#include <cmath>

namespace copfrail::special {

// Standard normal cdf/quantile and log-pdf.
double norm_cdf(double x);
double norm_quantile(double p);
double norm_log_pdf(double x);

// Regularized lower incomplete gamma P(a, x) and its inverse in x.
double gamma_cdf(double x, double shape, double scale);
double gamma_quantile(double p, double shape, double scale);

double digamma(double x);
double trigamma(double x);

}  // namespace copfrail::special
