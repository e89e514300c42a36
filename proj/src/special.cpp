#include "copfrail/special.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace copfrail::special {

namespace {
const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);
constexpr double kLogTwoPi = 1.8378770664093454836;
}  // namespace

double norm_cdf(double x) { return boost::math::cdf(kStdNormal, x); }

double norm_quantile(double p) { return boost::math::quantile(kStdNormal, p); }

double norm_log_pdf(double x) { return -0.5 * (kLogTwoPi + x * x); }

double gamma_cdf(double x, double shape, double scale) {
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(shape, x / scale);
}

double gamma_quantile(double p, double shape, double scale) {
    return scale * boost::math::gamma_p_inv(shape, p);
}

double digamma(double x) { return boost::math::digamma(x); }

double trigamma(double x) { return boost::math::trigamma(x); }

}  // namespace copfrail::special
