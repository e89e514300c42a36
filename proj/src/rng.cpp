#include "copfrail/rng.hpp"

#include <cmath>

#include "copfrail/special.hpp"

namespace copfrail {

double Rng::normal() {
    // Inverse-cdf draw keeps the stream one-uniform-per-normal.
    return special::norm_quantile(uniform01());
}

double Rng::gamma(double shape, double scale) {
    if (shape < 1.0) {
        // Boost the shape by one, then correct (Marsaglia-Tsang, sec. 6).
        const double u = uniform01();
        return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double v = 1.0 + c * x;
        if (v <= 0.0) continue;
        v = v * v * v;
        const double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
}

}  // namespace copfrail
