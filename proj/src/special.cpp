#include "gmpvba/special.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gmpvba {

namespace {

constexpr double kShift = 6.0;

void require_positive(double x, const char* name)
{
    if (!(x > 0.0) || !std::isfinite(x))
        throw std::domain_error(std::string(name) + " requires a finite positive argument, got " + std::to_string(x));
}

}  // namespace

double digamma(double x)
{
    require_positive(x, "digamma");
    double shift = 0.0;
    while (x < kShift) {
        shift -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Bernoulli coefficients B_2n / (2n) for n = 1..7.
    const double series =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 -
                                        inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
    return shift + std::log(x) - 0.5 * inv - series;
}

double ln_gamma(double x)
{
    require_positive(x, "ln_gamma");
    double log_product = 0.0;
    if (x < kShift) {
        double product = 1.0;
        while (x < kShift) {
            product *= x;
            x += 1.0;
        }
        log_product = std::log(product);
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // B_2n / (2n (2n - 1)) for n = 1..7.
    const double series =
        inv * (1.0 / 12.0 -
               inv2 * (1.0 / 360.0 -
                       inv2 * (1.0 / 1260.0 -
                               inv2 * (1.0 / 1680.0 -
                                       inv2 * (1.0 / 1188.0 - inv2 * (691.0 / 360360.0 - inv2 * (1.0 / 156.0)))))));
    const double half_log_two_pi = 0.5 * std::log(2.0 * std::numbers::pi);
    return (x - 0.5) * std::log(x) - x + half_log_two_pi + series - log_product;
}

}  // namespace gmpvba
