#include <doctest.h>

#include <cmath>
#include <initializer_list>
#include <stdexcept>

#include "gmpvba/special.hpp"

namespace {

struct Frozen {
    double x;
    double digamma;
    double ln_gamma;
};

// Reference values from mpmath at 40 digits.
constexpr Frozen kFrozen[] = {
    {1e-3, -1000.5755719318103005, 6.9071788853838536825},
    {0.1, -10.423754940411076795, 2.2527126517342059599},
    {0.5, -1.9635100260214234794, 0.57236494292470008707},
    {1.0, -0.57721566490153286061, 0.0},
    {1.5, 0.036489973978576520559, -0.12078223763524522235},
    {2.0, 0.42278433509846713939, 0.0},
    {3.7, 1.1671535393615113859, 1.4280723266653879219},
    {6.0, 1.7061176684318004727, 4.7874917427820459942},
    {10.25, 2.2777047906867239693, 13.368023671476046295},
    {100.0, 4.6001618527380874002, 359.13420536957539878},
    {1e4, 9.2102903711428494036, 82099.717496442377273},
    {1e6, 13.815510057964190771, 12815504.56914761166},
};

}  // namespace

TEST_CASE("digamma matches high-precision values")
{
    for (const auto& f : kFrozen) {
        CAPTURE(f.x);
        CHECK(std::abs(gmpvba::digamma(f.x) - f.digamma) <= 1e-12 * std::max(1.0, std::abs(f.digamma)));
    }
}

TEST_CASE("ln_gamma matches high-precision values")
{
    for (const auto& f : kFrozen) {
        CAPTURE(f.x);
        CHECK(std::abs(gmpvba::ln_gamma(f.x) - f.ln_gamma) <= 1e-12 * std::max(1.0, std::abs(f.ln_gamma)));
    }
}

TEST_CASE("digamma recurrence and ln_gamma recurrence")
{
    for (double x : {0.01, 0.3, 1.0, 2.5, 7.0, 40.0}) {
        CAPTURE(x);
        CHECK(gmpvba::digamma(x + 1.0) - gmpvba::digamma(x) == doctest::Approx(1.0 / x).epsilon(1e-12));
        CHECK(gmpvba::ln_gamma(x + 1.0) - gmpvba::ln_gamma(x) == doctest::Approx(std::log(x)).epsilon(1e-11));
    }
}

TEST_CASE("special functions reject nonpositive arguments")
{
    CHECK_THROWS(gmpvba::digamma(0.0));
    CHECK_THROWS(gmpvba::digamma(-1.5));
    CHECK_THROWS(gmpvba::ln_gamma(0.0));
}
