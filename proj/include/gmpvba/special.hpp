#pragma once

namespace gmpvba {

/// Digamma function psi(x) = Gamma'(x) / Gamma(x) for x > 0.
///
/// The argument is shifted above 6 with psi(x) = psi(x + 1) - 1/x and the
/// asymptotic expansion is summed through the x^-14 term. Absolute error is
/// below 1e-12 on [1e-3, 1e6].
double digamma(double x);

/// ln Gamma(x) for x > 0, by the same shift and the Stirling series.
double ln_gamma(double x);

}  // namespace gmpvba
