#pragma once

namespace pimeta {

// Standard normal CDF.
double normal_cdf(double z);

// Inverse standard normal CDF (Acklam's rational approximation with one
// Halley refinement step; relative error below 1e-13).
double normal_quantile(double p);

}  // namespace pimeta
