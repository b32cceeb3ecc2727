#pragma once

#include "octenh/image.hpp"
#include "octenh/simulate.hpp"

namespace octenh {

// Multiplicative Richardson-Lucy restoration against the axial circular
// degradation operator. The observed frame seeds the iteration; the ratio
// denominator is guarded by max(., epsilon).
BFrame richardson_lucy(const BFrame& frame, const Psf& psf, std::size_t iterations,
                       double epsilon = 1e-12);

// Descent functional of the RL iteration: sum of H(est) - obs*ln(H(est)+eps).
double rl_poisson_objective(const BFrame& frame_obs, const BFrame& frame_est, const Psf& psf);

} // namespace octenh
