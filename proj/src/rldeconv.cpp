#include "octenh/rldeconv.hpp"

#include <algorithm>
#include <cmath>

#include "octenh/errors.hpp"

namespace octenh {

BFrame richardson_lucy(const BFrame& frame, const Psf& psf, std::size_t iterations,
                       double epsilon) {
    frame.validate();
    psf.validate();
    if (iterations < 1) throw InvariantViolation("RL needs at least 1 iteration");
    if (!(epsilon > 0.0)) throw InvariantViolation("RL epsilon must be positive");
    if (psf.support() > frame.rows()) throw KernelTooLarge("psf support exceeds frame depth");

    BFrame est = frame;
    BFrame ratio(frame.rows(), frame.cols(), frame.pitch_z_um);
    for (std::size_t it = 0; it < iterations; ++it) {
        BFrame denom = degrade(est, psf);
        for (std::size_t i = 0; i < ratio.size(); ++i)
            ratio.data[i] = frame.data[i] / std::max(denom.data[i], epsilon);
        BFrame corr = degrade_adjoint(ratio, psf);
        for (std::size_t i = 0; i < est.size(); ++i) est.data[i] *= corr.data[i];
    }
    return est;
}

double rl_poisson_objective(const BFrame& frame_obs, const BFrame& frame_est, const Psf& psf) {
    if (!frame_obs.same_dims(frame_est)) throw DimMismatch("observation and estimate differ in dims");
    frame_est.validate();
    constexpr double eps = 1e-12;
    BFrame h = degrade(frame_est, psf);
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i)
        acc += h.data[i] - frame_obs.data[i] * std::log(h.data[i] + eps);
    return acc;
}

} // namespace octenh
