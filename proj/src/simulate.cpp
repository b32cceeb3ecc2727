#include "octenh/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "octenh/errors.hpp"

namespace octenh {

namespace {

constexpr double kFwhmToSigma = 2.3548200450309493; // 2*sqrt(2*ln 2)

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
    std::ptrdiff_t m = static_cast<std::ptrdiff_t>(n);
    std::ptrdiff_t r = i % m;
    return static_cast<std::size_t>(r < 0 ? r + m : r);
}

} // namespace

void Psf::validate() const {
    if (taps.empty()) throw SupportTooSmall("psf has no taps");
    if (center_index >= taps.size()) throw InvariantViolation("psf center outside support");
    double sum = 0.0;
    for (double t : taps) {
        if (!std::isfinite(t) || t < 0.0) throw InvariantViolation("psf taps must be finite and non-negative");
        sum += t;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvariantViolation("psf taps must sum to 1");
}

void SourceSpectrum::validate() const {
    if (samples.size() < 2) throw InvariantViolation("spectrum needs at least 2 samples");
    if (!(k_max > k_min)) throw InvariantViolation("spectrum needs k_max > k_min");
    for (double v : samples)
        if (!std::isfinite(v) || v < 0.0) throw NonFiniteData("spectrum samples must be finite and non-negative");
}

void Reflectivity::validate() const {
    if (values.empty()) throw EmptyReflectivity("reflectivity profile is empty");
    if (!(granularity_um > 0.0)) throw InvariantViolation("granularity must be positive");
    for (double v : values)
        if (!std::isfinite(v) || v < 0.0) throw NonFiniteData("reflectivity must be finite and non-negative");
}

void PhantomSpec::validate() const {
    if (rows < 8 || cols < 1) throw SpecInvalid("phantom needs rows >= 8, cols >= 1");
    if (free_space_rows < 4) throw SpecInvalid("phantom needs free_space_rows >= 4");
    if (!(pitch_z_um > 0.0)) throw SpecInvalid("phantom pitch must be positive");
    if (layers.empty()) throw SpecInvalid("phantom needs at least one layer");
    if (layers.front().start_offset_px != 0) throw SpecInvalid("first layer must start at the surface");
    for (std::size_t i = 1; i < layers.size(); ++i)
        if (layers[i].start_offset_px <= layers[i - 1].start_offset_px)
            throw SpecInvalid("layer offsets must be strictly increasing");
    for (const auto& l : layers)
        if (!(l.mean_amplitude > 0.0) || l.mean_amplitude > 1.0)
            throw SpecInvalid("layer amplitude must be in (0, 1]");
    double max_surface = static_cast<double>(free_space_rows) + surface_wave_amp_px;
    if (max_surface + 1.0 >= static_cast<double>(rows))
        throw SpecInvalid("surface would leave no tissue rows");
    for (const auto& p : reflectors) {
        if (p.row >= rows || p.col >= cols) throw SpecInvalid("reflector outside frame");
        if (!(p.amplitude > 0.0) || p.amplitude > 1.0) throw SpecInvalid("reflector amplitude must be in (0, 1]");
    }
    if (speckle_sigma < 0.0 || amp_jitter < 0.0 || noise_floor_sigma < 0.0)
        throw SpecInvalid("phantom noise parameters must be non-negative");
}

Psf delta_psf(std::size_t support_px, double pitch_z_um) {
    if (support_px == 0) throw SupportTooSmall("psf support must be at least 1");
    Psf p;
    p.taps.assign(support_px, 0.0);
    p.center_index = support_px / 2;
    p.taps[p.center_index] = 1.0;
    p.pitch_z_um = pitch_z_um;
    return p;
}

Psf gaussian_psf(double fwhm_um, double pitch_z_um, std::size_t support_px) {
    if (!(pitch_z_um > 0.0)) throw InvariantViolation("pitch must be positive");
    if (!(fwhm_um >= 0.0) || !std::isfinite(fwhm_um)) throw InvariantViolation("fwhm must be finite and non-negative");
    if (support_px < 3 || support_px % 2 == 0) throw SupportTooSmall("psf support must be odd and >= 3");
    if (fwhm_um < pitch_z_um / 10.0) return delta_psf(support_px, pitch_z_um);

    double sigma_px = fwhm_um / (kFwhmToSigma * pitch_z_um);
    // Keep >= 3 sigma on each side so the normalized tails are negligible.
    if (static_cast<double>(support_px) < 6.0 * sigma_px)
        throw SupportTooSmall("psf support below 6 sigma");

    Psf p;
    p.taps.resize(support_px);
    p.center_index = support_px / 2;
    p.pitch_z_um = pitch_z_um;
    double sum = 0.0;
    for (std::size_t i = 0; i < support_px; ++i) {
        double d = (static_cast<double>(i) - static_cast<double>(p.center_index)) / sigma_px;
        p.taps[i] = std::exp(-0.5 * d * d);
        sum += p.taps[i];
    }
    for (double& t : p.taps) t /= sum;
    return p;
}

Psf sidelobe_psf(double fwhm_um, double pitch_z_um, double lobe_ratio,
                 std::ptrdiff_t lobe_offset_px, std::size_t support_px) {
    if (lobe_ratio < 0.0 || lobe_ratio >= 1.0) throw InvariantViolation("lobe ratio must be in [0, 1)");
    if (lobe_offset_px == 0) throw InvariantViolation("lobe offset must be nonzero");
    Psf base = gaussian_psf(fwhm_um, pitch_z_um, support_px);
    if (lobe_ratio == 0.0) return base;

    std::ptrdiff_t c = static_cast<std::ptrdiff_t>(base.center_index);
    std::ptrdiff_t lobe_center = c + lobe_offset_px;
    if (lobe_center < 0 || lobe_center >= static_cast<std::ptrdiff_t>(support_px))
        throw SupportTooSmall("side lobe center outside support");

    double sigma_px = fwhm_um < pitch_z_um / 10.0 ? 0.0 : fwhm_um / (kFwhmToSigma * pitch_z_um);
    std::vector<double> lobe(support_px, 0.0);
    if (sigma_px == 0.0) {
        lobe[static_cast<std::size_t>(lobe_center)] = 1.0;
    } else {
        for (std::size_t i = 0; i < support_px; ++i) {
            double d = (static_cast<double>(i) - static_cast<double>(lobe_center)) / sigma_px;
            lobe[i] = std::exp(-0.5 * d * d);
        }
    }
    // Scale the lobe so its peak is lobe_ratio times the main peak.
    double main_peak = base.taps[base.center_index];
    double lobe_peak = *std::max_element(lobe.begin(), lobe.end());
    double scale = lobe_ratio * main_peak / lobe_peak;
    double sum = 0.0;
    for (std::size_t i = 0; i < support_px; ++i) {
        base.taps[i] += scale * lobe[i];
        sum += base.taps[i];
    }
    for (double& t : base.taps) t /= sum;
    return base;
}

BFrame degrade(const BFrame& frame, const Psf& psf) {
    frame.validate();
    psf.validate();
    std::size_t rows = frame.rows(), cols = frame.cols();
    if (psf.support() > rows) throw KernelTooLarge("psf support exceeds frame depth");

    BFrame out(rows, cols, frame.pitch_z_um);
    std::ptrdiff_t c = static_cast<std::ptrdiff_t>(psf.center_index);
    // out(r) = sum_t taps[t] * in(r - (t - c)); accumulate row-wise so columns
    // vectorize and the summation order per output element is fixed.
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = out.row(r);
        for (std::size_t t = 0; t < psf.support(); ++t) {
            double w = psf.taps[t];
            if (w == 0.0) continue;
            std::size_t src = wrap(static_cast<std::ptrdiff_t>(r) - (static_cast<std::ptrdiff_t>(t) - c), rows);
            const double* irow = frame.row(src);
            for (std::size_t j = 0; j < cols; ++j) orow[j] += w * irow[j];
        }
    }
    return out;
}

BFrame degrade_adjoint(const BFrame& frame, const Psf& psf) {
    frame.validate_finite();
    psf.validate();
    std::size_t rows = frame.rows(), cols = frame.cols();
    if (psf.support() > rows) throw KernelTooLarge("psf support exceeds frame depth");

    BFrame out(rows, cols, frame.pitch_z_um);
    std::ptrdiff_t c = static_cast<std::ptrdiff_t>(psf.center_index);
    // Adjoint flips the kernel: out(r) = sum_t taps[t] * in(r + (t - c)).
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = out.row(r);
        for (std::size_t t = 0; t < psf.support(); ++t) {
            double w = psf.taps[t];
            if (w == 0.0) continue;
            std::size_t src = wrap(static_cast<std::ptrdiff_t>(r) + (static_cast<std::ptrdiff_t>(t) - c), rows);
            const double* irow = frame.row(src);
            for (std::size_t j = 0; j < cols; ++j) orow[j] += w * irow[j];
        }
    }
    return out;
}

BFrame add_noise(const BFrame& frame, double sigma, std::uint64_t seed) {
    frame.validate();
    if (sigma < 0.0) throw InvariantViolation("noise sigma must be non-negative");
    BFrame out = frame;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data[i] = std::max(0.0, out.data[i] + sigma * rng.gaussian());
    return out;
}

BFrame shift(const BFrame& frame, const ShiftTransform& t) {
    frame.validate_finite();
    std::size_t rows = frame.rows(), cols = frame.cols();
    if (t.dz >= rows || t.dx >= cols) throw InvariantViolation("shift must be smaller than the frame");
    BFrame out(rows, cols, frame.pitch_z_um);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* irow = frame.row(r);
        double* orow = out.row((r + t.dz) % rows);
        if (t.dx == 0) {
            std::copy(irow, irow + cols, orow);
        } else {
            for (std::size_t j = 0; j < cols; ++j) orow[(j + t.dx) % cols] = irow[j];
        }
    }
    return out;
}

bool coverage_check(std::size_t g, std::size_t m, std::size_t n) {
    if (g == 0 || m == 0 || n == 0) throw InvariantViolation("coverage arguments must be positive");
    return g * m >= n;
}

BFrame axial_interpolate(const BFrame& frame, std::size_t factor) {
    frame.validate();
    if (factor < 2) throw InvariantViolation("interpolation factor must be >= 2");
    std::size_t rows = frame.rows(), cols = frame.cols();
    BFrame out(rows * factor, cols, frame.pitch_z_um / static_cast<double>(factor));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* a = frame.row(r);
        const double* b = frame.row((r + 1) % rows);
        for (std::size_t s = 0; s < factor; ++s) {
            double w = static_cast<double>(s) / static_cast<double>(factor);
            double* orow = out.row(r * factor + s);
            for (std::size_t j = 0; j < cols; ++j) orow[j] = (1.0 - w) * a[j] + w * b[j];
        }
    }
    return out;
}

SpectralAcquisition simulate_spectral_acquisition(const Reflectivity& r,
                                                  const SourceSpectrum& s,
                                                  std::size_t m_samples) {
    r.validate();
    s.validate();
    if (m_samples < 2) throw InvariantViolation("need at least 2 spectral samples");
    if (m_samples > s.samples.size())
        throw DimMismatch("m_samples exceeds the available spectrum sampling");

    // The wavenumber grid belongs to the full spectrum; m_samples truncates
    // the measurement to the first m_samples detector bins.
    double dk = (s.k_max - s.k_min) / static_cast<double>(s.samples.size() - 1);
    SpectralAcquisition acq;
    acq.fringe.resize(m_samples);
    for (std::size_t j = 0; j < m_samples; ++j) {
        double k = s.k_min + dk * static_cast<double>(j);
        double acc = 0.0;
        for (std::size_t n = 0; n < r.values.size(); ++n) {
            double z = static_cast<double>(n) * r.granularity_um;
            acc += r.values[n] * std::cos(2.0 * k * z) * r.granularity_um;
        }
        acq.fringe[j] = 2.0 * s.samples[j] * acc;
    }

    // |IDFT| and keep the positive-depth half.
    std::size_t half = m_samples / 2;
    acq.recon.depth_samples.resize(half);
    acq.recon.pitch_z_um = std::numbers::pi / (static_cast<double>(m_samples) * dk);
    for (std::size_t q = 0; q < half; ++q) {
        double re = 0.0, im = 0.0;
        for (std::size_t j = 0; j < m_samples; ++j) {
            double ph = 2.0 * std::numbers::pi * static_cast<double>(q) * static_cast<double>(j) /
                        static_cast<double>(m_samples);
            re += acq.fringe[j] * std::cos(ph);
            im += acq.fringe[j] * std::sin(ph);
        }
        acq.recon.depth_samples[q] = std::hypot(re, im) / static_cast<double>(m_samples);
    }
    return acq;
}

PhantomResult make_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    Rng speckle_rng = rng.sub(1);
    Rng jitter_rng = rng.sub(2);
    Rng floor_rng = rng.sub(3);

    PhantomResult res{BFrame(spec.rows, spec.cols, spec.pitch_z_um), {}};
    res.surface_rows.resize(spec.cols);

    // Per-layer jittered means, shared across columns so layers stay coherent.
    std::vector<double> layer_amp(spec.layers.size());
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        double jitter = spec.amp_jitter > 0.0 ? 1.0 + spec.amp_jitter * (2.0 * jitter_rng.uniform01() - 1.0) : 1.0;
        layer_amp[l] = std::clamp(spec.layers[l].mean_amplitude * jitter, 1e-4, 1.0);
    }

    // Lognormal multiplier with unit mean: exp(sigma*g - sigma^2/2).
    double s2 = 0.5 * spec.speckle_sigma * spec.speckle_sigma;
    for (std::size_t c = 0; c < spec.cols; ++c) {
        double wave = spec.surface_wave_amp_px == 0.0
                          ? 0.0
                          : spec.surface_wave_amp_px *
                                std::sin(2.0 * std::numbers::pi * static_cast<double>(c) /
                                         spec.surface_wave_period_cols);
        std::ptrdiff_t surf = static_cast<std::ptrdiff_t>(spec.free_space_rows) +
                              static_cast<std::ptrdiff_t>(std::llround(wave));
        surf = std::clamp<std::ptrdiff_t>(surf, 1, static_cast<std::ptrdiff_t>(spec.rows) - 2);
        res.surface_rows[c] = static_cast<std::size_t>(surf);

        for (std::size_t r = 0; r < spec.rows; ++r) {
            double v = 0.0;
            if (static_cast<std::ptrdiff_t>(r) >= surf) {
                std::size_t offset = r - static_cast<std::size_t>(surf);
                std::size_t layer = 0;
                for (std::size_t l = 0; l < spec.layers.size(); ++l)
                    if (offset >= spec.layers[l].start_offset_px) layer = l;
                double speckle = spec.speckle_sigma > 0.0
                                     ? std::exp(spec.speckle_sigma * speckle_rng.gaussian() - s2)
                                     : 1.0;
                v = std::min(1.0, layer_amp[layer] * speckle);
            } else if (spec.noise_floor_sigma > 0.0) {
                v = std::max(0.0, spec.noise_floor_sigma * floor_rng.gaussian());
            }
            res.gt.at(r, c) = v;
        }
    }

    for (const auto& p : spec.reflectors) res.gt.at(p.row, p.col) = p.amplitude;
    return res;
}

} // namespace octenh
