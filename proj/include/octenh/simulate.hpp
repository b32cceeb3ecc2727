#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "octenh/image.hpp"
#include "octenh/rng.hpp"

namespace octenh {

// 1-D axial convolution kernel h(z). Taps are non-negative and sum to 1
// (unit L1) so the degradation operator preserves the DC level.
struct Psf {
    std::vector<double> taps;
    std::size_t center_index = 0;
    double pitch_z_um = 1.0;

    std::size_t support() const { return taps.size(); }
    void validate() const;
};

// Power spectral density S(k) sampled uniformly over [k_min, k_max].
// Wavenumbers are in rad/um.
struct SourceSpectrum {
    std::vector<double> samples;
    double k_min = 0.0;
    double k_max = 1.0;

    void validate() const;
};

// Sample reflectivity r_S(z_n) on a grid of granularity delta_n (um), with
// z_n = n * delta_n measured from the zero-delay position.
struct Reflectivity {
    std::vector<double> values;
    double granularity_um = 1.0;

    void validate() const;
};

// Circular roll of a frame: dz rows along depth, dx columns along the fast
// scanning axis.
struct ShiftTransform {
    std::size_t dz = 0;
    std::size_t dx = 0;

    ShiftTransform inverse_for(std::size_t rows, std::size_t cols) const {
        return {dz == 0 ? 0 : rows - dz, dx == 0 ? 0 : cols - dx};
    }
};

struct PhantomLayer {
    std::size_t start_offset_px = 0; // depth below the surface where the layer begins
    double mean_amplitude = 0.5;
};

struct PhantomReflector {
    std::size_t row = 0;
    std::size_t col = 0;
    double amplitude = 1.0;
};

// Synthetic layered-tissue ground truth: free space on top, speckled layers
// below, optional isolated point reflectors.
struct PhantomSpec {
    std::size_t rows = 64;
    std::size_t cols = 64;
    double pitch_z_um = 3.5;
    std::size_t free_space_rows = 16;
    double surface_wave_amp_px = 0.0;    // sinusoidal surface height variation
    double surface_wave_period_cols = 32.0;
    std::vector<PhantomLayer> layers;    // first layer must start at offset 0
    std::vector<PhantomReflector> reflectors;
    double speckle_sigma = 0.5;          // lognormal speckle contrast
    double amp_jitter = 0.0;             // per-layer mean jitter fraction
    double noise_floor_sigma = 0.0;      // clamped gaussian floor in free space
    std::uint64_t seed = 0;

    void validate() const;
};

struct PhantomResult {
    BFrame gt;
    std::vector<std::size_t> surface_rows; // per column
};

// --- PSF construction -------------------------------------------------------

// Gaussian axial kernel. sigma_px = fwhm_um / (2*sqrt(2*ln 2) * pitch_z_um).
// fwhm below pitch/10 degenerates to a single-tap delta.
Psf gaussian_psf(double fwhm_um, double pitch_z_um, std::size_t support_px);

// Gaussian with one side lobe: a second gaussian of peak ratio `lobe_ratio`
// displaced by `lobe_offset_px` (one side only, asymmetric).
Psf sidelobe_psf(double fwhm_um, double pitch_z_um, double lobe_ratio,
                 std::ptrdiff_t lobe_offset_px, std::size_t support_px);

Psf delta_psf(std::size_t support_px, double pitch_z_um);

// --- The degradation operator H and friends ---------------------------------

// Convolves every column axially with the psf, circular boundary.
BFrame degrade(const BFrame& frame, const Psf& psf);

// Adjoint of degrade (circular correlation); used by RL and gradient flow.
BFrame degrade_adjoint(const BFrame& frame, const Psf& psf);

// Adds i.i.d. zero-mean gaussian noise, clamped at 0. Deterministic per seed.
BFrame add_noise(const BFrame& frame, double sigma, std::uint64_t seed);

// Circular roll by (dz, dx).
BFrame shift(const BFrame& frame, const ShiftTransform& t);

// Range-space coverage condition for learning a unique inverse: g*M >= N.
bool coverage_check(std::size_t g, std::size_t m, std::size_t n);

// Linear interpolation along depth by an integer factor (circular at the
// wrap-around segment); pitch_z_um is divided by the factor.
BFrame axial_interpolate(const BFrame& frame, std::size_t factor);

// --- FD-OCT spectral acquisition --------------------------------------------

struct SpectralAcquisition {
    std::vector<double> fringe; // measured spectrum I(k_j)
    ALine recon;                // |IDFT{fringe}|, positive-depth half
};

// fringe(k_j) = 2 S(k_j) sum_n r(z_n) cos(2 k_j z_n) dz_n, with the reference
// reflectivity fixed at 1; recon is the magnitude of the inverse DFT truncated
// to the positive-depth half. recon pitch = pi / (m * dk) um.
SpectralAcquisition simulate_spectral_acquisition(const Reflectivity& r,
                                                  const SourceSpectrum& s,
                                                  std::size_t m_samples);

// --- Phantoms -----------------------------------------------------------------

PhantomResult make_phantom(const PhantomSpec& spec);

} // namespace octenh
