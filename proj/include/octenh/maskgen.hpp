#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "octenh/image.hpp"

namespace octenh {

struct BilateralParams {
    double sigma_spatial = 3.0; // pixels
    double sigma_range = 0.1;   // amplitude units
    std::size_t radius = 7;     // pixels

    void validate() const;
};

// Binary tissue map: 0 = free space above the surface, 1 = tissue. Columns
// are monotone (a single 0→1 transition at surface_rows[c]).
struct Mask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> values; // row-major
    std::vector<std::size_t> surface_rows;
    std::vector<std::size_t> missing_cols; // columns that never crossed the threshold

    std::uint8_t at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::uint8_t& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    void validate() const;
    BFrame to_frame(double pitch_z_um = 1.0) const;
};

// Edge-preserving smoother. Boundary: replicate along depth, circular along
// the lateral axis (keeps mask generation exactly lateral-shift invariant).
BFrame bilateral_filter(const BFrame& frame, const BilateralParams& p);

// g(i,j) = |f(i+1,j) - f(i,j)|; the last row copies the previous row.
BFrame axial_gradient(const BFrame& frame);

// Surface = first row whose smoothed axial gradient exceeds tau/255 (tau is
// given in 8-bit display units). Columns without a crossing become all-tissue
// and are reported; more than 50% missing raises NoSurfaceFound.
Mask generate_mask(const BFrame& frame, const BilateralParams& p, double tau);

BFrame mask_apply(const BFrame& frame, const Mask& mask, bool keep_foreground);

// 1-bit PGM (P5, maxval 1).
void write_mask_pgm(const Mask& mask, const std::filesystem::path& path);
Mask read_mask_pgm(const std::filesystem::path& path);

} // namespace octenh
