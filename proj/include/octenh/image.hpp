#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "octenh/errors.hpp"

namespace octenh {

// A 2-D OCT intensity frame. Rows run along the imaging depth (axial),
// columns are adjacent A-lines (lateral). Values are linear amplitude,
// conventionally normalized to [0, 1]; dB scaling happens only at export.
class BFrame {
public:
    BFrame() = default;
    BFrame(std::size_t rows, std::size_t cols, double pitch_z_um_, double fill = 0.0)
        : pitch_z_um(pitch_z_um_), data(rows * cols, fill), rows_(rows), cols_(cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data.size(); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols_ + c]; }
    double* row(std::size_t r) { return data.data() + r * cols_; }
    const double* row(std::size_t r) const { return data.data() + r * cols_; }

    // Checks finiteness, non-negativity and a minimum size. Pipeline
    // operations use min_dim = 8; plain array ops accept anything >= 1.
    void validate(std::size_t min_dim = 1) const;

    // Like validate() but allows negative values (residuals, adjoints).
    void validate_finite(std::size_t min_dim = 1) const;

    bool same_dims(const BFrame& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double pitch_z_um = 1.0;
    std::vector<double> data; // row-major

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

// One axial depth profile.
struct ALine {
    std::vector<double> depth_samples;
    double pitch_z_um = 1.0;

    std::size_t size() const { return depth_samples.size(); }
    void validate() const;
};

// Rectangular region of interest inside a frame.
struct Roi {
    std::size_t row0 = 0, col0 = 0, rows = 0, cols = 0;

    void validate_within(const BFrame& frame) const;
};

// --- OCTB binary format ---------------------------------------------------
// "OCTB" | u32 version=1 | u32 rows | u32 cols | f32 pitch_z_um |
// rows*cols little-endian f32, row-major.
// Values are stored in 32-bit; frames whose doubles are exactly
// representable in f32 round-trip bit-identically.

BFrame read_octb(const std::filesystem::path& path);
void write_octb(const BFrame& frame, const std::filesystem::path& path);

// 16-bit P5 PGM export with dB windowing:
// pixel = clamp(round(65535 * (20*log10(max(v,1e-8)) - db_floor) / (db_ceil - db_floor)))
void export_pgm16(const BFrame& frame, const std::filesystem::path& path,
                  double db_floor, double db_ceil);

// maps a single amplitude through the export window (exposed for tests)
std::uint16_t pgm16_pixel(double v, double db_floor, double db_ceil);

// Divides by the frame maximum so the result peaks at exactly 1.
BFrame normalize(const BFrame& frame);

} // namespace octenh
