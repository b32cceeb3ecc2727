#include "octenh/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "octenh/errors.hpp"

namespace octenh {

void BilateralParams::validate() const {
    if (!(sigma_spatial > 0.0) || !(sigma_range > 0.0) || radius == 0)
        throw InvariantViolation("bilateral parameters must be positive");
    if (static_cast<double>(radius) < std::ceil(2.0 * sigma_spatial))
        throw InvariantViolation("bilateral radius must cover 2 sigma_spatial");
}

void Mask::validate() const {
    if (values.size() != rows * cols || surface_rows.size() != cols)
        throw InvariantViolation("mask storage does not match dims");
    for (std::size_t c = 0; c < cols; ++c) {
        for (std::size_t r = 0; r < rows; ++r) {
            std::uint8_t v = at(r, c);
            if (v > 1) throw InvariantViolation("mask values must be 0 or 1");
            bool tissue = r >= surface_rows[c];
            if (v != (tissue ? 1 : 0))
                throw InvariantViolation("mask column is not a single 0-to-1 transition");
        }
    }
}

BFrame Mask::to_frame(double pitch_z_um) const {
    BFrame f(rows, cols, pitch_z_um);
    for (std::size_t i = 0; i < values.size(); ++i) f.data[i] = values[i];
    return f;
}

BFrame bilateral_filter(const BFrame& frame, const BilateralParams& p) {
    frame.validate();
    p.validate();
    const std::ptrdiff_t rows = static_cast<std::ptrdiff_t>(frame.rows());
    const std::ptrdiff_t cols = static_cast<std::ptrdiff_t>(frame.cols());
    const std::ptrdiff_t rad = static_cast<std::ptrdiff_t>(p.radius);

    std::vector<double> spatial(static_cast<std::size_t>((2 * rad + 1) * (2 * rad + 1)));
    for (std::ptrdiff_t di = -rad; di <= rad; ++di)
        for (std::ptrdiff_t dj = -rad; dj <= rad; ++dj)
            spatial[static_cast<std::size_t>((di + rad) * (2 * rad + 1) + (dj + rad))] =
                std::exp(-0.5 * static_cast<double>(di * di + dj * dj) /
                         (p.sigma_spatial * p.sigma_spatial));

    const double inv_2sr2 = 0.5 / (p.sigma_range * p.sigma_range);
    BFrame out(frame.rows(), frame.cols(), frame.pitch_z_um);
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
        for (std::ptrdiff_t j = 0; j < cols; ++j) {
            const double center = frame.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            double acc = 0.0, wsum = 0.0;
            for (std::ptrdiff_t di = -rad; di <= rad; ++di) {
                const std::ptrdiff_t si = std::clamp<std::ptrdiff_t>(i + di, 0, rows - 1);
                for (std::ptrdiff_t dj = -rad; dj <= rad; ++dj) {
                    std::ptrdiff_t sj = (j + dj) % cols;
                    if (sj < 0) sj += cols;
                    const double v = frame.at(static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
                    const double d = v - center;
                    const double w =
                        spatial[static_cast<std::size_t>((di + rad) * (2 * rad + 1) + (dj + rad))] *
                        std::exp(-d * d * inv_2sr2);
                    acc += w * v;
                    wsum += w;
                }
            }
            out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc / wsum;
        }
    }
    return out;
}

BFrame axial_gradient(const BFrame& frame) {
    frame.validate_finite();
    if (frame.rows() < 2) throw InvariantViolation("axial gradient needs at least 2 rows");
    BFrame out(frame.rows(), frame.cols(), frame.pitch_z_um);
    for (std::size_t r = 0; r + 1 < frame.rows(); ++r)
        for (std::size_t c = 0; c < frame.cols(); ++c)
            out.at(r, c) = std::abs(frame.at(r + 1, c) - frame.at(r, c));
    for (std::size_t c = 0; c < frame.cols(); ++c)
        out.at(frame.rows() - 1, c) = out.at(frame.rows() - 2, c);
    return out;
}

Mask generate_mask(const BFrame& frame, const BilateralParams& p, double tau) {
    if (!(tau > 0.0)) throw InvariantViolation("tau must be positive");
    const double tau_norm = tau / 255.0;
    BFrame grad = axial_gradient(bilateral_filter(frame, p));

    Mask m;
    m.rows = frame.rows();
    m.cols = frame.cols();
    m.values.assign(m.rows * m.cols, 0);
    m.surface_rows.assign(m.cols, 0);
    for (std::size_t c = 0; c < m.cols; ++c) {
        std::size_t surface = 0;
        bool found = false;
        for (std::size_t r = 0; r < m.rows; ++r) {
            if (grad.at(r, c) > tau_norm) {
                surface = r;
                found = true;
                break;
            }
        }
        if (!found) m.missing_cols.push_back(c);
        m.surface_rows[c] = surface; // missing columns default to all-tissue
        for (std::size_t r = surface; r < m.rows; ++r) m.at(r, c) = 1;
    }
    if (m.missing_cols.size() * 2 > m.cols)
        throw NoSurfaceFound("no gradient crossing in " + std::to_string(m.missing_cols.size()) +
                             " of " + std::to_string(m.cols) + " columns");
    return m;
}

BFrame mask_apply(const BFrame& frame, const Mask& mask, bool keep_foreground) {
    if (frame.rows() != mask.rows || frame.cols() != mask.cols)
        throw DimMismatch("mask dims do not match the frame");
    BFrame out(frame.rows(), frame.cols(), frame.pitch_z_um);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const bool fg = mask.values[i] != 0;
        out.data[i] = (fg == keep_foreground) ? frame.data[i] : 0.0;
    }
    return out;
}

void write_mask_pgm(const Mask& mask, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open " + path.string() + " for writing");
    os << "P5\n" << mask.cols << " " << mask.rows << "\n1\n";
    os.write(reinterpret_cast<const char*>(mask.values.data()),
             static_cast<std::streamsize>(mask.values.size()));
    if (!os) throw IoFailure("write failed for " + path.string());
}

Mask read_mask_pgm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open " + path.string());
    std::string magic;
    std::size_t cols = 0, rows = 0, maxval = 0;
    is >> magic >> cols >> rows >> maxval;
    if (magic != "P5" || maxval != 1) throw BadMagic("not a 1-bit PGM mask: " + path.string());
    is.get();
    Mask m;
    m.rows = rows;
    m.cols = cols;
    m.values.resize(rows * cols);
    is.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size()));
    if (!is) throw TruncatedFile("mask file shorter than its header claims");
    m.surface_rows.assign(cols, rows);
    for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t r = 0; r < rows; ++r)
            if (m.at(r, c) != 0) {
                m.surface_rows[c] = r;
                break;
            }
    // columns that are all zero get surface = rows (no tissue); validate()
    // treats that as a degenerate transition at the bottom.
    return m;
}

} // namespace octenh
