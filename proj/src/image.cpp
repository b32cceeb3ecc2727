#include "octenh/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace octenh {

void BFrame::validate(std::size_t min_dim) const {
    validate_finite(min_dim);
    for (double v : data)
        if (v < 0.0) throw InvariantViolation("BFrame contains a negative amplitude");
}

void BFrame::validate_finite(std::size_t min_dim) const {
    if (rows_ < min_dim || cols_ < min_dim)
        throw InvariantViolation("BFrame smaller than " + std::to_string(min_dim) + "x" +
                                 std::to_string(min_dim) + ": " + std::to_string(rows_) + "x" +
                                 std::to_string(cols_));
    if (data.size() != rows_ * cols_)
        throw InvariantViolation("BFrame data size does not match dims");
    if (!(std::isfinite(pitch_z_um) && pitch_z_um > 0.0))
        throw InvariantViolation("BFrame pitch_z_um must be positive and finite");
    for (double v : data)
        if (!std::isfinite(v)) throw NonFiniteData("BFrame contains a non-finite value");
}

void ALine::validate() const {
    if (depth_samples.size() < 2) throw InvariantViolation("ALine needs at least 2 samples");
    for (double v : depth_samples)
        if (!std::isfinite(v)) throw NonFiniteData("ALine contains a non-finite value");
}

void Roi::validate_within(const BFrame& frame) const {
    if (rows == 0 || cols == 0) throw InvariantViolation("Roi is empty");
    if (row0 + rows > frame.rows() || col0 + cols > frame.cols())
        throw InvariantViolation("Roi exceeds frame bounds");
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw TruncatedFile("unexpected end of OCTB file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) {
    std::uint32_t bits = get_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

} // namespace

BFrame read_octb(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoFailure("cannot open " + path.string());
    char magic[4];
    is.read(magic, 4);
    if (!is) throw TruncatedFile("OCTB file shorter than its magic");
    if (std::memcmp(magic, "OCTB", 4) != 0) throw BadMagic("not an OCTB file: " + path.string());
    const std::uint32_t version = get_u32(is);
    if (version != 1) throw BadMagic("unsupported OCTB version " + std::to_string(version));
    const std::uint32_t rows = get_u32(is);
    const std::uint32_t cols = get_u32(is);
    const float pitch = get_f32(is);
    if (rows == 0 || cols == 0) throw InvariantViolation("OCTB file with empty dims");
    BFrame frame(rows, cols, static_cast<double>(pitch));
    for (std::size_t i = 0; i < frame.data.size(); ++i) {
        const float v = get_f32(is);
        if (!std::isfinite(v)) throw NonFiniteData("OCTB file contains a non-finite value");
        frame.data[i] = static_cast<double>(v);
    }
    return frame;
}

void write_octb(const BFrame& frame, const std::filesystem::path& path) {
    if (frame.rows() == 0 || frame.cols() == 0)
        throw InvariantViolation("refusing to write an empty frame");
    frame.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open " + path.string() + " for writing");
    os.write("OCTB", 4);
    put_u32(os, 1);
    put_u32(os, static_cast<std::uint32_t>(frame.rows()));
    put_u32(os, static_cast<std::uint32_t>(frame.cols()));
    put_f32(os, static_cast<float>(frame.pitch_z_um));
    for (double v : frame.data) put_f32(os, static_cast<float>(v));
    if (!os) throw IoFailure("write failed for " + path.string());
}

std::uint16_t pgm16_pixel(double v, double db_floor, double db_ceil) {
    const double db = 20.0 * std::log10(std::max(v, 1e-8));
    const double t = 65535.0 * (db - db_floor) / (db_ceil - db_floor);
    const double clamped = std::clamp(t, 0.0, 65535.0);
    return static_cast<std::uint16_t>(std::llround(clamped));
}

void export_pgm16(const BFrame& frame, const std::filesystem::path& path,
                  double db_floor, double db_ceil) {
    if (!(db_floor < db_ceil)) throw InvariantViolation("db_floor must be below db_ceil");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoFailure("cannot open " + path.string() + " for writing");
    os << "P5\n" << frame.cols() << " " << frame.rows() << "\n65535\n";
    for (double v : frame.data) {
        const std::uint16_t p = pgm16_pixel(v, db_floor, db_ceil);
        // PGM stores 16-bit samples big-endian
        const unsigned char b[2] = {static_cast<unsigned char>(p >> 8),
                                    static_cast<unsigned char>(p & 0xff)};
        os.write(reinterpret_cast<const char*>(b), 2);
    }
    if (!os) throw IoFailure("write failed for " + path.string());
}

BFrame normalize(const BFrame& frame) {
    const double peak = *std::max_element(frame.data.begin(), frame.data.end());
    if (!(peak > 0.0)) throw AllZeroFrame("cannot normalize an all-zero frame");
    BFrame out = frame;
    for (double& v : out.data) v /= peak;
    return out;
}

} // namespace octenh
