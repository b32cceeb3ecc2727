#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "octenh/errors.hpp"
#include "octenh/image.hpp"
#include "octenh/rng.hpp"

using namespace octenh;
namespace fs = std::filesystem;

namespace {

fs::path tmp_file(const char* name) {
    auto dir = fs::temp_directory_path() / "octenh_tests";
    fs::create_directories(dir);
    return dir / name;
}

// random frame whose values are exactly representable in f32
BFrame random_f32_frame(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    BFrame f(rows, cols, 3.5);
    Rng rng(seed);
    for (double& v : f.data) v = static_cast<double>(static_cast<float>(rng.uniform01()));
    return f;
}

} // namespace

TEST_SUITE("image") {

TEST_CASE("octb round-trips bit-identically") {
    BFrame f = random_f32_frame(16, 16, 42);
    auto path = tmp_file("roundtrip.octb");
    write_octb(f, path);
    BFrame g = read_octb(path);
    REQUIRE(g.rows() == 16);
    REQUIRE(g.cols() == 16);
    CHECK(g.pitch_z_um == doctest::Approx(3.5).epsilon(1e-7));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(f.data[i] == g.data[i]);

    // write-read-write produces byte-identical files
    auto path2 = tmp_file("roundtrip2.octb");
    write_octb(g, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("octb rejects a wrong magic") {
    auto path = tmp_file("badmagic.octb");
    std::ofstream os(path, std::ios::binary);
    os << "XXXX";
    for (int i = 0; i < 64; ++i) os.put(0);
    os.close();
    CHECK_THROWS_AS(read_octb(path), BadMagic);
}

TEST_CASE("octb zero frame round-trips") {
    BFrame f(8, 8, 1.0);
    auto path = tmp_file("zeros.octb");
    write_octb(f, path);
    BFrame g = read_octb(path);
    REQUIRE(g.rows() == 8);
    for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("octb file size follows the layout") {
    BFrame f(2, 3, 1.0, 0.25);
    auto path = tmp_file("tiny.octb");
    write_octb(f, path);
    CHECK(fs::file_size(path) == 4 + 4 + 4 + 4 + 4 + 2 * 3 * 4);
}

TEST_CASE("octb refuses empty frames") {
    BFrame f(0, 5, 1.0);
    CHECK_THROWS_AS(write_octb(f, tmp_file("empty.octb")), InvariantViolation);
}

TEST_CASE("octb detects truncation") {
    auto path = tmp_file("trunc.octb");
    {
        BFrame f(4, 4, 1.0, 0.5);
        write_octb(f, path);
    }
    auto full = fs::file_size(path);
    fs::resize_file(path, full - 6);
    CHECK_THROWS_AS(read_octb(path), TruncatedFile);
}

TEST_CASE("octb rejects unknown versions") {
    auto path = tmp_file("badver.octb");
    {
        BFrame f(4, 4, 1.0, 0.5);
        write_octb(f, path);
    }
    std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
    io.seekp(4);
    io.put(9); // version LSB
    io.close();
    CHECK_THROWS_AS(read_octb(path), BadMagic);
}

TEST_CASE("read_octb on a missing file") {
    CHECK_THROWS_AS(read_octb(tmp_file("does_not_exist.octb")), IoFailure);
}

TEST_CASE("pgm16 pixel mapping hits floor, ceiling and midpoint") {
    const double db_floor = -60.0, db_ceil = 0.0;
    CHECK(pgm16_pixel(std::pow(10.0, db_ceil / 20.0), db_floor, db_ceil) == 65535);
    CHECK(pgm16_pixel(0.0, db_floor, db_ceil) == 0); // floor >= -160
    const std::uint16_t mid = pgm16_pixel(std::pow(10.0, -30.0 / 20.0), db_floor, db_ceil);
    CHECK(mid >= 32767);
    CHECK(mid <= 32769);
}

TEST_CASE("pgm16 mapping is monotone") {
    Rng rng(7);
    double prev_v = 0.0;
    for (int i = 0; i < 200; ++i) {
        double v = prev_v + rng.uniform01() * 0.01;
        CHECK(pgm16_pixel(prev_v, -80.0, 10.0) <= pgm16_pixel(v, -80.0, 10.0));
        prev_v = v;
    }
}

TEST_CASE("export_pgm16 writes a valid P5 header and payload") {
    BFrame f = random_f32_frame(8, 12, 3);
    auto path = tmp_file("frame.pgm");
    export_pgm16(f, path, -60.0, 0.0);
    std::ifstream is(path, std::ios::binary);
    std::string magic;
    std::size_t w, h, maxval;
    is >> magic >> w >> h >> maxval;
    CHECK(magic == "P5");
    CHECK(w == 12);
    CHECK(h == 8);
    CHECK(maxval == 65535);
    is.get(); // single whitespace after header
    std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    CHECK(payload.size() == 8 * 12 * 2);
}

TEST_CASE("normalize scales by the max and is idempotent") {
    BFrame f(4, 4, 1.0, 1.0);
    f.at(2, 2) = 4.0;
    BFrame n = normalize(f);
    CHECK(n.at(2, 2) == 1.0);
    CHECK(n.at(0, 0) == 0.25);
    BFrame nn = normalize(n);
    for (std::size_t i = 0; i < n.size(); ++i) CHECK(nn.data[i] == n.data[i]);
}

TEST_CASE("normalize rejects an all-zero frame") {
    BFrame f(4, 4, 1.0);
    CHECK_THROWS_AS(normalize(f), AllZeroFrame);
}

TEST_CASE("frame validation catches bad values") {
    BFrame f(4, 4, 1.0, 0.5);
    f.at(1, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(f.validate(), NonFiniteData);
    f.at(1, 1) = -0.1;
    CHECK_THROWS_AS(f.validate(), InvariantViolation);
    f.at(1, 1) = 0.1;
    CHECK_NOTHROW(f.validate());
    CHECK_THROWS_AS(f.validate(8), InvariantViolation); // pipeline minimum is 8x8
    f.pitch_z_um = 0.0;
    CHECK_THROWS_AS(f.validate(), InvariantViolation);
}

TEST_CASE("roi bounds checking") {
    BFrame f(8, 8, 1.0, 0.1);
    Roi ok{2, 2, 4, 4};
    CHECK_NOTHROW(ok.validate_within(f));
    Roi out{6, 6, 4, 4};
    CHECK_THROWS_AS(out.validate_within(f), InvariantViolation);
    Roi empty{0, 0, 0, 4};
    CHECK_THROWS_AS(empty.validate_within(f), InvariantViolation);
}

} // TEST_SUITE
