#include <doctest.h>

#include <cstring>
#include <fstream>
#include <random>

#include "lazymg/codec.hpp"
#include "lazymg/stream.hpp"

using namespace lazymg;

namespace {
double random_double(std::mt19937_64& gen, int emin = -100, int emax = 100) {
    std::uniform_real_distribution<double> mant(1.0, 2.0);
    std::uniform_int_distribution<int> expo(emin, emax);
    std::bernoulli_distribution sign;
    return std::ldexp(sign(gen) ? -mant(gen) : mant(gen), expo(gen));
}
}  // namespace

TEST_CASE("encode 1.0 at p3=2 is all-zero payload with zero exponent") {
    uint8_t buf[2];
    codec::encode_value(1.0, 2, buf);
    CHECK(buf[0] == 0x00);
    CHECK(buf[1] == 0x00);
    CHECK(codec::decode_value(buf, 2) == 1.0);
}

TEST_CASE("encode -0.75 at p3=2: sign, mantissa 1000000, exponent -1") {
    uint8_t buf[2];
    codec::encode_value(-0.75, 2, buf);
    CHECK(buf[0] == 0xC0);  // sign bit + leading mantissa bit
    CHECK(static_cast<int8_t>(buf[1]) == -1);
    CHECK(codec::decode_value(buf, 2) == -0.75);
}

TEST_CASE("p3=8 round-trips bit-exactly, including signed zero") {
    std::mt19937_64 gen(7);
    uint8_t buf[8];
    for (int i = 0; i < 100000; ++i) {
        double x = random_double(gen, -300, 300);
        codec::encode_value(x, 8, buf);
        double y = codec::decode_value(buf, 8);
        CHECK(std::memcmp(&x, &y, 8) == 0);
    }
    for (double z : {0.0, -0.0}) {
        codec::encode_value(z, 8, buf);
        double y = codec::decode_value(buf, 8);
        CHECK(std::memcmp(&z, &y, 8) == 0);
    }
}

TEST_CASE("round-trip relative error bound, monotonicity, truncation") {
    std::mt19937_64 gen(42);
    for (int i = 0; i < 20000; ++i) {
        double x = random_double(gen);
        double prev_err = std::numeric_limits<double>::infinity();
        for (int p3 = 2; p3 <= 7; ++p3) {
            double y = codec::roundtrip(x, p3);
            double rel = std::fabs(y - x) / std::fabs(x);
            CHECK(rel <= std::ldexp(1.0, -codec::mantissa_bits(p3)));
            CHECK(std::fabs(y) <= std::fabs(x));  // truncation toward zero
            double err = std::fabs(y - x);
            CHECK(err <= prev_err);
            prev_err = err;
        }
    }
}

TEST_CASE("encode is idempotent on canonical bytes") {
    std::mt19937_64 gen(3);
    for (int i = 0; i < 5000; ++i) {
        double x = random_double(gen);
        for (int p3 : {2, 4, 7}) {
            uint8_t b1[8], b2[8];
            codec::encode_value(x, p3, b1);
            codec::encode_value(codec::decode_value(b1, p3), p3, b2);
            CHECK(std::memcmp(b1, b2, static_cast<std::size_t>(p3)) == 0);
        }
    }
}

TEST_CASE("exponent clamp: out-of-range exponents saturate (documented)") {
    double huge = std::ldexp(1.5, 300);
    double dec = codec::roundtrip(huge, 3);
    CHECK(dec == std::ldexp(1.5, 127));  // clamped to e = 127
    double tiny = std::ldexp(1.5, -300);
    double dec2 = codec::roundtrip(tiny, 3);
    CHECK(dec2 == std::ldexp(1.5, -128));  // clamped to e = -128
}

TEST_CASE("non-finite values are protocol errors") {
    uint8_t buf[8];
    CHECK_THROWS_AS(codec::encode_value(std::numeric_limits<double>::quiet_NaN(), 4, buf),
                    protocol_error);
    CHECK_THROWS_AS(codec::encode_value(std::numeric_limits<double>::infinity(), 2, buf),
                    protocol_error);
}

TEST_CASE("choose_precision picks the minimal width") {
    std::array<double, 16> zeros{};
    CHECK(codec::choose_precision(std::span<const double>(zeros), 1e-8) == 0);

    std::array<double, 4> tiny{1e-12, -3e-13, 5e-12, 0.0};
    CHECK(codec::choose_precision(std::span<const double>(tiny), 1e-8) == 0);

    // magnitudes around 1 with delta 1e-8 need m >= 27 bits -> p3 = 5
    std::array<double, 4> ones{1.2345678901, -0.987654321, 1.5, 0.7777777};
    int p3 = codec::choose_precision(std::span<const double>(ones), 1e-8);
    CHECK(p3 == 5);

    // minimality: the next precision down violates the bound on some entry
    std::mt19937_64 gen(11);
    for (int rep = 0; rep < 500; ++rep) {
        std::array<double, 6> vals;
        for (double& v : vals) v = random_double(gen, -20, 20);
        double dmax = std::fabs(random_double(gen, -40, -10));
        int p = codec::choose_precision(std::span<const double>(vals), dmax);
        if (p == 0) {
            for (double v : vals) CHECK(std::fabs(v) <= dmax);
            continue;
        }
        for (double v : vals) CHECK(std::fabs(codec::roundtrip(v, p) - v) <= dmax);
        int lower = p == 2 ? 0 : p - 1;
        bool violates = false;
        for (double v : vals) {
            double y = lower == 0 ? 0.0 : codec::roundtrip(v, lower);
            violates |= std::fabs(y - v) > dmax;
        }
        CHECK(violates);
    }
}

TEST_CASE("header byte packs and unpacks every marker class") {
    struct Case {
        int32_t p1;
        bool p2;
        int p3;
        int cls;
    } cases[] = {{CellMarker::kBottom, false, 0, 0},
                 {5, true, 4, 1},
                 {CellMarker::kTop, false, 8, 2}};
    for (const auto& c : cases) {
        uint8_t h = pack_header(c.p1, c.p2, c.p3);
        int cls, p3;
        bool p2;
        unpack_header(h, cls, p2, p3);
        CHECK(cls == c.cls);
        CHECK(p2 == c.p2);
        CHECK(p3 == c.p3);
    }
    int cls, p3;
    bool p2;
    CHECK_THROWS_AS(unpack_header(0xC1, cls, p2, p3), corrupt_stream_error);  // p3 = 1
}

TEST_CASE("stream records round-trip through a file") {
    Mesh mesh = build_initial_mesh(2);
    MaterialField quad = MaterialField::quadrant(1e-3);
    CellStream stream(mesh, quad);
    // populate: interface cells get real payload, others stay at baseline
    for (int32_t id : mesh.traverse()) {
        const Cell& c = mesh.cell(id);
        if (c.refined) continue;
        Mat4 m = integrate_element(cell_box(mesh, c), quad, 3).m;
        stream.publish_element(id, m, 3);
        stream.marker(id).p1.store(3);
    }
    stream.save("roundtrip_stream.bin");

    CellStream other(mesh, quad);
    other.load("roundtrip_stream.bin");
    for (int32_t id : mesh.traverse()) {
        if (mesh.cell(id).refined) continue;
        Mat4 a = stream.read_element(id).m;
        Mat4 b = other.read_element(id).m;
        for (int i = 0; i < 16; ++i) CHECK(a.a[i] == b.a[i]);  // codec absorbed at write
    }
}

TEST_CASE("a converged constant-eps cell costs exactly one byte") {
    Mesh mesh = build_initial_mesh(1);
    CellStream stream(mesh, MaterialField::constant(1.0));
    int32_t leaf = mesh.level_cells(1).front();
    Mat4 base = stream.baseline(leaf).m;
    stream.publish_element(leaf, base, 1);
    stream.marker(leaf).p1.store(CellMarker::kTop);
    CHECK(stream.record_bytes(leaf) == 1);
    CHECK(stream.marker(leaf).p3.load() == 0);
}

TEST_CASE("corrupted stream files are rejected") {
    Mesh mesh = build_initial_mesh(1);
    CellStream stream(mesh, MaterialField::constant(1.0));
    stream.save("corrupt_stream.bin");
    {
        std::ofstream f("corrupt_stream.bin", std::ios::binary | std::ios::trunc);
        f.write("XXXX", 4);
    }
    CellStream other(mesh, MaterialField::constant(1.0));
    CHECK_THROWS_AS(other.load("corrupt_stream.bin"), corrupt_stream_error);
}

TEST_CASE("all-elided stream compresses by exactly 128") {
    Mesh mesh = build_initial_mesh(2);
    CellStream stream(mesh, MaterialField::constant(1.0));
    for (int32_t id : mesh.traverse()) {
        if (mesh.cell(id).refined) continue;
        stream.publish_element(id, stream.baseline(id).m, 1);
        stream.marker(id).p1.store(CellMarker::kTop);
    }
    CompressionStats st = stream.compression_stats();
    CHECK(st.fine_cells == 81);
    CHECK(st.fine_factor_totals == doctest::Approx(128.0));
    CHECK(st.fine_factor_mean == doctest::Approx(128.0));
}
