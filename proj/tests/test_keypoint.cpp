#include <doctest.h>

#include <cmath>
#include <set>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/keypoint.hpp"
#include "support/generators.hpp"

using namespace rebroadcast;
using namespace rebroadcast::keypoint;
using imgproc::GrayImage;
using imgproc::Raster;

namespace {

double energy(const Raster& r) {
    double e = 0.0;
    for (double v : r.values()) e += v * v;
    return e;
}

GrayImage bright_square(int n, int lo, int hi) {
    Raster r(n, n, 0.1);
    for (int y = lo; y < hi; ++y) {
        for (int x = lo; x < hi; ++x) r(x, y) = 0.9;
    }
    return GrayImage(std::move(r));
}

}  // namespace

TEST_CASE("residual image") {
    SUBCASE("constant image has no residual") {
        const auto res = residual_image(GrayImage(40, 40, 0.42));
        for (const auto& ch : res.channels) {
            for (double v : ch.values()) CHECK(std::abs(v) <= 1e-12);
        }
    }
    SUBCASE("wider blurs remove more of a fine checkerboard") {
        const auto res = residual_image(testgen::checkerboard(48, 2));
        CHECK(energy(res.channels[0]) < energy(res.channels[1]));
        CHECK(energy(res.channels[1]) < energy(res.channels[2]));
    }
    SUBCASE("values stay within [-1, 1]") {
        Rng rng(5);
        const auto res = residual_image(testgen::random_image(rng, 40, 44));
        CHECK(res.width() == 40);
        CHECK(res.height() == 44);
        for (const auto& ch : res.channels) {
            for (double v : ch.values()) {
                CHECK(v >= -1.0);
                CHECK(v <= 1.0);
            }
        }
    }
}

TEST_CASE("normalize_channel") {
    Raster r(3, 1);
    r(0, 0) = -0.2;
    r(1, 0) = 0.0;
    r(2, 0) = 0.3;
    const auto n = normalize_channel(r);
    CHECK(n(0, 0) == 0.0);
    CHECK(n(1, 0) == doctest::Approx(0.4));
    CHECK(n(2, 0) == 1.0);
    for (const auto flat = normalize_channel(Raster(4, 4, -0.3)); double v : flat.pixels()) CHECK(v == 0.0);
}

TEST_CASE("fast_score") {
    SUBCASE("flat neighbourhood") { CHECK(fast_score(Raster(7, 7, 0.5), 3, 3) == 0.0); }
    SUBCASE("isolated bright pixel") {
        Raster r(7, 7, 0.2);
        r(3, 3) = 0.9;
        CHECK(fast_score(r, 3, 3) == doctest::Approx(0.7));
    }
    SUBCASE("a straight edge is not a corner") {
        Raster r(7, 7, 0.0);
        for (int y = 0; y < 7; ++y) {
            for (int x = 4; x < 7; ++x) r(x, y) = 1.0;
        }
        CHECK(fast_score(r, 3, 3) == 0.0);
    }
    SUBCASE("nine contiguous brighter pixels") {
        Raster r(7, 7, 0.0);
        // Circle positions 0..8 (top, clockwise to bottom) set to 0.5.
        const int arc[9][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3}, {0, 3}};
        for (const auto& p : arc) r(3 + p[0], 3 + p[1]) = 0.5;
        CHECK(fast_score(r, 3, 3) == doctest::Approx(0.5));
        r(3 + 3, 3) = 0.2;
        CHECK(fast_score(r, 3, 3) == doctest::Approx(0.2));
    }
}

TEST_CASE("keypoint detection") {
    SUBCASE("constant image has none") { CHECK(detect_keypoints(residual_image(GrayImage(64, 64, 0.3))).empty()); }
    SUBCASE("too small") { CHECK_THROWS_AS(detect_keypoints(residual_image(GrayImage(31, 40, 0.3))), DimensionError); }
    SUBCASE("bad parameters") {
        DetectorParams p;
        p.octaves = 0;
        CHECK_THROWS_AS(detect_keypoints(residual_image(GrayImage(40, 40, 0.3)), p), ParameterError);
    }
    SUBCASE("square corners are found") {
        const auto found = detect_keypoints(residual_image(bright_square(96, 32, 64)));
        REQUIRE_FALSE(found.empty());
        for (auto [cx, cy] : {std::pair{32.0, 32.0}, {63.0, 32.0}, {32.0, 63.0}, {63.0, 63.0}}) {
            bool near = false;
            for (const auto& d : found) near |= std::hypot(d.keypoint.x - cx, d.keypoint.y - cy) <= 4.0;
            CHECK(near);
        }
    }
    SUBCASE("ordering, threshold, fit and cap") {
        Rng rng(21);
        const auto res = residual_image(testgen::blob_texture(rng, 128));
        const auto all = detect_keypoints(res);
        REQUIRE(all.size() > 20);
        CHECK(all.size() <= 500);
        const double reach0 = BriskPattern::standard().extent(1.0);
        for (std::size_t i = 0; i < all.size(); ++i) {
            const auto& kp = all[i].keypoint;
            CHECK(kp.score > 0.06);
            if (i > 0) CHECK(all[i - 1].keypoint.score >= kp.score);
            const double reach = BriskPattern::standard().extent(kp.scale());
            CHECK(reach >= reach0);
            CHECK(kp.x + 0.5 - reach >= 0.0);
            CHECK(kp.y + 0.5 + reach <= 128.0);
        }
        DetectorParams capped;
        capped.max_keypoints = 10;
        const auto top = detect_keypoints(res, capped);
        REQUIRE(top.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(top[i].keypoint.x == all[i].keypoint.x);
            CHECK(top[i].keypoint.y == all[i].keypoint.y);
            CHECK(top[i].channel == all[i].channel);
        }
        DetectorParams strict;
        strict.threshold = 0.2;
        CHECK(detect_keypoints(res, strict).size() < all.size());
    }
}

TEST_CASE("sampling pattern") {
    const auto& p = BriskPattern::standard();
    CHECK(p.points().size() == 60);
    CHECK(p.short_pairs().size() == 512);
    CHECK_FALSE(p.long_pairs().empty());
    std::set<std::pair<int, int>> seen;
    for (const auto& [a, b] : p.short_pairs()) {
        const auto& pa = p.points()[static_cast<std::size_t>(a)];
        const auto& pb = p.points()[static_cast<std::size_t>(b)];
        CHECK(std::hypot(pa.x - pb.x, pa.y - pb.y) < BriskPattern::kShortDistance);
        CHECK(seen.insert({a, b}).second);
    }
    for (const auto& [a, b] : p.long_pairs()) {
        const auto& pa = p.points()[static_cast<std::size_t>(a)];
        const auto& pb = p.points()[static_cast<std::size_t>(b)];
        CHECK(std::hypot(pa.x - pb.x, pa.y - pb.y) > BriskPattern::kLongDistance);
    }
    CHECK(p.extent(2.0) > p.extent(1.0));
}

TEST_CASE("descriptor extraction") {
    SUBCASE("box mean at pixel resolution reads the pixel") {
        Rng rng(3);
        const auto img = testgen::random_image(rng, 20, 20);
        const DescriptorExtractor ex(img);
        for (int y = 0; y < 20; ++y) {
            for (int x = 0; x < 20; ++x) CHECK(ex.smoothed(x, y, 0.1) == doctest::Approx(img(x, y)).epsilon(1e-12));
        }
    }
    SUBCASE("box mean of a constant image") {
        const DescriptorExtractor ex(GrayImage(40, 40, 0.25));
        CHECK(ex.smoothed(17.3, 20.8, 2.2) == doctest::Approx(0.25).epsilon(1e-12));
    }
    SUBCASE("constant patch has no set bits") {
        const auto d = describe(GrayImage(64, 64, 0.0), Keypoint{32, 32, 0, 1.0, 0.0});
        REQUIRE(d.has_value());
        CHECK(d->descriptor.count() == 0);
        CHECK(d->orientation == 0.0);
    }
    SUBCASE("keypoints whose pattern leaves the image are dropped") {
        const GrayImage img(64, 64, 0.5);
        CHECK_FALSE(describe(img, Keypoint{3, 32, 0, 1.0, 0.0}).has_value());
        CHECK_FALSE(describe(img, Keypoint{32, 32, 3, 1.0, 0.0}).has_value());
    }
    SUBCASE("bits are the ordered comparisons of the steered samples") {
        Rng rng(8);
        const auto img = testgen::blob_texture(rng, 80);
        const DescriptorExtractor ex(img);
        const Keypoint kp{40.0, 39.0, 1, 1.0, 0.0};
        const auto d = ex.describe(kp);
        REQUIRE(d.has_value());
        const auto& pattern = BriskPattern::standard();
        const double c = std::cos(d->orientation), s = std::sin(d->orientation);
        std::vector<double> samples;
        for (const auto& p : pattern.points()) {
            samples.push_back(ex.smoothed(kp.x + 2.0 * (c * p.x - s * p.y), kp.y + 2.0 * (s * p.x + c * p.y), 2.0 * p.sigma));
        }
        for (std::size_t i = 0; i < 512; ++i) {
            const auto [a, b] = pattern.short_pairs()[i];
            CHECK(d->descriptor.bit(i) == (samples[static_cast<std::size_t>(a)] > samples[static_cast<std::size_t>(b)]));
        }
    }
    SUBCASE("steering makes descriptors rotation tolerant") {
        Rng rng(40);
        for (int trial = 0; trial < 5; ++trial) {
            const auto img = testgen::blob_texture(rng, 129, 120);
            const auto rotated = imgproc::rotate(img, 30.0);
            const Keypoint kp{64.0, 64.0, 0, 1.0, 0.0};
            const auto a = describe(img, kp);
            const auto b = describe(rotated, kp);
            REQUIRE(a.has_value());
            REQUIRE(b.has_value());
            CHECK(a->descriptor.hamming(b->descriptor) <= 76);
        }
    }
}

TEST_CASE("binary descriptors") {
    BinaryDescriptor a, b;
    a.set(0, true);
    a.set(511, true);
    b.set(511, true);
    b.set(7, true);
    CHECK(a.count() == 2);
    CHECK(a.hamming(b) == 2);
    const auto ea = a.expand();
    const auto eb = b.expand();
    REQUIRE(ea.size() == 512);
    double d2 = 0.0;
    for (std::size_t i = 0; i < 512; ++i) d2 += (ea[i] - eb[i]) * (ea[i] - eb[i]);
    CHECK(d2 == 2.0);

    Rng rng(12);
    const auto img = testgen::blob_texture(rng, 96);
    const auto first = extract_binary_descriptors(img);
    const auto second = extract_binary_descriptors(img);
    REQUIRE_FALSE(first.empty());
    CHECK(first == second);
    const auto expanded = extract_descriptors(img);
    REQUIRE(expanded.size() == first.size());
    for (std::size_t i = 1; i < first.size(); ++i) {
        double dist = 0.0;
        for (std::size_t j = 0; j < 512; ++j) {
            dist += (expanded[i][j] - expanded[0][j]) * (expanded[i][j] - expanded[0][j]);
            CHECK((expanded[i][j] == 0.0 || expanded[i][j] == 1.0));
        }
        CHECK(dist == static_cast<double>(first[i].hamming(first[0])));
    }
}
