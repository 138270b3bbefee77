#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/png_io.hpp"
#include "rebroadcast/simulator.hpp"
#include "support/generators.hpp"
#include "support/tempdir.hpp"

using namespace rebroadcast;
using namespace rebroadcast::simulator;
using fusion::Label;
using imgproc::GrayImage;

namespace {

double mean(const GrayImage& img) {
    const auto p = img.pixels();
    return std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(p.size());
}

ChannelParams typical_channel(std::uint64_t seed) {
    ChannelParams p;
    p.halftone_cell = 4;
    p.psf_sigma = 1.0;
    p.noise_sigma = 0.01;
    p.rot_deg = 1.0;
    p.rescale = 1.05;
    p.seed = seed;
    return p;
}

}  // namespace

TEST_CASE("barcode generation") {
    BarcodeSpec spec;
    spec.seed = 5;
    const auto img = generate_barcode(spec);
    CHECK(spec.side_px() == 256);
    CHECK(img.width() == 256);
    CHECK(img.height() == 256);

    SUBCASE("frame is black") {
        for (int i = 0; i < 256; ++i) {
            for (int k = 0; k < spec.module_px; ++k) {
                CHECK(img(i, k) == 0.0);
                CHECK(img(k, i) == 0.0);
                CHECK(img(i, 255 - k) == 0.0);
                CHECK(img(255 - k, i) == 0.0);
            }
        }
    }
    SUBCASE("values are the requested levels, constant per module") {
        for (int levels : {2, 3, 6}) {
            spec.levels = levels;
            const auto b = generate_barcode(spec);
            std::set<double> seen;
            for (double v : b.pixels()) seen.insert(v);
            CHECK(static_cast<int>(seen.size()) <= levels);
            for (double v : seen) {
                const double step = v * (levels - 1);
                CHECK(step == doctest::Approx(std::round(step)).epsilon(1e-12));
            }
            if (levels == 2) {
                CHECK(seen == std::set<double>{0.0, 1.0});
            }
            for (int my = 0; my < 64; ++my) {
                for (int mx = 0; mx < 64; ++mx) {
                    const double v = b(mx * 4, my * 4);
                    for (int d = 1; d < 4; ++d) CHECK(b(mx * 4 + d, my * 4 + d) == v);
                }
            }
        }
    }
    SUBCASE("determinism") {
        CHECK(generate_barcode(spec) == img);
        BarcodeSpec other = spec;
        other.seed = 6;
        CHECK_FALSE(generate_barcode(other) == img);
    }
    SUBCASE("validation") {
        BarcodeSpec bad = spec;
        bad.levels = 1;
        CHECK_THROWS_AS(generate_barcode(bad), ParameterError);
        bad = spec;
        bad.module_px = 3;
        CHECK_THROWS_AS(generate_barcode(bad), ParameterError);
    }
}

TEST_CASE("halftoning") {
    SUBCASE("threshold matrix is a permutation of ranks") {
        for (int cell : {1, 4, 8}) {
            auto m = clustered_dot_matrix(cell);
            std::sort(m.begin(), m.end());
            for (std::size_t r = 0; r < m.size(); ++r) CHECK(m[r] == (r + 0.5) / static_cast<double>(m.size()));
        }
        CHECK_THROWS_AS(clustered_dot_matrix(0), ParameterError);
    }
    SUBCASE("constant gray keeps its mean") {
        for (int cell : {4, 8}) {
            for (double g : {0.1, 0.3, 0.5, 0.62, 0.9}) {
                const auto h = halftone(GrayImage(64, 64, g), cell);
                for (double v : h.pixels()) CHECK((v == 0.0 || v == 1.0));
                CHECK(std::abs(mean(h) - g) <= 0.05);
            }
        }
    }
    SUBCASE("extremes") {
        for (const auto h = halftone(GrayImage(16, 16, 1.0), 4); double v : h.pixels()) CHECK(v == 1.0);
        for (const auto h = halftone(GrayImage(16, 16, 0.0), 4); double v : h.pixels()) CHECK(v == 0.0);
    }
}

TEST_CASE("print-scan channel") {
    Rng rng(31);
    const auto img = testgen::random_image(rng, 48, 40);
    SUBCASE("all-zero parameters are the identity") {
        const auto out = print_scan(img, ChannelParams{});
        CHECK(out == img);
    }
    SUBCASE("output keeps the input size and range") {
        const auto out = print_scan(img, typical_channel(3));
        CHECK(out.width() == 48);
        CHECK(out.height() == 40);
        for (double v : out.pixels()) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(print_scan(img, typical_channel(3)) == out);
        CHECK_FALSE(print_scan(img, typical_channel(4)) == out);
    }
    SUBCASE("a second pass changes the high-frequency energy of a gray card") {
        const GrayImage card(256, 256, 0.5);
        const auto p = typical_channel(11);
        const auto once = print_scan(card, p);
        const auto twice = print_scan(once, p);
        const double e1 = high_frequency_energy(once);
        const double e2 = high_frequency_energy(twice);
        CHECK(std::abs(e2 - e1) > 0.05 * e1);
    }
    SUBCASE("validation") {
        ChannelParams bad;
        bad.rescale = 2.0;
        CHECK_THROWS_AS(print_scan(img, bad), ParameterError);
        bad = {};
        bad.psf_sigma = -1.0;
        CHECK_THROWS_AS(print_scan(img, bad), ParameterError);
        bad = {};
        bad.rot_deg = 10.0;
        CHECK_THROWS_AS(print_scan(img, bad), ParameterError);
    }
}

TEST_CASE("sample recipes") {
    CorpusRequest req;
    req.genuine = 3;
    req.counterfeit = 4;
    req.seed = 99;
    for (int i = 0; i < 7; ++i) {
        const auto r = draw_sample(req, i);
        const bool genuine = i < 3;
        CHECK(r.label == (genuine ? Label::Genuine : Label::Counterfeit));
        CHECK(r.passes.size() == (genuine ? 1u : 2u));
        CHECK(r.barcode.levels >= 3);
        CHECK(r.barcode.levels <= 6);
        for (const auto& p : r.passes) {
            CHECK((p.halftone_cell == 4 || p.halftone_cell == 8));
            CHECK(p.psf_sigma >= 0.6);
            CHECK(p.psf_sigma <= 1.4);
            CHECK(std::abs(p.rot_deg) <= 2.0);
        }
        const auto again = draw_sample(req, i);
        CHECK(again.sample_seed == r.sample_seed);
        CHECK(recipe_json(again) == recipe_json(r));
        const auto j = nlohmann::json::parse(recipe_json(r));
        CHECK(j.is_object());
    }
    CHECK(draw_sample(req, 0).sample_seed != draw_sample(req, 1).sample_seed);
}

TEST_CASE("corpus generation") {
    testgen::TempDir dir("corpus");
    CorpusRequest req;
    req.genuine = 10;
    req.counterfeit = 10;
    req.seed = 2024;
    req.out_dir = dir / "one";
    const auto manifest = build_corpus(req);
    REQUIRE(manifest.entries.size() == 20);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto& e = manifest.entries[i];
        CHECK(e.label == (i < 10 ? Label::Genuine : Label::Counterfeit));
        const auto params = nlohmann::json::parse(e.params_json);
        CHECK(params.at("channels").size() == (i < 10 ? 1u : 2u));
        const auto img = io::read_png(manifest.resolve(e));
        CHECK(img.width() == 256);
    }

    SUBCASE("manifest round trip") {
        const auto read = read_manifest(req.out_dir / "manifest.tsv");
        CHECK(read.entries == manifest.entries);
        CHECK(read.base_dir == req.out_dir);
        write_manifest(dir / "copy.tsv", read.entries);
        CHECK(io::read_file(dir / "copy.tsv") == io::read_file(req.out_dir / "manifest.tsv"));
    }
    SUBCASE("thread count does not change the output") {
        req.out_dir = dir / "two";
        req.threads = 3;
        const auto parallel = build_corpus(req);
        CHECK(parallel.entries == manifest.entries);
        for (const auto& e : manifest.entries) {
            CHECK(io::read_file(dir / "one" / e.relative_path) == io::read_file(dir / "two" / e.relative_path));
        }
    }
    SUBCASE("malformed manifests") {
        const auto write = [&](const std::string& text) {
            std::ofstream(dir / "bad.tsv") << text;
            return dir / "bad.tsv";
        };
        CHECK_THROWS_AS(read_manifest(write("a.png\tgenuine\t1\n")), ParameterError);
        CHECK_THROWS_AS(read_manifest(write("a.png\tfake\t1\t{}\n")), ParameterError);
        CHECK_THROWS_AS(read_manifest(write("a.png\tgenuine\tx1\t{}\n")), ParameterError);
        CHECK(read_manifest(write("a.png\tgenuine\t1\t{}\r\n\n")).entries.size() == 1);
        CHECK_THROWS_AS(read_manifest(dir / "missing.tsv"), IoError);
    }
    SUBCASE("request validation") {
        req.genuine = 0;
        CHECK_THROWS_AS(build_corpus(req), ParameterError);
    }
}
