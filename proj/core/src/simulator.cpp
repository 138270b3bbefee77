#include "rebroadcast/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/png_io.hpp"
#include "rebroadcast/random.hpp"
#include "rebroadcast/spectral.hpp"

namespace rebroadcast::simulator {

using imgproc::GrayImage;
using imgproc::Raster;

void BarcodeSpec::validate() const {
    if (modules_per_side < 8) throw ParameterError("barcode needs at least 8 modules per side");
    if (module_px < 4) throw ParameterError("barcode modules must be at least 4 pixels");
    if (levels < 2 || levels > 8) throw ParameterError("barcode gray levels must be in [2, 8]");
}

void ChannelParams::validate() const {
    if (halftone_cell < 0) throw ParameterError("halftone cell must be non-negative");
    if (!(psf_sigma >= 0.0) || !(noise_sigma >= 0.0)) throw ParameterError("channel sigmas must be non-negative");
    if (!(rescale >= 0.8 && rescale <= 1.25)) throw ParameterError("channel rescale must be in [0.8, 1.25]");
    if (!(std::abs(rot_deg) <= 3.0)) throw ParameterError("channel rotation must be within 3 degrees");
}

void ChannelRanges::validate() const {
    if (halftone_cells.empty()) throw ParameterError("at least one halftone cell size is required");
    const auto ordered = [](const Range<double>& r) { return r.lo <= r.hi; };
    if (!ordered(psf_sigma) || !ordered(noise_sigma) || !ordered(rot_deg) || !ordered(rescale)) {
        throw ParameterError("channel ranges must satisfy lo <= hi");
    }
}

GrayImage generate_barcode(const BarcodeSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const int side = spec.side_px();
    const int grid = spec.modules_per_side + 2;
    Raster out(side, side, 0.0);
    for (int my = 1; my < grid - 1; ++my) {
        for (int mx = 1; mx < grid - 1; ++mx) {
            const auto level = rng.uniform_int(0, spec.levels - 1);
            const double value = static_cast<double>(level) / (spec.levels - 1);
            for (int y = my * spec.module_px; y < (my + 1) * spec.module_px; ++y) {
                for (int x = mx * spec.module_px; x < (mx + 1) * spec.module_px; ++x) out(x, y) = value;
            }
        }
    }
    return GrayImage(std::move(out));
}

std::vector<double> clustered_dot_matrix(int cell) {
    if (cell < 1) throw ParameterError("halftone cell must be positive");
    const double c = (cell - 1) / 2.0;
    std::vector<int> order(static_cast<std::size_t>(cell) * cell);
    std::iota(order.begin(), order.end(), 0);
    const auto key = [&](int idx) {
        const double dx = idx % cell - c;
        const double dy = idx / cell - c;
        return std::tuple(dx * dx + dy * dy, std::atan2(dy, dx), idx);
    };
    std::sort(order.begin(), order.end(), [&](int a, int b) { return key(a) < key(b); });
    std::vector<double> thresholds(order.size());
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        thresholds[static_cast<std::size_t>(order[rank])] = (static_cast<double>(rank) + 0.5) / static_cast<double>(order.size());
    }
    return thresholds;
}

GrayImage halftone(const GrayImage& image, int cell) {
    const auto matrix = clustered_dot_matrix(cell);
    Raster out(image.width(), image.height());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const double t = matrix[static_cast<std::size_t>(y % cell) * cell + (x % cell)];
            out(x, y) = image(x, y) >= 1.0 - t ? 1.0 : 0.0;
        }
    }
    return GrayImage(std::move(out));
}

GrayImage print_scan(const GrayImage& image, const ChannelParams& params) {
    params.validate();
    GrayImage current = image;
    if (params.halftone_cell > 0) current = halftone(current, params.halftone_cell);
    if (params.psf_sigma > 0.0) {
        const int size = 2 * static_cast<int>(std::ceil(3.0 * params.psf_sigma)) + 1;
        current = imgproc::gaussian_blur(current, size, params.psf_sigma);
    }
    if (params.noise_sigma > 0.0) {
        Rng rng(params.seed);
        Raster noisy = current.raster();
        for (double& v : noisy.values()) v += params.noise_sigma * rng.normal();
        current = GrayImage::clamped(std::move(noisy));
    }
    if (params.rot_deg != 0.0) current = imgproc::rotate(current, params.rot_deg);
    if (params.rescale != 1.0) {
        const GrayImage scaled = imgproc::resample(current, params.rescale);
        current = imgproc::resize(scaled, image.width(), image.height());
    }
    return current;
}

double high_frequency_energy(const GrayImage& image) {
    return spectral::high_frequency_energy_ratio(image.raster(), 0.25);
}

namespace {

ChannelParams draw_channel(const ChannelRanges& r, Rng& rng) {
    ChannelParams p;
    p.halftone_cell = r.halftone_cells[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(r.halftone_cells.size()) - 1))];
    p.psf_sigma = rng.uniform(r.psf_sigma.lo, r.psf_sigma.hi);
    p.noise_sigma = rng.uniform(r.noise_sigma.lo, r.noise_sigma.hi);
    p.rot_deg = rng.uniform(r.rot_deg.lo, r.rot_deg.hi);
    p.rescale = rng.uniform(r.rescale.lo, r.rescale.hi);
    p.seed = rng.next();
    return p;
}

nlohmann::json to_json(const ChannelParams& p) {
    return {{"halftone_cell", p.halftone_cell}, {"psf_sigma", p.psf_sigma}, {"noise_sigma", p.noise_sigma},
            {"rot_deg", p.rot_deg},             {"rescale", p.rescale},     {"seed", p.seed}};
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto tab = line.find('\t', start);
        fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
        if (tab == std::string::npos) break;
        start = tab + 1;
    }
    return fields;
}

}  // namespace

SampleRecipe draw_sample(const CorpusRequest& request, int index) {
    const bool genuine = index < request.genuine;
    SampleRecipe recipe;
    recipe.label = genuine ? fusion::Label::Genuine : fusion::Label::Counterfeit;
    recipe.sample_seed = derive_seed(request.seed, static_cast<std::uint64_t>(index));

    Rng rng(recipe.sample_seed);
    const auto& b = request.barcode;
    recipe.barcode.modules_per_side = static_cast<int>(rng.uniform_int(b.modules_per_side.lo, b.modules_per_side.hi));
    recipe.barcode.levels = static_cast<int>(rng.uniform_int(b.levels.lo, b.levels.hi));
    recipe.barcode.module_px = static_cast<int>(rng.uniform_int(b.module_px.lo, b.module_px.hi));
    recipe.barcode.seed = rng.next();
    const int passes = genuine ? 1 : 2;
    for (int p = 0; p < passes; ++p) recipe.passes.push_back(draw_channel(request.channel, rng));
    return recipe;
}

GrayImage render_sample(const SampleRecipe& recipe) {
    GrayImage image = generate_barcode(recipe.barcode);
    for (const auto& pass : recipe.passes) image = print_scan(image, pass);
    return image;
}

std::string recipe_json(const SampleRecipe& recipe) {
    nlohmann::json channels = nlohmann::json::array();
    for (const auto& p : recipe.passes) channels.push_back(to_json(p));
    const nlohmann::json doc = {
        {"barcode",
         {{"modules_per_side", recipe.barcode.modules_per_side},
          {"levels", recipe.barcode.levels},
          {"module_px", recipe.barcode.module_px},
          {"seed", recipe.barcode.seed}}},
        {"channels", channels},
    };
    return doc.dump();
}

std::string format_manifest_line(const ManifestEntry& e) {
    std::ostringstream os;
    os << e.relative_path << '\t' << fusion::to_string(e.label) << '\t' << e.sample_seed << '\t' << e.params_json;
    return os.str();
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open manifest for writing: " + path.string());
    for (const auto& e : entries) out << format_manifest_line(e) << '\n';
    if (!out) throw IoError("failed writing manifest: " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path.string());
    Manifest manifest;
    manifest.base_dir = path.parent_path();
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        const auto where = path.string() + ":" + std::to_string(number);
        if (fields.size() != 4) throw ParameterError(where + ": expected 4 tab-separated fields");
        ManifestEntry e;
        e.relative_path = fields[0];
        if (fields[1] == "genuine") e.label = fusion::Label::Genuine;
        else if (fields[1] == "counterfeit") e.label = fusion::Label::Counterfeit;
        else throw ParameterError(where + ": unknown label '" + fields[1] + "'");
        try {
            std::size_t used = 0;
            e.sample_seed = std::stoull(fields[2], &used);
            if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ParameterError(where + ": bad sample seed '" + fields[2] + "'");
        }
        e.params_json = fields[3];
        manifest.entries.push_back(std::move(e));
    }
    return manifest;
}

Manifest build_corpus(const CorpusRequest& request) {
    if (request.genuine < 1 || request.counterfeit < 1) throw ParameterError("corpus needs at least one sample per class");
    request.channel.validate();
    std::error_code ec;
    std::filesystem::create_directories(request.out_dir, ec);
    if (ec) throw IoError("cannot create corpus directory " + request.out_dir.string() + ": " + ec.message());

    const int total = request.genuine + request.counterfeit;
    std::vector<ManifestEntry> entries(static_cast<std::size_t>(total));

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (int i = next++; i < total; i = next++) {
            try {
                const auto recipe = draw_sample(request, i);
                const bool genuine = recipe.label == fusion::Label::Genuine;
                const int ordinal = genuine ? i : i - request.genuine;
                char name[64];
                std::snprintf(name, sizeof name, "%s_%05d.png", genuine ? "genuine" : "counterfeit", ordinal);
                io::write_png(request.out_dir / name, render_sample(recipe));
                entries[static_cast<std::size_t>(i)] = {name, recipe.label, recipe.sample_seed, recipe_json(recipe)};
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int threads = std::clamp(request.threads, 1, total);
    std::vector<std::jthread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);

    write_manifest(request.out_dir / "manifest.tsv", entries);
    Manifest manifest;
    manifest.base_dir = request.out_dir;
    manifest.entries = std::move(entries);
    return manifest;
}

}  // namespace rebroadcast::simulator
