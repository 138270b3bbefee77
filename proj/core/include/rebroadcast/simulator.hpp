#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rebroadcast/fusion.hpp"
#include "rebroadcast/imgproc.hpp"

namespace rebroadcast::simulator {

// Structural stand-in for a multilevel 2D code: a random module grid of
// `levels` equally spaced gray values inside a one-module black frame.
struct BarcodeSpec {
    int modules_per_side = 62;
    int levels = 4;
    int module_px = 4;
    std::uint64_t seed = 0;

    void validate() const;
    int side_px() const noexcept { return (modules_per_side + 2) * module_px; }
};

// One print-and-scan pass. halftone_cell 0 skips halftoning; zero sigmas,
// zero rotation and rescale 1 are identities.
struct ChannelParams {
    int halftone_cell = 0;
    double psf_sigma = 0.0;
    double noise_sigma = 0.0;
    double rot_deg = 0.0;
    double rescale = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

imgproc::GrayImage generate_barcode(const BarcodeSpec& spec);

// Clustered-dot threshold matrix for a cell x cell tile, row-major, values
// (rank + 0.5) / cell^2 with rank growing outward from the cell centre.
std::vector<double> clustered_dot_matrix(int cell);

// Binary ordered dither: ink (0) clusters grow from each cell centre as the
// gray level darkens, so local white-pixel share tracks the input level.
imgproc::GrayImage halftone(const imgproc::GrayImage& image, int cell);

// halftone -> optical blur -> sensor noise (clamped) -> small rotation ->
// resample by `rescale` and back. Output keeps the input size.
imgproc::GrayImage print_scan(const imgproc::GrayImage& image, const ChannelParams& params);

// High-frequency statistic used to compare single and double passes: share
// of spectral energy above half the Nyquist frequency.
double high_frequency_energy(const imgproc::GrayImage& image);

template <typename T>
struct Range {
    T lo;
    T hi;
};

struct BarcodeRanges {
    Range<int> modules_per_side{62, 62};
    Range<int> levels{3, 6};
    Range<int> module_px{4, 4};
};

struct ChannelRanges {
    std::vector<int> halftone_cells{4, 8};
    Range<double> psf_sigma{0.6, 1.4};
    Range<double> noise_sigma{0.005, 0.02};
    Range<double> rot_deg{-2.0, 2.0};
    Range<double> rescale{0.9, 1.1};

    void validate() const;
};

struct ManifestEntry {
    std::string relative_path;
    fusion::Label label = fusion::Label::Genuine;
    std::uint64_t sample_seed = 0;
    std::string params_json;

    bool operator==(const ManifestEntry&) const = default;
};

struct Manifest {
    std::filesystem::path base_dir;  // relative paths resolve against this
    std::vector<ManifestEntry> entries;

    std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.relative_path; }
};

// Tab-separated, one record per line:
//   <relative_path>\t<genuine|counterfeit>\t<sample_seed>\t<param_json>
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::string format_manifest_line(const ManifestEntry& entry);

struct CorpusRequest {
    int genuine = 1;
    int counterfeit = 1;
    BarcodeRanges barcode;
    ChannelRanges channel;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    int threads = 1;
};

// Fully drawn sample description; counterfeits carry two channel passes.
struct SampleRecipe {
    fusion::Label label;
    std::uint64_t sample_seed;
    BarcodeSpec barcode;
    std::vector<ChannelParams> passes;
};

SampleRecipe draw_sample(const CorpusRequest& request, int index);
imgproc::GrayImage render_sample(const SampleRecipe& recipe);
std::string recipe_json(const SampleRecipe& recipe);

// Writes every sample as an 8-bit PNG plus manifest.tsv into out_dir and
// returns the manifest. Samples are ordered genuine first; each derives its
// seed from (master seed, index), so thread count never changes the output.
Manifest build_corpus(const CorpusRequest& request);

}  // namespace rebroadcast::simulator
