#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rebroadcast/fusion.hpp"
#include "rebroadcast/pipeline.hpp"
#include "rebroadcast/simulator.hpp"

namespace rebroadcast::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitCounterfeit = 1,
    kExitUsage = 2,
    kExitData = 3,
    kExitModelMismatch = 4,
};

class CommandError : public std::runtime_error {
public:
    CommandError(int code, const std::string& message) : std::runtime_error(message), code_(code) {}
    int code() const noexcept { return code_; }

private:
    int code_;
};

inline constexpr const char* kThreadsEnv = "REBROADCAST_THREADS";

struct ExtractionOptions {
    int threads = 1;
    std::optional<std::filesystem::path> cache_dir;
};

struct GenCorpusOptions {
    int genuine = 50;
    int counterfeit = 50;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;
    int threads = 1;
};

struct TrainOptions {
    std::filesystem::path manifest;
    std::filesystem::path model;
    std::optional<std::filesystem::path> report;  // JSON copy of the report
    pipeline::PipelineConfig config;
    ExtractionOptions extraction;
};

struct EvalOptions {
    std::filesystem::path model;
    std::filesystem::path manifest;
    std::optional<std::filesystem::path> report;  // JSON metrics
    std::optional<std::filesystem::path> log;     // per-image predictions (TSV)
    ExtractionOptions extraction;
};

struct PredictOptions {
    std::filesystem::path model;
    std::filesystem::path image;
};

enum class ExportBlock { Model, Mribgp, Bomrw };

struct ExportOptions {
    std::filesystem::path model;
    std::filesystem::path manifest;
    std::filesystem::path out;
    ExportBlock block = ExportBlock::Model;
    ExtractionOptions extraction;
};

int cmd_gen_corpus(const GenCorpusOptions& options, std::ostream& out);
int cmd_train(const TrainOptions& options, std::ostream& out);
int cmd_eval(const EvalOptions& options, std::ostream& out);
int cmd_predict(const PredictOptions& options, std::ostream& out);
int cmd_export_features(const ExportOptions& options, std::ostream& out);

// Per-image features in manifest order.
std::vector<pipeline::ImageFeatures> extract_manifest(const simulator::Manifest& manifest,
                                                      const pipeline::PipelineConfig& config,
                                                      const ExtractionOptions& options);

// Fixed-key metrics block, one `KEY=value` line each, in the order
// F NACC TPR FPR TP FP TN FN N_NOKP.
std::string format_metrics(const fusion::Metrics& metrics, long no_keypoints);

// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

// Parses argv, dispatches, and maps failures to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rebroadcast::cli
