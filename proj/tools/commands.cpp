#include "commands.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "feature_cache.hpp"
#include "parallel.hpp"
#include "rebroadcast/errors.hpp"
#include "rebroadcast/persistence.hpp"
#include "rebroadcast/png_io.hpp"

namespace rebroadcast::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_real(double value) {
    char buf[64];
    return std::string(buf, std::to_chars(buf, buf + sizeof buf, value).ptr);
}

std::string format_metrics(const fusion::Metrics& m, long no_keypoints) {
    std::ostringstream os;
    os << "F=" << format_real(m.f_measure) << '\n'
       << "NACC=" << format_real(m.nacc) << '\n'
       << "TPR=" << format_real(m.tpr) << '\n'
       << "FPR=" << format_real(m.fpr) << '\n'
       << "TP=" << m.tp << '\n'
       << "FP=" << m.fp << '\n'
       << "TN=" << m.tn << '\n'
       << "FN=" << m.fn << '\n'
       << "N_NOKP=" << no_keypoints << '\n';
    return os.str();
}

namespace {

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_output(path);
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<fusion::Label> labels_of(const simulator::Manifest& manifest) {
    std::vector<fusion::Label> labels;
    labels.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) labels.push_back(e.label);
    return labels;
}

persistence::AuthModel load_model(const fs::path& path) {
    try {
        return persistence::load(path);
    } catch (const IoError&) {
        throw;
    } catch (const Error& e) {
        throw CommandError(kExitModelMismatch, e.what());
    }
}

// Fused classifier input for one image; shape problems against the model are
// model mismatches.
pipeline::FusedFeatures fuse_for_model(const pipeline::ImageFeatures& features, const persistence::AuthModel& model) {
    pipeline::FusedFeatures fused;
    try {
        fused = pipeline::fuse(features, model.vocabulary, model.config);
    } catch (const DimensionError& e) {
        throw CommandError(kExitModelMismatch, e.what());
    }
    if (fused.vector.values.size() != model.svm.weights.size()) {
        throw CommandError(kExitModelMismatch, "feature dimension " + std::to_string(fused.vector.values.size()) +
                                                   " does not match model dimension " +
                                                   std::to_string(model.svm.weights.size()));
    }
    return fused;
}

}  // namespace

std::vector<pipeline::ImageFeatures> extract_manifest(const simulator::Manifest& manifest,
                                                      const pipeline::PipelineConfig& config,
                                                      const ExtractionOptions& options) {
    std::optional<FeatureCache> cache;
    if (options.cache_dir) cache.emplace(*options.cache_dir);
    // Cached entries always hold both parts so ablation runs share them.
    auto extraction = config;
    if (cache) extraction.feature_set = FeatureKind::Lgmfs;

    std::vector<pipeline::ImageFeatures> features(manifest.entries.size());
    parallel_for(features.size(), options.threads, [&](std::size_t i) {
        const auto path = manifest.resolve(manifest.entries[i]);
        const std::string bytes = io::read_file(path);
        auto& f = features[i];
        std::optional<pipeline::ImageFeatures> hit;
        if (cache) hit = cache->find(bytes, extraction);
        if (hit) {
            f = std::move(*hit);
        } else {
            const auto image = io::decode_png(bytes, path.string());
            try {
                f = pipeline::extract(image, extraction);
            } catch (const Error& e) {
                throw DegenerateInputError(path.string() + ": " + e.what());
            }
            if (cache) cache->store(bytes, extraction, f);
        }
        if (!config.uses_texture()) f.mribgp.clear();
        if (!config.uses_words()) f.descriptors.clear();
    });
    return features;
}

int cmd_gen_corpus(const GenCorpusOptions& options, std::ostream& out) {
    simulator::CorpusRequest request;
    request.genuine = options.genuine;
    request.counterfeit = options.counterfeit;
    request.seed = options.seed;
    request.out_dir = options.out_dir;
    request.threads = options.threads;
    const auto manifest = simulator::build_corpus(request);
    out << "seed=" << options.seed << '\n'
        << "genuine=" << options.genuine << '\n'
        << "counterfeit=" << options.counterfeit << '\n'
        << "manifest=" << (options.out_dir / "manifest.tsv").string() << '\n';
    return manifest.entries.size() == static_cast<std::size_t>(options.genuine + options.counterfeit) ? kExitOk : kExitData;
}

int cmd_train(const TrainOptions& options, std::ostream& out) {
    options.config.validate();
    const auto manifest = simulator::read_manifest(options.manifest);
    const auto labels = labels_of(manifest);
    const auto genuine = std::count(labels.begin(), labels.end(), fusion::Label::Genuine);
    const auto counterfeit = static_cast<long>(labels.size()) - genuine;
    if (genuine == 0 || counterfeit == 0) {
        throw CommandError(kExitData, "training manifest must contain both genuine and counterfeit samples (genuine=" +
                                          std::to_string(genuine) + ", counterfeit=" + std::to_string(counterfeit) + ")");
    }

    const auto features = extract_manifest(manifest, options.config, options.extraction);
    const auto trained = pipeline::train(features, labels, options.config);

    persistence::AuthModel model;
    model.config = options.config;
    model.vocabulary = trained.vocabulary;
    model.svm = trained.svm;
    model.training_fingerprint = persistence::fnv1a_hex(io::read_file(options.manifest));
    persistence::save(model, options.model);

    const auto& cv = trained.cross_validation;
    std::size_t best = 0;
    for (std::size_t i = 0; i < cv.grid.size(); ++i) {
        if (cv.grid[i] == cv.best_c) best = i;
    }
    std::ostringstream report;
    report << "seed=" << options.config.seed << '\n'
           << "feature_set=" << to_string(options.config.feature_set) << '\n'
           << "images=" << labels.size() << '\n'
           << "genuine=" << genuine << '\n'
           << "counterfeit=" << counterfeit << '\n'
           << "descriptors=" << trained.training_descriptors << '\n'
           << "k=" << trained.k << '\n'
           << "no_keypoint_images=" << trained.no_keypoint_images << '\n'
           << "best_C=" << format_real(cv.best_c) << '\n'
           << "cv_NACC=" << format_real(cv.mean_nacc[best]) << '\n';
    for (std::size_t f = 0; f < cv.fold_nacc[best].size(); ++f) {
        report << "fold_" << f << "_NACC=" << format_real(cv.fold_nacc[best][f]) << '\n';
    }
    report << "fingerprint=" << model.training_fingerprint << '\n' << "model=" << options.model.string() << '\n';
    out << report.str();

    if (options.report) {
        json grid = json::array();
        for (std::size_t i = 0; i < cv.grid.size(); ++i) {
            grid.push_back({{"C", cv.grid[i]}, {"mean_NACC", cv.mean_nacc[i]}, {"fold_NACC", cv.fold_nacc[i]}});
        }
        const json doc = {
            {"seed", options.config.seed},
            {"feature_set", std::string(to_string(options.config.feature_set))},
            {"images", labels.size()},
            {"genuine", genuine},
            {"counterfeit", counterfeit},
            {"descriptors", trained.training_descriptors},
            {"k", trained.k},
            {"no_keypoint_images", trained.no_keypoint_images},
            {"best_C", cv.best_c},
            {"fold_NACC", cv.fold_nacc[best]},
            {"grid", grid},
            {"wcss_history", trained.wcss_history},
            {"fingerprint", model.training_fingerprint},
        };
        write_text(*options.report, doc.dump(2) + '\n');
    }
    return kExitOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& out) {
    const auto model = load_model(options.model);
    const auto manifest = simulator::read_manifest(options.manifest);
    const auto truth = labels_of(manifest);
    const auto features = extract_manifest(manifest, model.config, options.extraction);

    std::vector<fusion::Label> predicted(features.size());
    std::vector<double> margins(features.size());
    std::vector<bool> no_keypoints(features.size());
    long n_nokp = 0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto fused = fuse_for_model(features[i], model);
        const auto p = fusion::svm_predict(model.svm, fused.vector.values);
        predicted[i] = p.label;
        margins[i] = p.margin;
        no_keypoints[i] = fused.no_keypoints;
        n_nokp += fused.no_keypoints ? 1 : 0;
    }
    const auto metrics = fusion::compute_metrics(predicted, truth, model.config.positive);

    out << "# seed=" << model.config.seed << " feature_set=" << to_string(model.config.feature_set)
        << " images=" << features.size() << '\n'
        << format_metrics(metrics, n_nokp);

    if (options.report) {
        const auto rate = [](double v, bool undefined) { return undefined ? json(nullptr) : json(v); };
        const json doc = {
            {"F", metrics.f_measure},
            {"NACC", metrics.nacc},
            {"TPR", rate(metrics.tpr, metrics.tpr_undefined)},
            {"FPR", rate(metrics.fpr, metrics.fpr_undefined)},
            {"TP", metrics.tp},
            {"FP", metrics.fp},
            {"TN", metrics.tn},
            {"FN", metrics.fn},
            {"N_NOKP", n_nokp},
        };
        write_text(*options.report, doc.dump(2) + '\n');
    }
    if (options.log) {
        std::ostringstream log;
        log << "# seed=" << model.config.seed << " fingerprint=" << model.training_fingerprint << '\n'
            << "path\tlabel\tpredicted\tmargin\tno_keypoints\n";
        for (std::size_t i = 0; i < features.size(); ++i) {
            log << manifest.entries[i].relative_path << '\t' << fusion::to_string(truth[i]) << '\t'
                << fusion::to_string(predicted[i]) << '\t' << format_real(margins[i]) << '\t'
                << (no_keypoints[i] ? 1 : 0) << '\n';
        }
        write_text(*options.log, log.str());
    }
    return kExitOk;
}

int cmd_predict(const PredictOptions& options, std::ostream& out) {
    const auto model = load_model(options.model);
    const auto image = io::read_png(options.image);
    const auto features = pipeline::extract(image, model.config);
    const auto fused = fuse_for_model(features, model);
    const auto p = fusion::svm_predict(model.svm, fused.vector.values);
    out << fusion::to_string(p.label) << '\t' << format_real(p.margin) << '\n';
    return p.label == fusion::Label::Counterfeit ? kExitCounterfeit : kExitOk;
}

int cmd_export_features(const ExportOptions& options, std::ostream& out) {
    const auto model = load_model(options.model);
    if (options.block == ExportBlock::Mribgp && !model.config.uses_texture()) {
        throw CommandError(kExitUsage, "model has no texture block to export");
    }
    if (options.block == ExportBlock::Bomrw && !model.config.uses_words()) {
        throw CommandError(kExitUsage, "model has no visual-word block to export");
    }
    const auto manifest = simulator::read_manifest(options.manifest);
    const auto features = extract_manifest(manifest, model.config, options.extraction);

    std::vector<std::vector<double>> rows(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        switch (options.block) {
            case ExportBlock::Model: rows[i] = fuse_for_model(features[i], model).vector.values; break;
            case ExportBlock::Mribgp:
                rows[i] = fusion::l1_normalized(features[i].mribgp, FeatureKind::Mribgp).values;
                break;
            case ExportBlock::Bomrw:
                rows[i] = vocab::word_histogram(features[i].descriptors, model.vocabulary).histogram.values;
                break;
        }
    }
    const std::size_t dim = rows.empty() ? 0 : rows.front().size();

    std::ostringstream csv;
    csv << "path,label";
    for (std::size_t j = 0; j < dim; ++j) csv << ",f_" << j;
    csv << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        csv << manifest.entries[i].relative_path << ',' << fusion::to_string(manifest.entries[i].label);
        for (double v : rows[i]) csv << ',' << format_real(v);
        csv << '\n';
    }
    if (options.out == "-") out << csv.str();
    else write_text(options.out, csv.str());
    return kExitOk;
}

namespace {

std::vector<double> parse_reals(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        double v = 0.0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (res.ec != std::errc() || res.ptr != item.data() + item.size()) {
            throw CommandError(kExitUsage, "bad number '" + item + "' in " + what);
        }
        out.push_back(v);
    }
    if (out.empty()) throw CommandError(kExitUsage, what + " is empty");
    return out;
}

std::vector<gabor::GaborScale> parse_scales(const std::string& text) {
    std::vector<gabor::GaborScale> scales;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw CommandError(kExitUsage, "gabor scale '" + item + "' must be sigma:lambda");
        const auto sigma = parse_reals(item.substr(0, colon), "--gabor-scales");
        const auto lambda = parse_reals(item.substr(colon + 1), "--gabor-scales");
        if (sigma.size() != 1 || lambda.size() != 1 || !(sigma[0] > 0.0)) {
            throw CommandError(kExitUsage, "gabor scale '" + item + "' must be sigma:lambda with sigma > 0");
        }
        scales.push_back({sigma[0], lambda[0], gabor::GaborParams::kernel_size_for(sigma[0])});
    }
    return scales;
}

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv(kThreadsEnv)) {
        int value = 0;
        const std::string_view text(env);
        const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
        if (res.ec == std::errc() && res.ptr == text.data() + text.size() && value > 0) return value;
        throw CommandError(kExitUsage, std::string(kThreadsEnv) + " must be a positive integer");
    }
    return 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Print-and-scan copy detection for multilevel 2D barcodes", "rebroadcast"};
    app.require_subcommand(1);

    int threads = 0;
    std::string cache_dir;
    const auto add_extraction = [&](CLI::App* sub) {
        sub->add_option("--threads", threads, "worker threads (default: $" + std::string(kThreadsEnv) + " or 1)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--cache", cache_dir, "directory for cached per-image features");
    };

    GenCorpusOptions gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic genuine/counterfeit corpus");
    gen_cmd->add_option("--genuine", gen.genuine, "number of single-pass samples")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--counterfeit", gen.counterfeit, "number of double-pass samples")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--seed", gen.seed, "master seed")->required();
    gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
    gen_cmd->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    TrainOptions train;
    std::string features = "lgmfs";
    std::string k_rule = "images";
    std::string c_grid;
    std::string gabor_scales;
    std::string report;
    auto* train_cmd = app.add_subcommand("train", "train a model from a labelled manifest");
    train_cmd->add_option("--manifest", train.manifest, "training manifest")->required();
    train_cmd->add_option("--model", train.model, "output model file")->required();
    train_cmd->add_option("--seed", train.config.seed, "seed for k-means, folds and subsampling")->required();
    train_cmd->add_option("--features", features, "feature set")->check(CLI::IsMember({"lgmfs", "mribgp", "bomrw"}));
    train_cmd->add_option("--k-rule", k_rule, "vocabulary size rule")->check(CLI::IsMember({"images", "keypoints"}));
    train_cmd->add_option("--threshold", train.config.detector.threshold, "keypoint detector threshold");
    train_cmd->add_option("--c-grid", c_grid, "comma-separated SVM C values");
    train_cmd->add_option("--folds", train.config.folds, "cross-validation folds");
    train_cmd->add_option("--gabor-scales", gabor_scales, "comma-separated sigma:lambda pairs");
    train_cmd->add_option("--max-descriptors", train.config.max_training_descriptors, "k-means training sample cap");
    train_cmd->add_option("--report", report, "write the training report as JSON");
    add_extraction(train_cmd);

    EvalOptions eval;
    std::string eval_report;
    std::string eval_log;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a labelled manifest");
    eval_cmd->add_option("--model", eval.model, "model file")->required();
    eval_cmd->add_option("--manifest", eval.manifest, "test manifest")->required();
    eval_cmd->add_option("--report", eval_report, "write metrics as JSON");
    eval_cmd->add_option("--log", eval_log, "write per-image predictions (TSV)");
    add_extraction(eval_cmd);

    PredictOptions predict;
    auto* predict_cmd = app.add_subcommand("predict", "classify one image (exit 0 genuine, 1 counterfeit)");
    predict_cmd->add_option("--model", predict.model, "model file")->required();
    predict_cmd->add_option("--image", predict.image, "PNG image")->required();

    ExportOptions exp;
    std::string block = "model";
    auto* export_cmd = app.add_subcommand("export-features", "write per-image feature vectors as CSV");
    export_cmd->add_option("--model", exp.model, "model file")->required();
    export_cmd->add_option("--manifest", exp.manifest, "manifest")->required();
    export_cmd->add_option("--out", exp.out, "CSV path, or - for stdout")->required();
    export_cmd->add_option("--block", block, "vector to export")->check(CLI::IsMember({"model", "mribgp", "bomrw"}));
    add_extraction(export_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        const ExtractionOptions extraction{resolve_threads(threads),
                                           cache_dir.empty() ? std::nullopt : std::optional<fs::path>(cache_dir)};
        if (*gen_cmd) {
            gen.threads = resolve_threads(threads);
            return cmd_gen_corpus(gen, out);
        }
        if (*train_cmd) {
            train.config.feature_set = features == "mribgp"  ? FeatureKind::Mribgp
                                       : features == "bomrw" ? FeatureKind::Bomrw
                                                             : FeatureKind::Lgmfs;
            train.config.k_rule = k_rule == "keypoints" ? vocab::KRule::TrainingKeypoints : vocab::KRule::TrainingImages;
            if (!c_grid.empty()) train.config.c_grid = parse_reals(c_grid, "--c-grid");
            if (!gabor_scales.empty()) train.config.gabor.scales = parse_scales(gabor_scales);
            if (!report.empty()) train.report = report;
            train.extraction = extraction;
            return cmd_train(train, out);
        }
        if (*eval_cmd) {
            if (!eval_report.empty()) eval.report = eval_report;
            if (!eval_log.empty()) eval.log = eval_log;
            eval.extraction = extraction;
            return cmd_eval(eval, out);
        }
        if (*predict_cmd) return cmd_predict(predict, out);
        if (*export_cmd) {
            exp.block = block == "mribgp" ? ExportBlock::Mribgp : block == "bomrw" ? ExportBlock::Bomrw : ExportBlock::Model;
            exp.extraction = extraction;
            return cmd_export_features(exp, out);
        }
    } catch (const CommandError& e) {
        err << "error: " << e.what() << '\n';
        return e.code();
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ParameterError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const FormatError& e) {
        err << "error: " << e.what() << '\n';
        return kExitModelMismatch;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitUsage;
}

}  // namespace rebroadcast::cli
