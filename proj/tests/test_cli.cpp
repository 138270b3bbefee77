#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "commands.hpp"
#include "rebroadcast/persistence.hpp"
#include "rebroadcast/png_io.hpp"
#include "support/tempdir.hpp"

using namespace rebroadcast;
using namespace rebroadcast::cli;
namespace fs = std::filesystem;

namespace {

struct Invocation {
    int code;
    std::string out;
    std::string err;
};

Invocation invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "rebroadcast");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::map<std::string, std::string> key_values(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

std::vector<std::vector<std::string>> split_lines(const std::string& text, char sep) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, sep)) fields.push_back(field);
        rows.push_back(fields);
    }
    return rows;
}

// One small corpus and model shared by all cases; features are cached so
// repeated commands only pay for extraction once.
struct Fixture {
    testgen::TempDir dir{"cli"};
    fs::path corpus = dir / "corpus";
    fs::path manifest = corpus / "manifest.tsv";
    fs::path cache = dir / "cache";
    fs::path model = dir / "model.cpgd";
    Invocation train;

    Fixture() {
        const auto gen = invoke({"gen-corpus", "--genuine", "8", "--counterfeit", "8", "--seed", "31", "--out",
                                 corpus.string()});
        REQUIRE(gen.code == 0);
        train = invoke({"train", "--manifest", manifest.string(), "--model", model.string(), "--seed", "7", "--cache",
                        cache.string(), "--report", (dir / "train.json").string()});
        REQUIRE(train.code == 0);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

int shell(const std::string& command) {
    const int status = std::system(command.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("train report") {
    auto& f = fixture();
    const auto kv = key_values(f.train.out);
    CHECK(kv.at("seed") == "7");
    CHECK(kv.at("feature_set") == "lgmfs");
    CHECK(kv.at("images") == "16");
    CHECK(kv.at("genuine") == "8");
    CHECK(kv.at("counterfeit") == "8");
    CHECK(kv.at("k") == "4");
    CHECK(kv.count("best_C") == 1);
    CHECK(kv.count("cv_NACC") == 1);
    for (int i = 0; i < 5; ++i) CHECK(kv.count("fold_" + std::to_string(i) + "_NACC") == 1);
    CHECK(kv.at("fingerprint") == persistence::fnv1a_hex(io::read_file(f.manifest)));

    const auto doc = nlohmann::json::parse(io::read_file(f.dir / "train.json"));
    CHECK(doc.at("k") == 4);
    CHECK(doc.at("grid").size() == 11);
    CHECK(doc.at("fold_NACC").size() == 5);
    CHECK_FALSE(doc.at("wcss_history").empty());

    const auto model = persistence::load(f.model);
    CHECK(model.vocabulary.k() == 4);
    CHECK(model.svm.weights.size() == 652);
}

TEST_CASE("training is reproducible") {
    auto& f = fixture();
    const auto again = f.dir / "again.cpgd";
    const auto r = invoke({"train", "--manifest", f.manifest.string(), "--model", again.string(), "--seed", "7",
                           "--cache", f.cache.string(), "--threads", "2"});
    REQUIRE(r.code == 0);
    CHECK(io::read_file(again) == io::read_file(f.model));

    // Without the cache the features are recomputed from the images.
    const auto fresh = f.dir / "fresh.cpgd";
    REQUIRE(invoke({"train", "--manifest", f.manifest.string(), "--model", fresh.string(), "--seed", "7"}).code == 0);
    CHECK(io::read_file(fresh) == io::read_file(f.model));
}

TEST_CASE("eval output, report and log agree") {
    auto& f = fixture();
    const auto r = invoke({"eval", "--model", f.model.string(), "--manifest", f.manifest.string(), "--cache",
                           f.cache.string(), "--report", (f.dir / "eval.json").string(), "--log",
                           (f.dir / "eval.tsv").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.rfind("# seed=7 ", 0) == 0);
    const auto kv = key_values(r.out);
    const std::vector<std::string> keys{"F", "NACC", "TPR", "FPR", "TP", "FP", "TN", "FN", "N_NOKP"};
    CHECK(kv.size() == keys.size());
    for (const auto& k : keys) CHECK(kv.count(k) == 1);

    const auto doc = nlohmann::json::parse(io::read_file(f.dir / "eval.json"));
    CHECK(doc.size() == keys.size());
    CHECK(doc.at("TP").get<long>() == std::stol(kv.at("TP")));
    CHECK(format_real(doc.at("NACC").get<double>()) == kv.at("NACC"));

    const auto rows = split_lines(io::read_file(f.dir / "eval.tsv"), '\t');
    REQUIRE(rows.size() == 18);
    CHECK(rows[0][0].rfind("# seed=7 fingerprint=", 0) == 0);
    CHECK(rows[1] == std::vector<std::string>{"path", "label", "predicted", "margin", "no_keypoints"});
    std::vector<fusion::Label> truth, predicted;
    for (std::size_t i = 2; i < rows.size(); ++i) {
        REQUIRE(rows[i].size() == 5);
        truth.push_back(rows[i][1] == "counterfeit" ? fusion::Label::Counterfeit : fusion::Label::Genuine);
        predicted.push_back(rows[i][2] == "counterfeit" ? fusion::Label::Counterfeit : fusion::Label::Genuine);
        const double margin = std::stod(rows[i][3]);
        CHECK((margin > 0) == (predicted.back() == fusion::Label::Counterfeit));
    }
    const auto m = fusion::compute_metrics(predicted, truth);
    CHECK(format_metrics(m, std::stol(kv.at("N_NOKP"))) == r.out.substr(r.out.find('\n') + 1));
}

TEST_CASE("predict matches eval bit for bit") {
    auto& f = fixture();
    const auto log = f.dir / "predict-log.tsv";
    REQUIRE(invoke({"eval", "--model", f.model.string(), "--manifest", f.manifest.string(), "--cache", f.cache.string(),
                    "--log", log.string()})
                .code == 0);
    const auto rows = split_lines(io::read_file(log), '\t');
    for (std::size_t i : {std::size_t{2}, std::size_t{12}}) {
        const auto r = invoke({"predict", "--model", f.model.string(), "--image", (f.corpus / rows[i][0]).string()});
        const auto fields = split_lines(r.out, '\t');
        REQUIRE(fields.size() == 1);
        REQUIRE(fields[0].size() == 2);
        CHECK(fields[0][0] == rows[i][2]);
        CHECK(fields[0][1] == rows[i][3]);
        CHECK(r.code == (rows[i][2] == "counterfeit" ? 1 : 0));
    }
}

TEST_CASE("feature export") {
    auto& f = fixture();
    const auto r = invoke({"export-features", "--model", f.model.string(), "--manifest", f.manifest.string(), "--out",
                           "-", "--cache", f.cache.string()});
    REQUIRE(r.code == 0);
    const auto rows = split_lines(r.out, ',');
    REQUIRE(rows.size() == 17);
    CHECK(rows[0][0] == "path");
    CHECK(rows[0][2] == "f_0");
    for (const auto& row : rows) CHECK(row.size() == 2 + 652);
    double sum = 0.0;
    for (std::size_t j = 2; j < rows[1].size(); ++j) sum += std::stod(rows[1][j]);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

    const auto words = invoke({"export-features", "--model", f.model.string(), "--manifest", f.manifest.string(),
                               "--out", (f.dir / "words.csv").string(), "--block", "bomrw", "--cache", f.cache.string()});
    REQUIRE(words.code == 0);
    const auto wrows = split_lines(io::read_file(f.dir / "words.csv"), ',');
    CHECK(wrows[0].size() == 2 + 4);
}

TEST_CASE("exit codes") {
    auto& f = fixture();
    SUBCASE("usage errors") {
        CHECK(invoke({}).code == 2);
        CHECK(invoke({"bogus"}).code == 2);
        CHECK(invoke({"train", "--manifest", f.manifest.string()}).code == 2);
        CHECK(invoke({"train", "--manifest", f.manifest.string(), "--model", "x", "--seed", "1", "--features", "nope"})
                  .code == 2);
        CHECK(invoke({"predict", "--model", f.model.string(), "--image", (f.dir / "missing.png").string()}).code == 2);
        CHECK(invoke({"eval", "--model", (f.dir / "missing.cpgd").string(), "--manifest", f.manifest.string()}).code ==
              2);
        CHECK(invoke({"--help"}).code == 0);
    }
    SUBCASE("single-label manifest") {
        std::ifstream in(f.manifest);
        std::ofstream out(f.corpus / "genuine_only.tsv");
        std::string line;
        while (std::getline(in, line)) {
            if (line.find("\tgenuine\t") != std::string::npos) out << line << '\n';
        }
        out.close();
        const auto r = invoke({"train", "--manifest", (f.corpus / "genuine_only.tsv").string(), "--model",
                               (f.dir / "never.cpgd").string(), "--seed", "1"});
        CHECK(r.code == 3);
        CHECK_FALSE(r.err.empty());
        CHECK_FALSE(fs::exists(f.dir / "never.cpgd"));
    }
    SUBCASE("corrupt model") {
        auto bytes = io::read_file(f.model);
        bytes[1] = 'X';
        std::ofstream(f.dir / "corrupt.cpgd", std::ios::binary) << bytes;
        const auto r = invoke({"predict", "--model", (f.dir / "corrupt.cpgd").string(), "--image",
                               (f.corpus / "genuine_00000.png").string()});
        CHECK(r.code == 4);
        CHECK(r.err.find("corrupt.cpgd") != std::string::npos);
    }
    SUBCASE("future model version") {
        auto bytes = io::read_file(f.model);
        bytes[4] = 9;
        std::ofstream(f.dir / "future.cpgd", std::ios::binary) << bytes;
        CHECK(invoke({"eval", "--model", (f.dir / "future.cpgd").string(), "--manifest", f.manifest.string()}).code == 4);
    }
}

TEST_CASE("the installed binary") {
    auto& f = fixture();
    const std::string tool = REBROADCAST_TOOL_PATH;
    CHECK(shell(tool + " --help > /dev/null") == 0);
    CHECK(shell(tool + " frobnicate 2> /dev/null") == 2);
    const auto log = f.dir / "binary-log.tsv";
    REQUIRE(invoke({"eval", "--model", f.model.string(), "--manifest", f.manifest.string(), "--cache", f.cache.string(),
                    "--log", log.string()})
                .code == 0);
    const auto rows = split_lines(io::read_file(log), '\t');
    for (std::size_t i = 2; i < rows.size(); ++i) {
        const int expected = rows[i][2] == "counterfeit" ? 1 : 0;
        const auto cmd = tool + " predict --model " + f.model.string() + " --image " + (f.corpus / rows[i][0]).string() +
                         " > " + (f.dir / "predict.out").string();
        CHECK(shell(cmd) == expected);
        CHECK(io::read_file(f.dir / "predict.out") == rows[i][2] + "\t" + rows[i][3] + "\n");
        if (i == 3) break;
    }
}
