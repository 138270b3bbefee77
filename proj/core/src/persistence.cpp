#include "rebroadcast/persistence.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <system_error>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/keypoint.hpp"

namespace rebroadcast::persistence {

namespace {

using Header = std::map<std::string, std::string>;

std::string format_real(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string format_reals(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_real(values[i]);
    }
    return out;
}

std::string scales_string(const gabor::GaborParams& g) {
    std::string out;
    for (std::size_t i = 0; i < g.scales.size(); ++i) {
        if (i) out += ',';
        out += format_real(g.scales[i].sigma) + ':' + format_real(g.scales[i].lambda) + ':' +
               std::to_string(g.scales[i].kernel_size);
    }
    return out;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_matrix(std::string& out, std::uint64_t rows, std::uint64_t cols, std::span<const double> data) {
    put_u64(out, rows);
    put_u64(out, cols);
    for (double v : data) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
public:
    Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    std::string_view take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw TruncatedFileError(origin_ + ": file truncated while reading " + what);
        }
        const auto view = bytes_.substr(pos_, n);
        pos_ += n;
        return view;
    }

    std::uint64_t u64(const char* what) {
        const auto b = take(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        return v;
    }

    std::uint32_t u32(const char* what) {
        const auto b = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        return v;
    }

    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
    const std::string& origin_;
};

struct Matrix {
    std::uint64_t rows = 0;
    std::uint64_t cols = 0;
    std::vector<double> data;
};

Matrix read_matrix(Reader& r, const char* what, const std::string& origin) {
    Matrix m;
    m.rows = r.u64(what);
    m.cols = r.u64(what);
    if (m.cols != 0 && m.rows > (r.remaining() / 8) / m.cols) {
        throw TruncatedFileError(origin + ": file truncated inside " + what);
    }
    m.data.resize(m.rows * m.cols);
    for (double& v : m.data) v = std::bit_cast<double>(r.u64(what));
    return m;
}

class HeaderView {
public:
    HeaderView(Header h, const std::string& origin) : h_(std::move(h)), origin_(origin) {}

    const std::string& str(const std::string& key) const {
        const auto it = h_.find(key);
        if (it == h_.end()) throw FormatError(origin_ + ": header is missing key '" + key + "'");
        return it->second;
    }

    template <typename T>
    T number(const std::string& key) const {
        const auto& s = str(key);
        T v{};
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad(key);
        return v;
    }

    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        const auto& s = str(key);
        if (s.empty()) return out;
        const char* p = s.data();
        const char* end = s.data() + s.size();
        while (true) {
            double v = 0.0;
            const auto res = std::from_chars(p, end, v);
            if (res.ec != std::errc()) bad(key);
            out.push_back(v);
            if (res.ptr == end) break;
            if (*res.ptr != ',') bad(key);
            p = res.ptr + 1;
        }
        return out;
    }

    [[noreturn]] void bad(const std::string& key) const {
        throw FormatError(origin_ + ": malformed header value for '" + key + "'");
    }

private:
    Header h_;
    const std::string& origin_;
};

Header parse_header(std::string_view text, const std::string& origin) {
    Header h;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) throw FormatError(origin + ": header line is not newline-terminated");
        const auto line = text.substr(start, nl - start);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos || eq == 0) throw FormatError(origin + ": malformed header line");
        std::string key(line.substr(0, eq));
        if (!h.empty() && !(h.rbegin()->first < key)) {
            throw FormatError(origin + ": header keys are not strictly sorted at '" + key + "'");
        }
        h.emplace(std::move(key), std::string(line.substr(eq + 1)));
        start = nl + 1;
    }
    return h;
}

std::vector<gabor::GaborScale> parse_scales(const HeaderView& hv, const std::string& key) {
    std::vector<gabor::GaborScale> out;
    std::istringstream in(hv.str(key));
    std::string item;
    while (std::getline(in, item, ',')) {
        gabor::GaborScale s;
        const auto a = item.find(':');
        const auto b = item.find(':', a == std::string::npos ? a : a + 1);
        if (a == std::string::npos || b == std::string::npos) hv.bad(key);
        const char* p = item.data();
        const auto r1 = std::from_chars(p, p + a, s.sigma);
        const auto r2 = std::from_chars(p + a + 1, p + b, s.lambda);
        const auto r3 = std::from_chars(p + b + 1, p + item.size(), s.kernel_size);
        if (r1.ec != std::errc() || r1.ptr != p + a || r2.ec != std::errc() || r2.ptr != p + b ||
            r3.ec != std::errc() || r3.ptr != p + item.size()) {
            hv.bad(key);
        }
        out.push_back(s);
    }
    return out;
}

template <typename E>
E parse_enum(const HeaderView& hv, const std::string& key, std::initializer_list<std::pair<std::string_view, E>> options) {
    const auto& s = hv.str(key);
    for (const auto& [name, value] : options) {
        if (s == name) return value;
    }
    hv.bad(key);
}

}  // namespace

void AuthModel::validate() const {
    if (vocabulary.k() > 0 && vocabulary.dim() != keypoint::kDescriptorBits) {
        throw InvariantViolationError("vocabulary centroids must have 512 components");
    }
    if (config.uses_words() && vocabulary.k() < 2) {
        throw InvariantViolationError("word-based feature sets need a vocabulary with at least 2 words");
    }
    if (!config.uses_words() && vocabulary.k() != 0) {
        throw InvariantViolationError("texture-only models carry no vocabulary");
    }
    const int expected = pipeline::feature_dim(config, vocabulary.k());
    if (svm.weights.size() != static_cast<std::size_t>(expected)) {
        throw InvariantViolationError("SVM weight dimension " + std::to_string(svm.weights.size()) + " != expected " +
                                      std::to_string(expected));
    }
    vocabulary.check_distinct();
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    for (int i = 15; i >= 0; --i) {
        buf[i] = "0123456789abcdef"[h & 0xF];
        h >>= 4;
    }
    return std::string(buf, 16);
}

std::string serialize(const AuthModel& model) {
    model.validate();
    const auto& c = model.config;
    Header h;
    h["config.c_grid"] = format_reals(c.c_grid);
    h["config.detector.max_keypoints"] = std::to_string(c.detector.max_keypoints);
    h["config.detector.octaves"] = std::to_string(c.detector.octaves);
    h["config.detector.threshold"] = format_real(c.detector.threshold);
    h["config.feature_set"] = std::string(to_string(c.feature_set));
    h["config.folds"] = std::to_string(c.folds);
    h["config.gabor.gamma"] = format_real(c.gabor.gamma);
    h["config.gabor.orientations"] = std::to_string(c.gabor.orientations);
    h["config.gabor.post_sum_window"] = std::to_string(c.gabor.post_sum_window);
    h["config.gabor.response_epsilon"] = format_real(c.gabor.response_epsilon);
    h["config.gabor.scales"] = scales_string(c.gabor);
    h["config.k_rule"] = c.k_rule == vocab::KRule::TrainingImages ? "images" : "keypoints";
    h["config.max_training_descriptors"] = std::to_string(c.max_training_descriptors);
    h["config.positive"] = std::string(fusion::to_string(c.positive));
    h["config.seed"] = std::to_string(c.seed);
    h["svm.C"] = format_real(model.svm.C);
    h["svm.positive"] = std::string(fusion::to_string(model.svm.positive));
    h["training.fingerprint"] = model.training_fingerprint;
    h["vocab.dim"] = std::to_string(model.vocabulary.dim());
    h["vocab.k"] = std::to_string(model.vocabulary.k());
    h["vocab.meta.descriptors"] = std::to_string(model.vocabulary.meta().descriptors);
    h["vocab.meta.images"] = std::to_string(model.vocabulary.meta().images);
    h["vocab.meta.seed"] = std::to_string(model.vocabulary.meta().seed);

    std::string header;
    for (const auto& [key, value] : h) {
        if (value.find('\n') != std::string::npos || key.find('=') != std::string::npos) {
            throw ParameterError("header entry '" + key + "' cannot be encoded");
        }
        header += key + '=' + value + '\n';
    }

    std::string out(kMagic, kMagic + 4);
    put_u32(out, model.format_version);
    put_u64(out, header.size());
    out += header;
    const auto k = static_cast<std::uint64_t>(model.vocabulary.k());
    put_matrix(out, k, k ? static_cast<std::uint64_t>(model.vocabulary.dim()) : 0, model.vocabulary.centroids());
    put_matrix(out, 1, model.svm.weights.size(), model.svm.weights);
    const double bias[1] = {model.svm.bias};
    put_matrix(out, 1, 1, bias);
    return out;
}

AuthModel deserialize(std::string_view bytes, const std::string& origin) {
    Reader r(bytes, origin);
    const auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw FormatError(origin + ": not a CPGD model (bad magic)");
    AuthModel m;
    m.format_version = r.u32("format version");
    if (m.format_version > kFormatVersion) {
        throw UnsupportedVersionError(origin + ": format version " + std::to_string(m.format_version) +
                                      " is newer than supported version " + std::to_string(kFormatVersion));
    }
    if (m.format_version == 0) throw FormatError(origin + ": format version 0 is invalid");
    const auto header_len = r.u64("header length");
    if (header_len > r.remaining()) throw TruncatedFileError(origin + ": file truncated inside header");
    const HeaderView hv(parse_header(r.take(static_cast<std::size_t>(header_len), "header"), origin), origin);

    auto& c = m.config;
    c.c_grid = hv.reals("config.c_grid");
    c.detector.max_keypoints = hv.number<int>("config.detector.max_keypoints");
    c.detector.octaves = hv.number<int>("config.detector.octaves");
    c.detector.threshold = hv.number<double>("config.detector.threshold");
    c.feature_set = parse_enum<FeatureKind>(
        hv, "config.feature_set",
        {{"lgmfs", FeatureKind::Lgmfs}, {"mribgp", FeatureKind::Mribgp}, {"bomrw", FeatureKind::Bomrw}});
    c.folds = hv.number<int>("config.folds");
    c.gabor.gamma = hv.number<double>("config.gabor.gamma");
    c.gabor.orientations = hv.number<int>("config.gabor.orientations");
    c.gabor.post_sum_window = hv.number<int>("config.gabor.post_sum_window");
    c.gabor.response_epsilon = hv.number<double>("config.gabor.response_epsilon");
    c.gabor.scales = parse_scales(hv, "config.gabor.scales");
    c.k_rule = parse_enum<vocab::KRule>(
        hv, "config.k_rule", {{"images", vocab::KRule::TrainingImages}, {"keypoints", vocab::KRule::TrainingKeypoints}});
    c.max_training_descriptors = hv.number<std::uint64_t>("config.max_training_descriptors");
    const std::initializer_list<std::pair<std::string_view, fusion::Label>> labels = {
        {"genuine", fusion::Label::Genuine}, {"counterfeit", fusion::Label::Counterfeit}};
    c.positive = parse_enum<fusion::Label>(hv, "config.positive", labels);
    c.seed = hv.number<std::uint64_t>("config.seed");
    m.svm.C = hv.number<double>("svm.C");
    m.svm.positive = parse_enum<fusion::Label>(hv, "svm.positive", labels);
    m.training_fingerprint = hv.str("training.fingerprint");
    const auto vocab_dim = hv.number<int>("vocab.dim");
    const auto vocab_k = hv.number<std::uint64_t>("vocab.k");
    vocab::TrainingMeta meta;
    meta.descriptors = hv.number<std::uint64_t>("vocab.meta.descriptors");
    meta.images = hv.number<std::uint64_t>("vocab.meta.images");
    meta.seed = hv.number<std::uint64_t>("vocab.meta.seed");

    auto centroids = read_matrix(r, "centroid matrix", origin);
    auto weights = read_matrix(r, "weight matrix", origin);
    auto bias = read_matrix(r, "bias matrix", origin);
    if (r.remaining() != 0) throw FormatError(origin + ": unexpected trailing bytes");

    if (centroids.rows != vocab_k || (vocab_k > 0 && centroids.cols != static_cast<std::uint64_t>(vocab_dim))) {
        throw InvariantViolationError(origin + ": centroid matrix shape disagrees with header");
    }
    if (weights.rows != 1) throw InvariantViolationError(origin + ": weight matrix must have one row");
    if (bias.rows != 1 || bias.cols != 1) throw InvariantViolationError(origin + ": bias must be 1x1");

    try {
        if (vocab_dim != 0) m.vocabulary = vocab::Vocabulary(vocab_dim, std::move(centroids.data), meta);
        else if (vocab_k != 0) throw InvariantViolationError("vocabulary with words but zero dimension");
        m.svm.weights = std::move(weights.data);
        m.svm.bias = bias.data[0];
        m.validate();
        c.validate();
    } catch (const Error& e) {
        throw InvariantViolationError(origin + ": " + e.what());
    }
    return m;
}

void save(const AuthModel& model, const std::filesystem::path& path) {
    const std::string bytes = serialize(model);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw IoError("failed writing model: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move model into place: " + path.string());
    }
}

AuthModel load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading model: " + path.string());
    return deserialize(bytes, path.string());
}

}  // namespace rebroadcast::persistence
