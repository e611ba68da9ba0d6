#include "minegan/data.hpp"

#include "minegan/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace minegan {

// ---- mixtures ----------------------------------------------------------

MixtureSpec::MixtureSpec(std::vector<MixtureComponent> components) : components_(std::move(components)) {
    if (components_.empty()) throw ConfigError("components", "mixture needs at least one component");
    dim_ = components_.front().mean.size();
    if (dim_ == 0) throw ConfigError("mean", "mixture dimension must be positive");
    double total = 0.0;
    bool any_positive = false;
    for (std::size_t i = 0; i < components_.size(); ++i) {
        const auto& c = components_[i];
        const auto where = "component " + std::to_string(i);
        if (c.mean.size() != dim_ || c.variance.size() != dim_) {
            throw ConfigError(where, "mean/variance dimension mismatch");
        }
        if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) throw ConfigError(where, "weight must be >= 0");
        any_positive = any_positive || c.weight > 0.0;
        total += c.weight;
        for (double v : c.variance) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(where, "variances must be > 0");
        }
        for (double m : c.mean) {
            if (!std::isfinite(m)) throw ConfigError(where, "mean must be finite");
        }
    }
    if (!any_positive) throw ConfigError("weight", "at least one component weight must be positive");
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("weight", "component weights must sum to 1");
}

MixtureSpec MixtureSpec::from_json(const nlohmann::json& j) {
    try {
        std::vector<MixtureComponent> comps;
        for (const auto& c : j.at("components")) {
            MixtureComponent mc;
            mc.weight = c.at("weight").get<double>();
            mc.mean = c.at("mean").get<std::vector<double>>();
            mc.variance = c.at("variance").get<std::vector<double>>();
            comps.push_back(std::move(mc));
        }
        return MixtureSpec(std::move(comps));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("mixture", e.what());
    }
}

MixtureSpec MixtureSpec::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open mixture spec " + path.string());
    try {
        return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

nlohmann::json MixtureSpec::to_json() const {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : components_) {
        comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"variance", c.variance}});
    }
    return {{"components", comps}};
}

MixtureSpec MixtureSpec::ring(std::size_t modes, double radius, double stddev) {
    std::vector<MixtureComponent> comps;
    const double pi = std::acos(-1.0);
    for (std::size_t k = 0; k < modes; ++k) {
        const double angle = 2.0 * pi * static_cast<double>(k) / static_cast<double>(modes);
        comps.push_back({1.0 / static_cast<double>(modes),
                         {radius * std::cos(angle), radius * std::sin(angle)},
                         {stddev * stddev, stddev * stddev}});
    }
    // Equal weights may not sum to exactly one in floating point.
    const double total = std::accumulate(comps.begin(), comps.end(), 0.0,
                                         [](double s, const MixtureComponent& c) { return s + c.weight; });
    comps.back().weight += 1.0 - total;
    return MixtureSpec(std::move(comps));
}

LabeledBatch MixtureSpec::draw(std::size_t n, Rng& rng) const {
    std::uniform_real_distribution<double> pick(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LabeledBatch out{Tensor({n, dim_}), std::vector<std::size_t>(n)};
    std::size_t last_positive = 0;
    for (std::size_t k = 0; k < components_.size(); ++k) {
        if (components_[k].weight > 0.0) last_positive = k;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double u = pick(rng);
        std::size_t k = last_positive;
        double acc = 0.0;
        for (std::size_t c = 0; c < components_.size(); ++c) {
            acc += components_[c].weight;
            if (components_[c].weight > 0.0 && u < acc) {
                k = c;
                break;
            }
        }
        out.labels[i] = k;
        const auto& comp = components_[k];
        for (std::size_t d = 0; d < dim_; ++d) {
            out.points(i, d) = comp.mean[d] + std::sqrt(comp.variance[d]) * gauss(rng);
        }
    }
    return out;
}

SampleSet sample_mixture(const MixtureSpec& spec, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw UsageError("sample_mixture: n must be >= 1");
    Rng rng(seed);
    SampleSet set;
    set.points = spec.draw(n, rng).points;
    set.provenance = "mixture";
    set.seed = seed;
    set.item_shape = {spec.dim()};
    return set;
}

// ---- finite sets -------------------------------------------------------

FiniteSource::FiniteSource(Tensor points, std::vector<std::size_t> labels)
    : points_(std::move(points)), labels_(std::move(labels)) {
    if (points_.rows() == 0) throw UsageError("sample set is empty");
    if (!labels_.empty() && labels_.size() != points_.rows()) throw DimensionError("label count != sample count");
}

std::size_t FiniteSource::classes() const {
    if (labels_.empty()) return 0;
    return *std::max_element(labels_.begin(), labels_.end()) + 1;
}

LabeledBatch FiniteSource::draw_labeled(std::size_t n, Rng& rng) const {
    const std::size_t size = points_.rows();
    std::vector<std::size_t> idx(n);
    if (size >= n) {
        // Partial Fisher-Yates: n distinct rows.
        std::vector<std::size_t> perm(size);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            std::uniform_int_distribution<std::size_t> d(i, size - 1);
            std::swap(perm[i], perm[d(rng)]);
            idx[i] = perm[i];
        }
    } else {
        std::uniform_int_distribution<std::size_t> d(0, size - 1);
        for (auto& i : idx) i = d(rng);
    }
    LabeledBatch out;
    out.points = rows_of(points_, idx);
    if (!labels_.empty()) {
        out.labels.reserve(n);
        for (auto i : idx) out.labels.push_back(labels_[i]);
    }
    return out;
}

// ---- CSV ---------------------------------------------------------------

void save_csv(const Tensor& points, const std::filesystem::path& path, const std::vector<std::string>& header) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    const auto cols = points.cols();
    for (std::size_t c = 0; c < cols; ++c) {
        if (c) out << ',';
        out << (c < header.size() ? header[c] : "x" + std::to_string(c));
    }
    out << '\n';
    char buf[64];
    for (std::size_t r = 0; r < points.rows(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) out << ',';
            const auto res = std::to_chars(buf, buf + sizeof buf, points(r, c));
            out.write(buf, res.ptr - buf);
        }
        out << '\n';
    }
    if (!out) throw FormatError("write failed: " + path.string());
}

Tensor load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + ": empty CSV");
    const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    std::vector<double> values;
    std::size_t rows = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t count = 0;
        const char* p = line.data();
        const char* end = line.data() + line.size();
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            const auto res = std::from_chars(p, comma, v);
            if (res.ec != std::errc() || res.ptr != comma) {
                throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number");
            }
            values.push_back(v);
            ++count;
            p = comma + 1;
        }
        if (count != cols) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                              " columns, got " + std::to_string(count));
        }
        ++rows;
    }
    return Tensor({rows, cols}, std::move(values));
}

SampleSet load_samples(const std::filesystem::path& path, std::size_t n_if_spec, std::uint64_t seed) {
    const auto ext = path.extension().string();
    const auto fname = path.filename().string();
    if (ext == ".json") return sample_mixture(MixtureSpec::load(path), n_if_spec, seed);
    if (ext == ".idx" || fname.find("-ubyte") != std::string::npos) return load_idx(path);
    if (ext == ".csv") {
        SampleSet s;
        s.points = load_csv(path);
        s.provenance = "file";
        s.item_shape = {s.points.cols()};
        return s;
    }
    throw FormatError("unrecognised sample file type: " + path.string());
}

// ---- IDX ---------------------------------------------------------------

namespace {

constexpr std::uint8_t kIdxUnsignedByte = 0x08;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

} // namespace

SampleSet parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw FormatError("IDX: truncated header at byte offset " + std::to_string(bytes.size()) +
                          ": expected at least 4 bytes, got " + std::to_string(bytes.size()));
    }
    if (bytes[0] != 0 || bytes[1] != 0) throw FormatError("IDX: bad magic at byte offset 0");
    if (bytes[2] != kIdxUnsignedByte) {
        throw FormatError("IDX: unsupported dtype 0x" + std::to_string(bytes[2]) + " at byte offset 2");
    }
    const std::size_t ndims = bytes[3];
    if (ndims == 0) throw FormatError("IDX: zero dimensions at byte offset 3");
    const std::size_t header = 4 + 4 * ndims;
    if (bytes.size() < header) {
        throw FormatError("IDX: truncated dimension table at byte offset " + std::to_string(bytes.size()) +
                          ": expected " + std::to_string(header) + " bytes, got " + std::to_string(bytes.size()));
    }
    Shape dims;
    for (std::size_t i = 0; i < ndims; ++i) dims.push_back(read_be32(bytes, 4 + 4 * i));
    const std::size_t payload = element_count(dims);
    const std::size_t expected = header + payload;
    if (bytes.size() != expected) {
        throw FormatError("IDX: length mismatch at byte offset " + std::to_string(std::min(bytes.size(), expected)) +
                          ": expected " + std::to_string(expected) + " bytes, got " + std::to_string(bytes.size()));
    }
    const std::size_t n = dims[0];
    const std::size_t d = n == 0 ? 0 : payload / n;
    SampleSet set;
    set.points = Tensor({n, d});
    for (std::size_t i = 0; i < payload; ++i) set.points[i] = static_cast<double>(bytes[header + i]) / 127.5 - 1.0;
    set.item_shape.assign(dims.begin() + 1, dims.end());
    if (set.item_shape.empty()) set.item_shape = {1};
    set.provenance = "idx";
    return set;
}

SampleSet load_idx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_idx(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_idx(const SampleSet& set) {
    Shape item = set.item_shape.empty() ? Shape{set.dim()} : set.item_shape;
    if (element_count(item) != set.dim()) throw DimensionError("IDX: item shape does not match feature count");
    std::vector<std::uint8_t> out{0, 0, kIdxUnsignedByte, static_cast<std::uint8_t>(1 + item.size())};
    write_be32(out, static_cast<std::uint32_t>(set.size()));
    for (auto d : item) write_be32(out, static_cast<std::uint32_t>(d));
    for (double v : set.points.values()) {
        if (!(v >= -1.0 && v <= 1.0)) throw FormatError("IDX: value outside [-1, 1] cannot be stored as a pixel");
        out.push_back(static_cast<std::uint8_t>(std::lround((v + 1.0) * 127.5)));
    }
    return out;
}

void save_idx(const SampleSet& set, const std::filesystem::path& path) {
    const auto bytes = encode_idx(set);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed: " + path.string());
}

} // namespace minegan
