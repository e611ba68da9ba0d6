#include "minegan/checkpoint.hpp"

#include "minegan/errors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace minegan {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string_view checkpoint_kind_name(CheckpointKind kind) {
    switch (kind) {
    case CheckpointKind::gan: return "gan";
    case CheckpointKind::miner: return "miner";
    case CheckpointKind::family: return "family";
    case CheckpointKind::conditional: return "conditional";
    case CheckpointKind::classifier: return "classifier";
    }
    return "?";
}

void Checkpoint::put(std::string name, Tensor value) {
    for (auto& [n, t] : tensors) {
        if (n == name) {
            t = std::move(value);
            return;
        }
    }
    tensors.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::has(std::string_view name) const noexcept {
    return std::any_of(tensors.begin(), tensors.end(), [&](const auto& p) { return p.first == name; });
}

const Tensor& Checkpoint::get(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw FormatError("checkpoint has no tensor '" + std::string(name) + "'");
}

namespace {

constexpr char kMagic[4] = {'M', 'G', 'C', 'K'};

template <class T>
void put_raw(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof v);
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t pos() const noexcept { return pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError("checkpoint truncated at byte offset " + std::to_string(pos_) + " reading " + what +
                              ": need " + std::to_string(n) + " bytes, " + std::to_string(bytes_.size() - pos_) +
                              " left");
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::uint8_t> out;
    out.push_back(Checkpoint::kVersion);
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    out.push_back(static_cast<std::uint8_t>(ckpt.kind));
    put_raw(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_raw(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        if (t.rank() > 255) throw FormatError("tensor rank too large for checkpoint");
        out.push_back(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) put_raw(out, static_cast<std::uint64_t>(d));
        const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
        out.insert(out.end(), p, p + t.size() * sizeof(double));
    }
    const auto meta = ckpt.metadata.dump();
    put_raw(out, static_cast<std::uint64_t>(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());
    put_raw(out, fnv1a(out));
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto version = r.get<std::uint8_t>("version");
    if (version != Checkpoint::kVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                          std::to_string(Checkpoint::kVersion) + ")");
    }
    const auto magic = r.take(4, "magic");
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) throw FormatError("bad checkpoint magic at byte offset 1");
    Checkpoint ckpt;
    const auto kind = r.get<std::uint8_t>("kind");
    if (kind < 1 || kind > 5) throw FormatError("unknown checkpoint kind " + std::to_string(kind) + " at byte offset 5");
    ckpt.kind = static_cast<CheckpointKind>(kind);
    const auto count = r.get<std::uint32_t>("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.get<std::uint32_t>("name length");
        const auto name = r.take(len, "name");
        const auto rank = r.get<std::uint8_t>("rank");
        Shape shape;
        for (std::uint8_t a = 0; a < rank; ++a) shape.push_back(static_cast<std::size_t>(r.get<std::uint64_t>("dims")));
        const auto n = element_count(shape);
        if (n > bytes.size() / sizeof(double)) {
            throw FormatError("checkpoint tensor size exceeds file at byte offset " + std::to_string(r.pos()));
        }
        const auto raw = r.take(n * sizeof(double), "values");
        std::vector<double> values(n);
        std::memcpy(values.data(), raw.data(), raw.size());
        ckpt.tensors.emplace_back(std::string(name.begin(), name.end()), Tensor(std::move(shape), std::move(values)));
    }
    const auto meta_len = r.get<std::uint64_t>("metadata length");
    if (meta_len > bytes.size()) throw FormatError("checkpoint metadata length exceeds file at byte offset " + std::to_string(r.pos()));
    const auto meta = r.take(static_cast<std::size_t>(meta_len), "metadata");
    const auto body = r.pos();
    const auto stored = r.get<std::uint64_t>("hash");
    if (r.pos() != bytes.size()) {
        throw FormatError("checkpoint has " + std::to_string(bytes.size() - r.pos()) + " trailing bytes at byte offset " +
                          std::to_string(r.pos()));
    }
    if (fnv1a(bytes.first(body)) != stored) throw IntegrityError("checkpoint hash mismatch: content is corrupted");
    try {
        ckpt.metadata = nlohmann::ordered_json::parse(meta.begin(), meta.end());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata: ") + e.what());
    }
    return ckpt;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw FormatError("cannot rename " + tmp.string() + ": " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const IntegrityError& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void put_network(Checkpoint& ckpt, const std::string& prefix, const DenseNetwork& net) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& l = net.layer(i);
        ckpt.put(prefix + ".w" + std::to_string(i), l.weight);
        ckpt.put(prefix + ".b" + std::to_string(i), l.bias);
        layers.push_back({{"activation", activation_name(l.activation)}, {"frozen", l.frozen}});
    }
    ckpt.metadata["networks"][prefix] = layers;
}

DenseNetwork get_network(const Checkpoint& ckpt, const std::string& prefix) {
    const auto nets = ckpt.metadata.find("networks");
    if (nets == ckpt.metadata.end() || !nets->contains(prefix)) {
        throw FormatError("checkpoint has no network '" + prefix + "'");
    }
    std::vector<Layer> layers;
    const auto& desc = (*nets)[prefix];
    for (std::size_t i = 0; i < desc.size(); ++i) {
        Layer l;
        l.weight = ckpt.get(prefix + ".w" + std::to_string(i));
        l.bias = ckpt.get(prefix + ".b" + std::to_string(i));
        const auto act = parse_activation(desc[i].at("activation").get<std::string>());
        if (!act) throw FormatError("checkpoint network '" + prefix + "': unknown activation");
        l.activation = *act;
        l.frozen = desc[i].at("frozen").get<bool>();
        layers.push_back(std::move(l));
    }
    try {
        return DenseNetwork(std::move(layers));
    } catch (const DimensionError& e) {
        throw FormatError("checkpoint network '" + prefix + "': " + e.what());
    }
}

} // namespace minegan
