#include "wbanet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "wbanet/error.hpp"

namespace wbanet {

namespace {

class Writer {
public:
    template <typename T>
    void put(T value) {
        std::uint64_t bits = 0;
        if constexpr (std::is_floating_point_v<T>) {
            bits = std::bit_cast<std::uint64_t>(static_cast<double>(value));
        } else {
            bits = static_cast<std::uint64_t>(value);
        }
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
    void bytes(const std::string& s) { out_ += s; }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>) {
            return std::bit_cast<double>(bits);
        } else {
            return static_cast<T>(bits);
        }
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const {
        if (in_.size() - pos_ < n) throw FormatError("checkpoint truncated", pos_);
    }
    const std::string& in_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelConfig& cfg, const ModelParams& params) {
    Writer w;
    w.bytes("WBAN");
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.patch_size));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.embed_dim));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.n_heads));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.n_blocks));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.epochs));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.batch_size));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.n_per_class));
    w.put<double>(cfg.lr);
    w.put<std::uint64_t>(cfg.seed);
    const auto named = params.named();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(named.size()));
    for (const auto& [name, t] : named) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (auto e : t.shape()) w.put<std::uint64_t>(static_cast<std::uint64_t>(e));
        for (double v : t.data()) w.put<double>(v);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    if (r.bytes(4) != "WBAN") throw FormatError("bad checkpoint magic", 0);
    const auto version_at = r.pos();
    if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError("unsupported checkpoint version", version_at);

    Checkpoint ck;
    auto& c = ck.config;
    c.patch_size = r.get<std::uint32_t>();
    c.embed_dim = r.get<std::uint32_t>();
    c.n_heads = r.get<std::uint32_t>();
    c.n_blocks = r.get<std::uint32_t>();
    c.epochs = r.get<std::uint32_t>();
    c.batch_size = r.get<std::uint32_t>();
    c.n_per_class = r.get<std::uint32_t>();
    c.lr = r.get<double>();
    c.seed = r.get<std::uint64_t>();
    const auto config_end = r.pos();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid checkpoint config: ") + e.what(), config_end);
    }

    // The config fixes the architecture; tensors are matched to it by name.
    ck.params = ModelParams::init(c);
    std::map<std::string, Tensor> slots;
    for (auto& [name, t] : ck.params.named()) slots.emplace(name, t);

    const auto count = r.get<std::uint32_t>();
    if (count != slots.size()) throw FormatError("checkpoint tensor count does not match config", r.pos() - 4);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto at = r.pos();
        const auto len = r.get<std::uint32_t>();
        const std::string name = r.bytes(len);
        const auto it = slots.find(name);
        if (it == slots.end()) throw FormatError("unknown tensor '" + name + "'", at);
        const auto rank = r.get<std::uint32_t>();
        Shape shape;
        for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(static_cast<std::int64_t>(r.get<std::uint64_t>()));
        if (shape != it->second.shape()) throw FormatError("tensor '" + name + "' has wrong shape", at);
        auto dst = it->second.mutable_data();
        for (auto& v : dst) v = r.get<double>();
        slots.erase(it);
    }
    if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open " + path.string() + " for writing");
    const std::string bytes = encode_checkpoint(cfg, params);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace wbanet
