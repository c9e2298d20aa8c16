#include "slide/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace slide {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'L', 'D', 'E'};

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    }

    void u8(std::uint8_t v) { bytes(&v, 1); }
    void u32(std::uint32_t v) { little(v); }
    void u64(std::uint64_t v) { little(v); }
    void f32(Real v) { little(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void f32s(std::span<const Real> values) {
        for (Real v : values) f32(v);
    }
    void raw(const char* data, std::size_t n) { out_.write(data, static_cast<std::streamsize>(n)); }

    void finish() {
        out_.flush();
        if (!out_) throw CheckpointError("checkpoint write failed");
    }

private:
    template <typename T>
    void little(T v) {
        std::array<unsigned char, sizeof(T)> buf;
        for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(buf.data(), buf.size());
    }
    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    }

    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
        if (!in_) throw CheckpointError("cannot open checkpoint: " + path.string());
    }

    std::uint8_t u8() {
        unsigned char v;
        bytes(&v, 1);
        return v;
    }
    std::uint32_t u32() { return little<std::uint32_t>(); }
    std::uint64_t u64() { return little<std::uint64_t>(); }
    Real f32() { return static_cast<Real>(std::bit_cast<float>(little<std::uint32_t>())); }
    void f32s(std::span<Real> values) {
        for (Real& v : values) v = f32();
    }
    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) throw CheckpointError("checkpoint truncated");
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    template <typename T>
    T little() {
        std::array<unsigned char, sizeof(T)> buf;
        bytes(buf.data(), buf.size());
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
        return v;
    }

    std::ifstream in_;
};

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path, bool include_adam) {
    Writer w(path);
    w.raw(kMagic.data(), kMagic.size());
    w.u32(kCheckpointVersion);
    w.u32(net.num_layers());
    w.u32(net.input_dim());
    for (std::uint32_t l = 0; l < net.num_layers(); ++l) {
        const Layer& layer = net.layer(l);
        w.u32(layer.width());
        w.u32(layer.in_dim());
        w.u8(static_cast<std::uint8_t>(layer.activation()));
        w.f32s(layer.weights());
        w.f32s(layer.bias());
        w.u8(include_adam ? 1 : 0);
        if (!include_adam) continue;
        w.f32s(layer.adam_m());
        w.f32s(layer.adam_v());
        w.f32s(layer.adam_m_bias());
        w.f32s(layer.adam_v_bias());
        for (std::uint64_t s : layer.adam_steps()) w.u64(s);
    }
    w.finish();
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
    Reader r(path);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) throw CheckpointError("not a checkpoint file (bad magic): " + path.string());
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t layers = r.u32();
    const std::uint32_t input_dim = r.u32();
    if (layers != net.num_layers() || input_dim != net.input_dim()) {
        throw CheckpointError("checkpoint shape does not match the network");
    }
    for (std::uint32_t l = 0; l < layers; ++l) {
        Layer& layer = net.layer(l);
        const std::uint32_t width = r.u32();
        const std::uint32_t in_dim = r.u32();
        const std::uint8_t activation = r.u8();
        if (width != layer.width() || in_dim != layer.in_dim() ||
            activation != static_cast<std::uint8_t>(layer.activation())) {
            throw CheckpointError("checkpoint layer " + std::to_string(l) + " does not match the network");
        }
        r.f32s(layer.weights());
        r.f32s(layer.bias());
        const std::uint8_t has_adam = r.u8();
        if (has_adam > 1) throw CheckpointError("corrupt Adam flag in layer " + std::to_string(l));
        if (has_adam == 1) {
            r.f32s(layer.adam_m());
            r.f32s(layer.adam_v());
            r.f32s(layer.adam_m_bias());
            r.f32s(layer.adam_v_bias());
            for (std::uint64_t& s : layer.adam_steps()) s = r.u64();
        } else {
            std::ranges::fill(layer.adam_m(), Real{0});
            std::ranges::fill(layer.adam_v(), Real{0});
            std::ranges::fill(layer.adam_m_bias(), Real{0});
            std::ranges::fill(layer.adam_v_bias(), Real{0});
            std::ranges::fill(layer.adam_steps(), std::uint64_t{0});
        }
    }
    if (!r.at_end()) throw CheckpointError("trailing bytes after checkpoint payload");
    net.rebuild_all_tables();
}

}  // namespace slide
