#include "fairlink/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "fairlink/errors.hpp"

namespace fairlink {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[5] = {'F', 'L', 'N', 'K', '1'};

template <class T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError(path.string() + ": truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (ckpt.tag.size() > 255) throw ValidationError("checkpoint tag too long");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(ckpt.tag.size()));
    out.write(ckpt.tag.data(), static_cast<std::streamsize>(ckpt.tag.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        put<std::uint64_t>(out, t.rows());
        put<std::uint64_t>(out, t.cols());
    }
    for (const auto& t : ckpt.tensors) {
        out.write(reinterpret_cast<const char*>(t.values().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw RuntimeFailure("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    char magic[5];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw ParseError(path.string() + ": missing FLNK1 header");
    }
    Checkpoint ckpt;
    const auto tag_len = get<std::uint8_t>(in, path);
    ckpt.tag.resize(tag_len);
    if (!in.read(ckpt.tag.data(), tag_len)) throw ParseError(path.string() + ": truncated checkpoint");
    const auto count = get<std::uint32_t>(in, path);
    std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes;
    for (std::uint32_t k = 0; k < count; ++k) {
        const auto r = get<std::uint64_t>(in, path);
        const auto c = get<std::uint64_t>(in, path);
        shapes.emplace_back(r, c);
    }
    for (const auto& [r, c] : shapes) {
        std::vector<double> data(r * c);
        if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)))) {
            throw ParseError(path.string() + ": truncated checkpoint");
        }
        ckpt.tensors.emplace_back(r, c, std::move(data));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ParseError(path.string() + ": trailing bytes in checkpoint");
    return ckpt;
}

}  // namespace fairlink
