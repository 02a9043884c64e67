#include "trajforge/htf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge::htf {

namespace {

constexpr char kMagic[4] = {'H', 'T', 'F', '1'};
constexpr std::uint32_t kMaxRank = 16;

template <class T>
void put_le(std::vector<std::uint8_t>& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<std::uint8_t>((value >> (8 * i)) & 0xFF));
    }
}

template <class T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    if (pos + sizeof(T) > bytes.size()) throw InputError("HTF: truncated header");
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(bytes[pos + i]) << (8 * i);
    }
    pos += sizeof(T);
    return value;
}

}  // namespace

std::vector<std::uint8_t> encode(const Tensor& t) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + 8 * t.rank() + 4 * t.numel());
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
    for (float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw InputError("HTF: bad magic");
    }
    std::size_t pos = 4;
    const auto rank = get_le<std::uint32_t>(bytes, pos);
    if (rank == 0 || rank > kMaxRank) throw InputError(fmt::format("HTF: unsupported rank {}", rank));
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& e : shape) {
        const auto extent = get_le<std::uint64_t>(bytes, pos);
        if (extent == 0 || extent > (std::uint64_t{1} << 32)) throw InputError("HTF: invalid extent");
        e = static_cast<std::size_t>(extent);
        count *= e;
        if (count > (std::size_t{1} << 34)) throw InputError("HTF: tensor too large");
    }
    if (bytes.size() - pos != count * 4) {
        throw InputError(fmt::format("HTF: expected {} payload bytes, found {}", count * 4, bytes.size() - pos));
    }
    std::vector<float> data(count);
    for (auto& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
    try {
        return Tensor(std::move(shape), std::move(data));
    } catch (const DomainError& e) {
        throw InputError(fmt::format("HTF: {}", e.what()));
    }
}

void write_file(const std::filesystem::path& path, const Tensor& t) {
    const auto bytes = encode(t);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(fmt::format("cannot open {} for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError(fmt::format("failed writing {}", path.string()));
}

Tensor read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode(bytes);
    } catch (const InputError& e) {
        throw InputError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

}  // namespace trajforge::htf
