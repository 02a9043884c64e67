#include "trajforge/flowmatch/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <fmt/format.h>

#include "trajforge/error.hpp"
#include "trajforge/htf.hpp"

namespace trajforge::fm {

namespace tar {

namespace {

constexpr std::size_t kBlock = 512;

void put_octal(std::uint8_t* field, std::size_t width, std::uint64_t value) {
    const std::string s = fmt::format("{:0{}o}", value, width - 1);
    if (s.size() > width - 1) throw DomainError("tar: value does not fit its header field");
    std::memcpy(field, s.data(), s.size());
    field[width - 1] = 0;
}

std::uint64_t get_octal(const std::uint8_t* field, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width && field[i] != 0 && field[i] != ' '; ++i) {
        if (field[i] < '0' || field[i] > '7') throw InputError("tar: malformed octal field");
        v = v * 8 + (field[i] - '0');
    }
    return v;
}

std::uint32_t header_checksum(const std::uint8_t* h) {
    std::uint32_t sum = 0;
    for (std::size_t i = 0; i < kBlock; ++i) sum += (i >= 148 && i < 156) ? ' ' : h[i];
    return sum;
}

}  // namespace

std::vector<std::uint8_t> write(const std::vector<Member>& members) {
    std::vector<std::uint8_t> out;
    for (const auto& m : members) {
        if (m.name.empty() || m.name.size() > 99) throw DomainError(fmt::format("tar: member name '{}' must be 1-99 bytes", m.name));
        std::uint8_t h[kBlock] = {};
        std::memcpy(h, m.name.data(), m.name.size());
        put_octal(h + 100, 8, 0644);
        put_octal(h + 108, 8, 0);
        put_octal(h + 116, 8, 0);
        put_octal(h + 124, 12, m.bytes.size());
        put_octal(h + 136, 12, 0);
        h[156] = '0';
        std::memcpy(h + 257, "ustar", 6);
        std::memcpy(h + 263, "00", 2);
        const std::string sum = fmt::format("{:06o}", header_checksum(h));
        std::memcpy(h + 148, sum.data(), 6);
        h[154] = 0;
        h[155] = ' ';
        out.insert(out.end(), h, h + kBlock);
        out.insert(out.end(), m.bytes.begin(), m.bytes.end());
        out.resize(out.size() + (kBlock - m.bytes.size() % kBlock) % kBlock, 0);
    }
    out.resize(out.size() + 2 * kBlock, 0);
    return out;
}

std::vector<Member> read(std::span<const std::uint8_t> archive) {
    std::vector<Member> out;
    std::size_t pos = 0;
    while (pos + kBlock <= archive.size()) {
        const std::uint8_t* h = archive.data() + pos;
        if (std::all_of(h, h + kBlock, [](std::uint8_t b) { return b == 0; })) return out;
        if (get_octal(h + 148, 8) != header_checksum(h)) throw InputError(fmt::format("tar: bad header checksum at offset {}", pos));
        const std::size_t size = get_octal(h + 124, 12);
        pos += kBlock;
        if (pos + size > archive.size()) throw InputError("tar: member extends past the end of the archive");
        const char type = static_cast<char>(h[156]);
        if (type == '0' || type == '\0') {
            Member m;
            m.name.assign(reinterpret_cast<const char*>(h), strnlen(reinterpret_cast<const char*>(h), 100));
            const auto prefix_len = strnlen(reinterpret_cast<const char*>(h + 345), 155);
            if (prefix_len) m.name = std::string(reinterpret_cast<const char*>(h + 345), prefix_len) + "/" + m.name;
            m.bytes.assign(archive.begin() + static_cast<std::ptrdiff_t>(pos), archive.begin() + static_cast<std::ptrdiff_t>(pos + size));
            out.push_back(std::move(m));
        }
        pos += (size + kBlock - 1) / kBlock * kBlock;
    }
    throw InputError("tar: archive is truncated (missing end-of-archive blocks)");
}

}  // namespace tar

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json manifest = {{"format", "trajforge-checkpoint"},
                               {"version", 1},
                               {"model", to_json(ckpt.model)},
                               {"train", ckpt.train_config},
                               {"step", ckpt.step},
                               {"params", nlohmann::json::array()}};
    std::vector<tar::Member> members(1);
    for (const auto& [name, m] : ckpt.params.named()) {
        const Shape shape{static_cast<std::size_t>(m->rows()), static_cast<std::size_t>(m->cols())};
        manifest["params"].push_back({{"name", name}, {"shape", shape}});
        members.push_back({"params/" + name + ".htf",
                           htf::encode(Tensor(shape, std::vector<float>(m->data(), m->data() + m->size())))});
    }
    const std::string text = manifest.dump(2) + "\n";
    members[0] = {"manifest.json", std::vector<std::uint8_t>(text.begin(), text.end())};
    return tar::write(members);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> archive) {
    const auto members = tar::read(archive);
    std::map<std::string, const tar::Member*> by_name;
    for (const auto& m : members) by_name[m.name] = &m;
    const auto it = by_name.find("manifest.json");
    if (it == by_name.end()) throw InputError("checkpoint: manifest.json missing");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(it->second->bytes.begin(), it->second->bytes.end());
    } catch (const nlohmann::json::exception& e) {
        throw InputError(fmt::format("checkpoint manifest: {}", e.what()));
    }
    if (manifest.value("format", "") != "trajforge-checkpoint") throw InputError("checkpoint: unknown archive format");

    Checkpoint ckpt;
    ckpt.model = denoiser_config_from_json(manifest.at("model"));
    ckpt.train_config = manifest.value("train", nlohmann::json::object());
    ckpt.step = manifest.value("step", std::size_t{0});
    ckpt.params = MicroDenoiser<float>(ckpt.model, 0).params();
    for (auto& [name, m] : ckpt.params.named()) {
        const auto member = by_name.find("params/" + name + ".htf");
        if (member == by_name.end()) throw InputError(fmt::format("checkpoint: parameter {} missing", name));
        const Tensor t = htf::decode(member->second->bytes);
        if (t.rank() != 2 || t.extent(0) != static_cast<std::size_t>(m->rows()) || t.extent(1) != static_cast<std::size_t>(m->cols())) {
            throw InputError(fmt::format("checkpoint: parameter {} has shape {}, expected [{}, {}]", name, to_string(t.shape()),
                                         m->rows(), m->cols()));
        }
        std::copy(t.data().begin(), t.data().end(), m->data());
    }
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = encode_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError(fmt::format("cannot write checkpoint {}", path.string()));
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError(fmt::format("failed writing checkpoint {}", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError(fmt::format("cannot open checkpoint {}", path.string()));
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace trajforge::fm
