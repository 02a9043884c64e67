#include "trajforge/formats.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <set>

#include <fmt/format.h>

#include "trajforge/error.hpp"

namespace trajforge {

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(fmt::format("cannot open {}", path.string()));
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Reads one whitespace-delimited PNM header token, skipping '#' comments.
std::string pnm_token(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        if (bytes[pos] == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(bytes[pos])) {
            ++pos;
        } else {
            break;
        }
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw InputError("PGM: truncated header");
    return tok;
}

std::size_t pnm_number(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    const std::string tok = pnm_token(bytes, pos);
    std::size_t value = 0;
    for (char ch : tok) {
        if (!std::isdigit(static_cast<unsigned char>(ch))) throw InputError(fmt::format("PGM: bad header field '{}'", tok));
        value = value * 10 + static_cast<std::size_t>(ch - '0');
        if (value > (1u << 20)) throw InputError("PGM: header value too large");
    }
    return value;
}

// Field-error collecting helpers for layout parsing.
struct Ctx {
    std::vector<FieldError>& errors;

    void fail(std::string field, std::string message) { errors.push_back({std::move(field), std::move(message)}); }

    const json* member(const json& obj, const std::string& base, const char* key, json::value_t want) {
        const std::string field = base + "/" + key;
        if (!obj.is_object() || !obj.contains(key)) {
            fail(field, "missing");
            return nullptr;
        }
        const json& v = obj.at(key);
        const bool ok = want == json::value_t::number_float ? v.is_number()
                        : want == json::value_t::number_unsigned ? v.is_number_integer() && v.get<long long>() >= 0
                                                                  : v.type() == want;
        if (!ok) {
            fail(field, fmt::format("expected {}", want == json::value_t::number_float      ? "number"
                                                    : want == json::value_t::number_unsigned ? "non-negative integer"
                                                    : want == json::value_t::string          ? "string"
                                                    : want == json::value_t::array           ? "array"
                                                                                              : "object"));
            return nullptr;
        }
        return &v;
    }
};

std::optional<Vec2> parse_pair(Ctx& ctx, const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        ctx.fail(field, "expected [number, number]");
        return std::nullopt;
    }
    return Vec2{j[0].get<double>(), j[1].get<double>()};
}

std::optional<Trajectory> parse_trajectory(Ctx& ctx, const json& j, const std::string& base) {
    const std::size_t before = ctx.errors.size();
    double fps = 16.0;
    if (const json* f = ctx.member(j, base, "fps", json::value_t::number_float)) {
        fps = f->get<double>();
        if (!(fps > 0.0)) ctx.fail(base + "/fps", "must be positive");
    }
    std::vector<TrajectoryAnchor> anchors;
    if (const json* arr = ctx.member(j, base, "anchors", json::value_t::array)) {
        if (arr->empty()) ctx.fail(base + "/anchors", "must contain at least one anchor");
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const std::string ab = fmt::format("{}/anchors/{}", base, i);
            const json& a = (*arr)[i];
            TrajectoryAnchor anchor;
            if (const json* p = ctx.member(a, ab, "p", json::value_t::array)) {
                if (auto v = parse_pair(ctx, *p, ab + "/p")) {
                    anchor.p = *v;
                    if (!(v->x >= 0.0 && v->x <= 1.0 && v->y >= 0.0 && v->y <= 1.0)) ctx.fail(ab + "/p", "must lie in [0,1]^2");
                }
            }
            if (const json* s = ctx.member(a, ab, "s", json::value_t::array)) {
                if (auto v = parse_pair(ctx, *s, ab + "/s")) {
                    anchor.s = *v;
                    const double lo = kMinScale * (1.0 - 1e-12);
                    if (!(v->x >= lo && v->x <= 1.0 && v->y >= lo && v->y <= 1.0)) {
                        ctx.fail(ab + "/s", fmt::format("must lie in [{}, 1]^2", kMinScale));
                    }
                }
            }
            if (a.is_object() && a.contains("v")) {
                const json& v = a.at("v");
                if (v.is_boolean()) {
                    anchor.visible = v.get<bool>();
                } else if (v.is_number_integer() && (v.get<long long>() == 0 || v.get<long long>() == 1)) {
                    anchor.visible = v.get<long long>() == 1;
                } else {
                    ctx.fail(ab + "/v", "expected 0 or 1");
                }
            } else {
                ctx.fail(ab + "/v", "missing");
            }
            anchors.push_back(anchor);
        }
    }
    if (ctx.errors.size() != before) return std::nullopt;
    return Trajectory(std::move(anchors), fps);
}

[[noreturn]] void throw_field_errors(const char* what, const std::vector<FieldError>& errors) {
    std::string msg = fmt::format("invalid {}:", what);
    for (const auto& e : errors) msg += fmt::format(" {} {};", e.field.empty() ? "/" : e.field, e.message);
    throw InputError(msg);
}

}  // namespace

ObjectMask decode_pgm(std::span<const std::uint8_t> bytes, std::size_t frame) {
    std::size_t pos = 0;
    if (pnm_token(bytes, pos) != "P5") throw InputError("PGM: only binary P5 is supported");
    const std::size_t w = pnm_number(bytes, pos);
    const std::size_t h = pnm_number(bytes, pos);
    const std::size_t maxval = pnm_number(bytes, pos);
    if (w == 0 || h == 0) throw InputError("PGM: zero dimension");
    if (maxval != 255) throw InputError(fmt::format("PGM: maxval must be 255, got {}", maxval));
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw InputError("PGM: missing header terminator");
    ++pos;
    if (bytes.size() - pos < w * h) throw InputError("PGM: truncated pixel data");
    ObjectMask mask(w, h, frame);
    for (std::size_t i = 0; i < w * h; ++i) mask.pixels[i] = bytes[pos + i] > 127 ? 1 : 0;
    return mask;
}

std::vector<std::uint8_t> encode_pgm(const ObjectMask& mask) {
    const std::string header = fmt::format("P5\n{} {}\n255\n", mask.width, mask.height);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + mask.pixels.size());
    for (std::uint8_t v : mask.pixels) out.push_back(v ? 255 : 0);
    return out;
}

ObjectMask read_pgm(const std::filesystem::path& path, std::size_t frame) {
    const auto bytes = slurp(path);
    try {
        return decode_pgm(bytes, frame);
    } catch (const InputError& e) {
        throw InputError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_pgm(const std::filesystem::path& path, const ObjectMask& mask) {
    const auto bytes = encode_pgm(mask);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(fmt::format("cannot open {} for writing", path.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PointTracks tracks_from_json(const json& j) {
    try {
        PointTracks pt;
        pt.width = j.at("width").get<std::size_t>();
        pt.height = j.at("height").get<std::size_t>();
        pt.t_ref = j.at("t_ref").get<std::size_t>();
        pt.fps = j.value("fps", 16.0);
        for (const auto& tj : j.at("tracks")) {
            PointTracks::Track tr;
            for (const auto& xy : tj.at("xy")) {
                if (!xy.is_array() || xy.size() != 2) throw InputError("track positions must be [x, y] pairs");
                tr.xy.push_back({xy[0].get<double>(), xy[1].get<double>()});
            }
            tr.conf = tj.at("conf").get<std::vector<double>>();
            pt.tracks.push_back(std::move(tr));
        }
        pt.validate();
        return pt;
    } catch (const json::exception& e) {
        throw InputError(fmt::format("track file: {}", e.what()));
    } catch (const DomainError& e) {
        throw InputError(fmt::format("track file: {}", e.what()));
    }
}

json tracks_to_json(const PointTracks& tracks) {
    json arr = json::array();
    for (const auto& tr : tracks.tracks) {
        json xy = json::array();
        for (const auto& p : tr.xy) xy.push_back({p.x, p.y});
        arr.push_back({{"xy", std::move(xy)}, {"conf", tr.conf}});
    }
    return {{"width", tracks.width}, {"height", tracks.height}, {"t_ref", tracks.t_ref}, {"fps", tracks.fps}, {"tracks", std::move(arr)}};
}

Trajectory trajectory_from_json(const json& j) {
    std::vector<FieldError> errors;
    Ctx ctx{errors};
    auto traj = parse_trajectory(ctx, j, "");
    if (!traj) throw_field_errors("trajectory", errors);
    return *traj;
}

json trajectory_to_json(const Trajectory& traj) {
    json anchors = json::array();
    for (const auto& a : traj.anchors()) {
        anchors.push_back({{"p", {a.p.x, a.p.y}}, {"s", {a.s.x, a.s.y}}, {"v", a.visible ? 1 : 0}});
    }
    return {{"fps", traj.fps()}, {"anchors", std::move(anchors)}};
}

std::optional<CompositionLayout> parse_layout(const json& j, std::vector<FieldError>& errors) {
    Ctx ctx{errors};
    const std::size_t before = errors.size();
    if (!j.is_object()) {
        ctx.fail("", "layout must be a JSON object");
        return std::nullopt;
    }
    CompositionLayout layout;
    if (const json* c = ctx.member(j, "", "canvas", json::value_t::object)) {
        std::size_t* dims[3] = {&layout.canvas.frames, &layout.canvas.height, &layout.canvas.width};
        const char* keys[3] = {"t", "h", "w"};
        for (int i = 0; i < 3; ++i) {
            if (const json* v = ctx.member(*c, "/canvas", keys[i], json::value_t::number_unsigned)) {
                *dims[i] = v->get<std::size_t>();
                if (*dims[i] == 0) ctx.fail(fmt::format("/canvas/{}", keys[i]), "must be >= 1");
            }
        }
    }
    if (j.contains("caption")) {
        if (j["caption"].is_string()) {
            layout.caption = j["caption"].get<std::string>();
        } else {
            ctx.fail("/caption", "expected string");
        }
    }
    std::set<std::string> seen;
    if (const json* arr = ctx.member(j, "", "entries", json::value_t::array)) {
        for (std::size_t i = 0; i < arr->size(); ++i) {
            const json& e = (*arr)[i];
            const std::string base = fmt::format("/entries/{}", i);
            const std::size_t entry_before = errors.size();
            std::string id;
            if (const json* v = ctx.member(e, base, "id", json::value_t::string)) {
                id = v->get<std::string>();
                if (id.empty()) {
                    ctx.fail(base + "/id", "must be non-empty");
                } else if (!seen.insert(id).second) {
                    ctx.fail(base + "/id", fmt::format("duplicate id '{}'", id));
                }
            }
            Modality modality = Modality::image;
            if (const json* v = ctx.member(e, base, "modality", json::value_t::string)) {
                if (auto m = parse_modality(v->get<std::string>())) {
                    modality = *m;
                } else {
                    ctx.fail(base + "/modality", "expected \"image\" or \"video\"");
                }
            }
            Priority priority = Priority::none;
            if (e.is_object() && e.contains("priority")) {
                const json& v = e["priority"];
                auto p = v.is_string() ? parse_priority(v.get<std::string>()) : std::nullopt;
                if (p) {
                    priority = *p;
                } else {
                    ctx.fail(base + "/priority", "expected \"none\", \"foreground\" or \"background\"");
                }
            }
            std::string ref_file;
            if (e.is_object() && e.contains("ref_file")) {
                if (e["ref_file"].is_string()) {
                    ref_file = e["ref_file"].get<std::string>();
                } else {
                    ctx.fail(base + "/ref_file", "expected string");
                }
            }
            std::optional<Trajectory> traj;
            if (const json* t = ctx.member(e, base, "trajectory", json::value_t::object)) {
                traj = parse_trajectory(ctx, *t, base + "/trajectory");
            }
            if (errors.size() == entry_before && traj) {
                layout.entries.push_back(LayoutEntry{id, modality, std::move(*traj), priority, ref_file});
            }
        }
    }
    if (errors.size() != before) return std::nullopt;
    return layout;
}

CompositionLayout layout_from_json(const json& j) {
    std::vector<FieldError> errors;
    auto layout = parse_layout(j, errors);
    if (!layout) throw_field_errors("layout", errors);
    return *layout;
}

json layout_to_json(const CompositionLayout& layout) {
    json entries = json::array();
    for (const auto& e : layout.entries) {
        entries.push_back({{"id", e.reference_id},
                           {"modality", std::string(to_string(e.modality))},
                           {"priority", std::string(to_string(e.priority))},
                           {"trajectory", trajectory_to_json(e.trajectory)},
                           {"ref_file", e.ref_file}});
    }
    return {{"canvas", {{"t", layout.canvas.frames}, {"h", layout.canvas.height}, {"w", layout.canvas.width}}},
            {"entries", std::move(entries)},
            {"caption", layout.caption}};
}

json read_json_file(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::parse_error& e) {
        throw InputError(fmt::format("{}: {}", path.string(), e.what()));
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(fmt::format("cannot open {} for writing", path.string()));
    out << j.dump(2) << '\n';
}

}  // namespace trajforge
