#include "trajforge/service.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

#include "trajforge/error.hpp"
#include "trajforge/formats.hpp"

namespace trajforge::service {

namespace {

using nlohmann::json;

struct Parsed {
    std::optional<CompositionLayout> layout;
    std::optional<Response> failure;
};

Response fail(int status, std::string_view code, std::string_view message, const json& fields = nullptr) {
    return {status, error_body(code, message, fields)};
}

// Canvas extents are checked before full parsing so huge canvases never reach the
// mask code, even when other fields are broken too.
bool oversized(const json& j) {
    if (!j.is_object() || !j.contains("canvas") || !j["canvas"].is_object()) return false;
    const auto& c = j["canvas"];
    double cells = 1.0;
    for (const char* k : {"t", "h", "w"}) {
        if (!c.contains(k) || !c[k].is_number()) return false;
        cells *= c[k].get<double>();
    }
    return cells > static_cast<double>(kMaxCanvasCells);
}

Parsed parse_body(std::string_view body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded()) {
        return {std::nullopt, fail(422, "E_INPUT", "body is not valid JSON", json::array({{{"field", ""}, {"message", "parse error"}}}))};
    }
    if (oversized(j)) {
        return {std::nullopt, fail(413, "E_DOMAIN", fmt::format("canvas exceeds {} cells", kMaxCanvasCells))};
    }
    std::vector<FieldError> errors;
    auto layout = parse_layout(j, errors);
    if (!layout) {
        json fields = json::array();
        for (const auto& e : errors) fields.push_back({{"field", e.field}, {"message", e.message}});
        return {std::nullopt, fail(422, "E_INPUT", "invalid layout", fields)};
    }
    return {std::move(layout), std::nullopt};
}

std::optional<std::string> single_foreground(const CompositionLayout& layout) {
    std::optional<std::string> fg;
    for (const auto& e : layout.entries) {
        if (e.priority != Priority::foreground) continue;
        if (fg) return std::nullopt;
        fg = e.reference_id;
    }
    return fg;
}

}  // namespace

std::string error_body(std::string_view code, std::string_view message, const json& fields) {
    json e = {{"code", code}, {"message", message}};
    if (!fields.is_null()) e["fields"] = fields;
    return json{{"error", e}}.dump();
}

json report_to_json(const LayoutReport& report) {
    json overlaps = json::array();
    for (const auto& o : report.overlaps) overlaps.push_back({{"a", o.a}, {"b", o.b}, {"frames", o.frames}, {"gated", o.gated}});
    json conflicts = json::array();
    for (const auto& [a, b] : report.foreground_conflicts) conflicts.push_back({a, b});
    return {{"ok", report.ok()},
            {"overlaps", overlaps},
            {"foreground_conflicts", conflicts},
            {"ungated_overlap_cells", report.ungated_overlap_cells}};
}

Response preview(std::string_view body) {
    auto parsed = parse_body(body);
    if (parsed.failure) return *parsed.failure;
    const CompositionLayout& layout = *parsed.layout;
    const LayoutReport report = validate_layout(layout);
    if (!report.ok()) {
        json fields = json::array();
        for (const auto& [a, b] : report.foreground_conflicts) {
            fields.push_back({{"field", "/entries"}, {"message", fmt::format("foreground entries {} and {} overlap", a, b)}});
        }
        return fail(422, "E_DOMAIN", "conflicting foreground priorities", fields);
    }

    const Canvas& cv = layout.canvas;
    const Tensor mask4 = compose_masks(layout, single_foreground(layout));
    const std::size_t factor = std::max<std::size_t>(
        1, (std::max(cv.height, cv.width) + kPreviewSide - 1) / kPreviewSide);
    const std::size_t ph = (cv.height + factor - 1) / factor, pw = (cv.width + factor - 1) / factor;

    json channels = json::object();
    const char* names[3] = {"image", "video", "union"};
    for (std::size_t ch = 0; ch < 3; ++ch) {
        json frames = json::array();
        for (std::size_t t = 0; t < cv.frames; ++t) {
            std::vector<double> cells(ph * pw, 0.0);
            for (std::size_t y = 0; y < ph; ++y) {
                for (std::size_t x = 0; x < pw; ++x) {
                    double s = 0.0;
                    std::size_t n = 0;
                    for (std::size_t yy = y * factor; yy < std::min(cv.height, (y + 1) * factor); ++yy) {
                        for (std::size_t xx = x * factor; xx < std::min(cv.width, (x + 1) * factor); ++xx) {
                            s += mask4.at(t, ch, yy, xx);
                            ++n;
                        }
                    }
                    cells[y * pw + x] = std::round(s / static_cast<double>(n) * 1e4) / 1e4;
                }
            }
            frames.push_back(std::move(cells));
        }
        channels[names[ch]] = std::move(frames);
    }

    json boxes = json::array();
    for (const auto& e : layout.entries) {
        const Trajectory traj = resample_trajectory(e.trajectory, cv.frames);
        json polys = json::array();
        for (std::size_t t = 0; t < traj.size(); ++t) {
            if (!traj[t].visible) {
                polys.push_back(nullptr);
                continue;
            }
            const CellBox b = anchor_box(traj[t], cv);
            polys.push_back(json::array({{b.x0, b.y0}, {b.x1, b.y0}, {b.x1, b.y1}, {b.x0, b.y1}}));
        }
        boxes.push_back({{"id", e.reference_id}, {"priority", to_string(e.priority)}, {"polygons", polys}});
    }

    json out = {{"canvas", {{"t", cv.frames}, {"h", cv.height}, {"w", cv.width}}},
                {"mask", {{"factor", factor}, {"height", ph}, {"width", pw}, {"channels", channels}}},
                {"boxes", boxes},
                {"report", report_to_json(report)}};
    return {200, out.dump()};
}

Response validate(std::string_view body) {
    auto parsed = parse_body(body);
    if (parsed.failure) return *parsed.failure;
    return {200, report_to_json(validate_layout(*parsed.layout)).dump()};
}

LayoutStore::LayoutStore(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

bool LayoutStore::valid_id(std::string_view id) noexcept {
    if (id.empty() || id.size() > 64) return false;
    return std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
    });
}

std::shared_mutex& LayoutStore::lock_for(std::string_view id) const {
    std::lock_guard g(table_mutex_);
    auto it = locks_.find(id);
    if (it == locks_.end()) it = locks_.emplace(std::string(id), std::make_unique<std::shared_mutex>()).first;
    return *it->second;
}

std::optional<std::string> LayoutStore::get(std::string_view id) const {
    if (!valid_id(id)) throw InputError(fmt::format("invalid layout id '{}'", id));
    std::shared_lock lock(lock_for(id));
    std::ifstream f(root_ / (std::string(id) + ".json"), std::ios::binary);
    if (!f) return std::nullopt;
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void LayoutStore::put(std::string_view id, std::string_view bytes) {
    if (!valid_id(id)) throw InputError(fmt::format("invalid layout id '{}'", id));
    std::unique_lock lock(lock_for(id));
    const auto target = root_ / (std::string(id) + ".json");
    const auto tmp = root_ / (std::string(id) + ".json.tmp");
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw InputError(fmt::format("cannot write {}", tmp.string()));
    }
    std::filesystem::rename(tmp, target);
}

Response get_layout(const LayoutStore& store, std::string_view id) {
    if (!LayoutStore::valid_id(id)) return fail(400, "E_INPUT", "layout id must match [A-Za-z0-9_-]{1,64}");
    auto bytes = store.get(id);
    if (!bytes) return fail(404, "E_INPUT", fmt::format("no layout '{}'", id));
    return {200, std::move(*bytes)};
}

Response put_layout(LayoutStore& store, std::string_view id, std::string_view body) {
    if (!LayoutStore::valid_id(id)) return fail(400, "E_INPUT", "layout id must match [A-Za-z0-9_-]{1,64}");
    auto parsed = parse_body(body);
    if (parsed.failure) return *parsed.failure;
    store.put(id, body);
    return {200, json{{"id", id}, {"bytes", body.size()}}.dump()};
}

struct Server::Impl {
    explicit Impl(std::filesystem::path dir) : store(std::move(dir)) {}
    LayoutStore store;
    httplib::Server http;
};

namespace {

void reply(httplib::Response& res, const Response& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
}

}  // namespace

Server::Server(std::filesystem::path data_dir) : impl_(std::make_unique<Impl>(std::move(data_dir))) {
    auto& http = impl_->http;
    auto& store = impl_->store;
    http.set_payload_max_length(8u << 20);
    http.Get("/health", [](const httplib::Request&, httplib::Response& res) { res.set_content("ok", "text/plain"); });
    http.Post("/preview", [](const httplib::Request& req, httplib::Response& res) { reply(res, preview(req.body)); });
    http.Post("/validate", [](const httplib::Request& req, httplib::Response& res) { reply(res, validate(req.body)); });
    http.Get(R"(/layout/([^/]+))", [&store](const httplib::Request& req, httplib::Response& res) {
        reply(res, get_layout(store, req.matches[1].str()));
    });
    http.Put(R"(/layout/([^/]+))", [&store](const httplib::Request& req, httplib::Response& res) {
        reply(res, put_layout(store, req.matches[1].str(), req.body));
    });
    http.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        Response r{500, error_body("E_INTERNAL", "internal error")};
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            r = {422, error_body(e.code(), e.what())};
        } catch (const std::exception& e) {
            r = {500, error_body("E_INTERNAL", e.what())};
        } catch (...) {
        }
        reply(res, r);
    });
}

Server::~Server() { stop(); }

bool Server::listen(const std::string& host, int port) { return impl_->http.listen(host, port); }

int Server::bind_any(const std::string& host) { return impl_->http.bind_to_any_port(host); }

bool Server::serve_bound() { return impl_->http.listen_after_bind(); }

void Server::stop() {
    if (impl_) impl_->http.stop();
}

}  // namespace trajforge::service
