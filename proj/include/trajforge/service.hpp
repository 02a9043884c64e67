#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "trajforge/layout.hpp"
#include "trajforge/stam.hpp"

namespace trajforge::service {

/// Largest canvas (frames x height x width cells) a request may describe.
inline constexpr std::size_t kMaxCanvasCells = 4 * 8 * 64 * 64;
/// Preview masks are downsampled until neither side exceeds this.
inline constexpr std::size_t kPreviewSide = 32;

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// JSON error body: {"error": {"code", "message", "fields"?}}.
std::string error_body(std::string_view code, std::string_view message, const nlohmann::json& fields = nullptr);

/// POST /preview: layout JSON -> downsampled [M_image, M_video, M_union]
/// per frame, per-entry box polygons in canvas cells, and overlap warnings.
Response preview(std::string_view body);

/// POST /validate: layout JSON -> overlap / priority report.
Response validate(std::string_view body);

nlohmann::json report_to_json(const LayoutReport& report);

/// Flat directory of `<id>.json` files. Writes go through a temporary file
/// and a rename; writers to the same id are serialized.
class LayoutStore {
public:
    explicit LayoutStore(std::filesystem::path root);

    static bool valid_id(std::string_view id) noexcept;

    std::optional<std::string> get(std::string_view id) const;
    void put(std::string_view id, std::string_view bytes);

    const std::filesystem::path& root() const noexcept { return root_; }

private:
    std::shared_mutex& lock_for(std::string_view id) const;

    std::filesystem::path root_;
    mutable std::mutex table_mutex_;
    mutable std::map<std::string, std::unique_ptr<std::shared_mutex>, std::less<>> locks_;
};

Response get_layout(const LayoutStore& store, std::string_view id);
/// Stores the body verbatim once it parses as a valid layout.
Response put_layout(LayoutStore& store, std::string_view id, std::string_view body);

/// Blocks serving on host:port until stop() is called from another thread.
class Server {
public:
    Server(std::filesystem::path data_dir);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and serves; returns false when the port cannot be bound.
    bool listen(const std::string& host, int port);
    /// Binds an ephemeral port and returns it, or -1.
    int bind_any(const std::string& host);
    /// Serves on a port taken by bind_any.
    bool serve_bound();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace trajforge::service
