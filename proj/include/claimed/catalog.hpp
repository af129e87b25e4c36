#ifndef CLAIMED_CATALOG_HPP
#define CLAIMED_CATALOG_HPP

#include "claimed/codegen.hpp"
#include "claimed/config.hpp"
#include "claimed/interface.hpp"

#include <chrono>
#include <compare>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace claimed {

struct Version {
    int major = 0;
    int minor = 0;

    auto operator<=>(const Version&) const = default;

    std::string str() const;
    static Version parse(const std::string& s);
};

struct CatalogEntry {
    std::string name;
    Version version;
    std::string digest;
    std::string image_ref;
    OperatorInterface interface;
    std::string created_at;  // UTC, ISO 8601
    std::string category;
};

struct RegisterRequest {
    std::string name;
    std::string category;
    std::string image_repo;  // "<registry>/<prefix><name>"; the version tag is appended here
    OperatorInterface interface;
    CompiledArtifacts artifacts;  // descriptor_text/image_ref filled during registration
    // Built once the version (and with it the image ref) is known.
    std::function<std::string(const std::string& image_ref)> make_descriptor;
    bool bump_major = false;
};

// Durable operator store: one JSON document under the tool home, guarded by
// an advisory file lock so concurrent CLI invocations serialize their
// writes. Registration drives the content-hash version bump rule: new name
// -> 0.1, unchanged digest -> existing entry, changed digest -> minor + 1.
class Catalog {
public:
    explicit Catalog(std::filesystem::path home,
                     std::chrono::milliseconds lock_timeout = std::chrono::milliseconds(5000));

    // Returns the (possibly pre-existing) entry and stores the artifact set
    // under artifacts/<name>/<version>/ next to the catalog.
    CatalogEntry register_operator(RegisterRequest req);

    // spec is "name", "name:latest" or "name:M.m"; a configured image prefix
    // on the name resolves the same as the bare operator name.
    CatalogEntry resolve(const std::string& spec, const std::string& image_prefix) const;

    std::vector<CatalogEntry> list_entries(const std::optional<std::string>& category = {}) const;

    std::filesystem::path artifact_dir(const CatalogEntry& entry) const;
    std::filesystem::path catalog_file() const;
    const std::filesystem::path& home() const { return home_; }

private:
    std::filesystem::path home_;
    std::chrono::milliseconds lock_timeout_;
    mutable std::mutex write_mutex_;
};

std::pair<std::string, std::optional<std::string>> split_resolve_spec(const std::string& spec);

} // namespace claimed

#endif
