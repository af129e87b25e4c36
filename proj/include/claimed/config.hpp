#ifndef CLAIMED_CONFIG_HPP
#define CLAIMED_CONFIG_HPP

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace claimed {

// Tool-wide settings. Defaults work out of the box; a key=value (or
// key: value) config file can override them, picked up from --config or
// the C3_CONFIG environment variable. CLAIMED_HOME relocates the catalog
// and run state, CLAIMED_RUNTIME pins the execution backend.
struct ToolConfig {
    std::string registry = "local";
    std::string image_prefix = "claimed-";
    std::string base_image = "python:3.11-slim";
    std::string container_path = "/opt/app/";
    // Mount target for the per-run data volume inside containers. The
    // default sits next to container_path so the conventional relative
    // default "../data/" resolves into it.
    std::string container_data_path = "/opt/data";
    std::vector<std::string> extra_categories;

    std::filesystem::path home;       // catalog + runs live here
    std::string runtime_override;     // CLAIMED_RUNTIME, empty = autodetect

    // Defaults plus environment (CLAIMED_HOME, CLAIMED_RUNTIME, C3_CONFIG).
    static ToolConfig from_env();

    // Same, then apply an explicit config file on top.
    static ToolConfig load(const std::optional<std::filesystem::path>& config_file);

    void apply_file(const std::filesystem::path& file);

    std::filesystem::path catalog_file() const { return home / "catalog.json"; }
    std::filesystem::path runs_dir() const { return home / "runs"; }
    std::filesystem::path artifacts_dir() const { return home / "artifacts"; }
};

// Category vocabulary of the operator library; names outside it get a
// non-fatal unknown-category warning.
const std::vector<std::string>& builtin_categories();

struct CategoryResult {
    std::string category;
    bool known = false;
};

// Prefix of the operator name before the first hyphen, with the configured
// distribution prefix (image_prefix) stripped first so image-style names
// like "claimed-util-cos" categorize the same as "util-cos".
CategoryResult category_of(const std::string& name, const ToolConfig& cfg);

std::string make_image_ref(const ToolConfig& cfg, const std::string& name,
                           const std::string& version);

} // namespace claimed

#endif
