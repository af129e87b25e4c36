#include "claimed/config.hpp"

#include "claimed/errors.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace claimed {

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const char* getenv_nonempty(const char* name) {
    const char* v = std::getenv(name);
    return (v != nullptr && v[0] != '\0') ? v : nullptr;
}

} // namespace

ToolConfig ToolConfig::from_env() {
    ToolConfig cfg;
    if (const char* home = getenv_nonempty("CLAIMED_HOME")) {
        cfg.home = home;
    } else if (const char* user_home = getenv_nonempty("HOME")) {
        cfg.home = std::filesystem::path(user_home) / ".claimed";
    } else {
        cfg.home = std::filesystem::path(".claimed");
    }
    if (const char* rt = getenv_nonempty("CLAIMED_RUNTIME")) cfg.runtime_override = rt;
    return cfg;
}

ToolConfig ToolConfig::load(const std::optional<std::filesystem::path>& config_file) {
    ToolConfig cfg = from_env();
    if (config_file) {
        cfg.apply_file(*config_file);
    } else if (const char* env_file = getenv_nonempty("C3_CONFIG")) {
        cfg.apply_file(env_file);
    }
    return cfg;
}

void ToolConfig::apply_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw Error(ErrorKind::config_error, "cannot read config file: " + file.string());
    }
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        // key = value and key: value both accepted
        auto sep = stripped.find_first_of("=:");
        if (sep == std::string::npos) {
            throw Error(ErrorKind::config_error,
                        file.string() + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(stripped.substr(0, sep));
        std::string value = trim(stripped.substr(sep + 1));
        if (key == "registry") registry = value;
        else if (key == "image_prefix") image_prefix = value;
        else if (key == "base_image") base_image = value;
        else if (key == "container_path") container_path = value;
        else if (key == "container_data_path") container_data_path = value;
        else if (key == "extra_categories") extra_categories = split_csv(value);
        else if (key == "home") home = value;
        // unknown keys are ignored so configs can serve newer versions too
    }
}

const std::vector<std::string>& builtin_categories() {
    static const std::vector<std::string> cats = {
        "analyze", "anomaly", "checkpoint", "deploy", "filter", "geo",
        "input",   "metric",  "monitoring", "nlp",    "output", "predict",
        "sim",     "train",   "transform",  "util",   "visualize",
    };
    return cats;
}

CategoryResult category_of(const std::string& name, const ToolConfig& cfg) {
    std::string bare = name;
    if (!cfg.image_prefix.empty() && bare.rfind(cfg.image_prefix, 0) == 0 &&
        bare.size() > cfg.image_prefix.size()) {
        bare = bare.substr(cfg.image_prefix.size());
    }
    CategoryResult result;
    result.category = bare.substr(0, bare.find('-'));
    const auto& builtins = builtin_categories();
    result.known = std::find(builtins.begin(), builtins.end(), result.category) != builtins.end() ||
                   std::find(cfg.extra_categories.begin(), cfg.extra_categories.end(),
                             result.category) != cfg.extra_categories.end();
    return result;
}

std::string make_image_ref(const ToolConfig& cfg, const std::string& name,
                           const std::string& version) {
    return cfg.registry + "/" + cfg.image_prefix + name + ":" + version;
}

} // namespace claimed
