#include "claimed/catalog.hpp"

#include "claimed/errors.hpp"
#include "claimed/util.hpp"

#include <json.hpp>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace claimed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// flock-based advisory lock; polls so a configurable timeout is possible
// (plain flock() only offers block-forever or fail-immediately).
class FileLock {
public:
    FileLock(const fs::path& path, std::chrono::milliseconds timeout) {
        fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
        if (fd_ < 0) {
            throw Error(ErrorKind::io_error,
                        "cannot open lock file " + path.string() + ": " + std::strerror(errno));
        }
        auto deadline = std::chrono::steady_clock::now() + timeout;
        while (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            if (errno != EWOULDBLOCK && errno != EINTR) {
                int saved = errno;
                ::close(fd_);
                fd_ = -1;
                throw Error(ErrorKind::io_error,
                            "flock failed on " + path.string() + ": " + std::strerror(saved));
            }
            if (std::chrono::steady_clock::now() >= deadline) {
                ::close(fd_);
                fd_ = -1;
                throw Error(ErrorKind::catalog_locked,
                            "catalog lock at " + path.string() + " is held by another process");
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
        }
    }

    ~FileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
};

[[noreturn]] void corrupt(const fs::path& file, const std::string& why) {
    throw Error(ErrorKind::corrupt_catalog, "corrupt catalog " + file.string() + ": " + why);
}

CatalogEntry entry_from_json(const fs::path& file, const std::string& name, const json& j) {
    if (!j.is_object()) corrupt(file, "entry for '" + name + "' is not an object");
    static const std::set<std::string> expected = {"version",    "digest",     "image_ref",
                                                   "interface",  "created_at", "category"};
    std::set<std::string> seen;
    for (auto it = j.begin(); it != j.end(); ++it) seen.insert(it.key());
    if (seen != expected) corrupt(file, "entry for '" + name + "' has unexpected shape");

    CatalogEntry e;
    e.name = name;
    try {
        e.version = Version::parse(j.at("version").get<std::string>());
        e.digest = j.at("digest").get<std::string>();
        e.image_ref = j.at("image_ref").get<std::string>();
        e.interface = interface_from_json(j.at("interface"));
        e.created_at = j.at("created_at").get<std::string>();
        e.category = j.at("category").get<std::string>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& ex) {
        corrupt(file, std::string("entry for '") + name + "': " + ex.what());
    }
    return e;
}

json entry_to_json(const CatalogEntry& e) {
    json j;
    j["version"] = e.version.str();
    j["digest"] = e.digest;
    j["image_ref"] = e.image_ref;
    j["interface"] = to_json(e.interface);
    j["created_at"] = e.created_at;
    j["category"] = e.category;
    return j;
}

// name -> version string -> entry
using CatalogDoc = std::vector<CatalogEntry>;

CatalogDoc load_doc(const fs::path& file) {
    CatalogDoc doc;
    std::ifstream in(file, std::ios::binary);
    if (!in) return doc;  // no catalog yet: empty store

    json root;
    try {
        in >> root;
    } catch (const std::exception& ex) {
        corrupt(file, ex.what());
    }
    if (!root.is_object()) corrupt(file, "top level is not an object");
    if (!root.contains("operators") || !root.at("operators").is_object()) {
        corrupt(file, "missing 'operators' object");
    }
    for (auto it = root.at("operators").begin(); it != root.at("operators").end(); ++it) {
        if (!it.value().is_object()) corrupt(file, "versions of '" + it.key() + "' not an object");
        for (auto vt = it.value().begin(); vt != it.value().end(); ++vt) {
            CatalogEntry e = entry_from_json(file, it.key(), vt.value());
            if (e.version.str() != vt.key()) {
                corrupt(file, "version key '" + vt.key() + "' disagrees with entry");
            }
            doc.push_back(std::move(e));
        }
    }
    return doc;
}

void save_doc(const fs::path& file, const CatalogDoc& doc) {
    json operators = json::object();
    for (const auto& e : doc) {
        operators[e.name][e.version.str()] = entry_to_json(e);
    }
    json root;
    root["operators"] = operators;

    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::io_error, "cannot write " + tmp.string());
        }
        out << root.dump(2) << "\n";
        out.flush();
        if (!out) {
            throw Error(ErrorKind::io_error, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, file, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorKind::io_error, "cannot replace " + file.string() + ": " + ec.message());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::io_error, "short write to " + path.string());
}

} // namespace

std::string Version::str() const {
    return std::to_string(major) + "." + std::to_string(minor);
}

Version Version::parse(const std::string& s) {
    auto bad = [&]() -> Error {
        return Error(ErrorKind::usage_error, "invalid version '" + s + "' (expected M.m)");
    };
    auto dot = s.find('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 >= s.size()) throw bad();
    const std::string maj = s.substr(0, dot), min = s.substr(dot + 1);
    auto all_digits = [](const std::string& part) {
        return !part.empty() &&
               std::all_of(part.begin(), part.end(), [](unsigned char c) { return std::isdigit(c); });
    };
    if (!all_digits(maj) || !all_digits(min)) throw bad();
    try {
        return Version{std::stoi(maj), std::stoi(min)};
    } catch (const std::exception&) {
        throw bad();
    }
}

Catalog::Catalog(fs::path home, std::chrono::milliseconds lock_timeout)
    : home_(std::move(home)), lock_timeout_(lock_timeout) {
    fs::create_directories(home_);
}

fs::path Catalog::catalog_file() const { return home_ / "catalog.json"; }

fs::path Catalog::artifact_dir(const CatalogEntry& entry) const {
    return home_ / "artifacts" / entry.name / entry.version.str();
}

CatalogEntry Catalog::register_operator(RegisterRequest req) {
    std::lock_guard<std::mutex> guard(write_mutex_);
    FileLock lock(home_ / "catalog.lock", lock_timeout_);

    CatalogDoc doc = load_doc(catalog_file());

    const CatalogEntry* latest = nullptr;
    for (const auto& e : doc) {
        if (e.name != req.name) continue;
        if (e.digest == req.artifacts.digest) {
            // Content unchanged: the registration is idempotent, even when a
            // major bump was asked for.
            return e;
        }
        if (!latest || e.version > latest->version) latest = &e;
    }

    CatalogEntry entry;
    entry.name = req.name;
    if (!latest) {
        entry.version = Version{0, 1};
    } else if (req.bump_major) {
        entry.version = Version{latest->version.major + 1, 0};
    } else {
        entry.version = Version{latest->version.major, latest->version.minor + 1};
    }
    entry.digest = req.artifacts.digest;
    entry.image_ref = req.image_repo + ":" + entry.version.str();
    entry.interface = req.interface;
    entry.created_at = now_utc_iso();
    entry.category = req.category;

    std::string descriptor =
        req.make_descriptor ? req.make_descriptor(entry.image_ref) : std::string();

    fs::path dir = home_ / "artifacts" / entry.name / entry.version.str();
    fs::create_directories(dir);
    write_file(dir / (entry.name + ".py"), req.artifacts.script_text);
    write_file(dir / "entrypoint.sh", req.artifacts.entrypoint_text);
    write_file(dir / "Dockerfile", req.artifacts.buildfile_text);
    if (!descriptor.empty()) {
        write_file(dir / (entry.name + ".yaml"), descriptor);
    }

    doc.push_back(entry);
    save_doc(catalog_file(), doc);
    return entry;
}

CatalogEntry Catalog::resolve(const std::string& spec, const std::string& image_prefix) const {
    auto [raw_name, version_part] = split_resolve_spec(spec);

    CatalogDoc doc = load_doc(catalog_file());

    auto candidates_for = [&](const std::string& name) {
        std::vector<const CatalogEntry*> found;
        for (const auto& e : doc) {
            if (e.name == name) found.push_back(&e);
        }
        return found;
    };

    std::string name = raw_name;
    auto candidates = candidates_for(name);
    if (candidates.empty() && !image_prefix.empty() && raw_name.rfind(image_prefix, 0) == 0) {
        name = raw_name.substr(image_prefix.size());
        candidates = candidates_for(name);
    }
    if (candidates.empty()) {
        throw Error(ErrorKind::not_found, "no operator named '" + raw_name + "' in the catalog");
    }

    if (!version_part || *version_part == "latest") {
        const CatalogEntry* best = candidates.front();
        for (const auto* e : candidates) {
            if (e->version > best->version) best = e;
        }
        return *best;
    }

    Version wanted = Version::parse(*version_part);
    for (const auto* e : candidates) {
        if (e->version == wanted) return *e;
    }
    throw Error(ErrorKind::version_not_found,
                "operator '" + name + "' has no version " + wanted.str());
}

std::vector<CatalogEntry> Catalog::list_entries(const std::optional<std::string>& category) const {
    CatalogDoc doc = load_doc(catalog_file());
    std::vector<CatalogEntry> out;
    for (auto& e : doc) {
        if (category && e.category != *category) continue;
        out.push_back(std::move(e));
    }
    std::sort(out.begin(), out.end(), [](const CatalogEntry& a, const CatalogEntry& b) {
        if (a.name != b.name) return a.name < b.name;
        return a.version < b.version;
    });
    return out;
}

std::pair<std::string, std::optional<std::string>> split_resolve_spec(const std::string& spec) {
    auto colon = spec.find(':');
    if (colon == std::string::npos) return {spec, std::nullopt};
    return {spec.substr(0, colon), spec.substr(colon + 1)};
}

} // namespace claimed
