#include "claimed/util.hpp"

#include "claimed/errors.hpp"

#include <ctime>
#include <random>

namespace claimed {

std::string now_utc_iso() {
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string random_hex(std::size_t digits) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    static const char* alphabet = "0123456789abcdef";
    std::uniform_int_distribution<int> dist(0, 15);
    std::string out;
    out.reserve(digits);
    for (std::size_t i = 0; i < digits; ++i) out.push_back(alphabet[dist(rng)]);
    return out;
}

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_source: return "invalid source";
        case ErrorKind::missing_mandatory_cell: return "missing mandatory cell";
        case ErrorKind::duplicate_role: return "duplicate cell role";
        case ErrorKind::invalid_operator_name: return "invalid operator name";
        case ErrorKind::duplicate_parameter: return "duplicate parameter";
        case ErrorKind::empty_interface: return "empty interface";
        case ErrorKind::invalid_base_image: return "invalid base image";
        case ErrorKind::catalog_locked: return "catalog locked";
        case ErrorKind::corrupt_catalog: return "corrupt catalog";
        case ErrorKind::not_found: return "operator not found";
        case ErrorKind::version_not_found: return "version not found";
        case ErrorKind::runtime_unavailable: return "runtime unavailable";
        case ErrorKind::image_pull_failed: return "image pull failed";
        case ErrorKind::missing_required_input: return "missing required input";
        case ErrorKind::unknown_parameter: return "unknown parameter";
        case ErrorKind::operator_failed: return "operator failed";
        case ErrorKind::stream_timeout: return "stream timeout";
        case ErrorKind::not_stream_capable: return "not stream capable";
        case ErrorKind::artifacts_missing: return "artifacts missing";
        case ErrorKind::parse_error: return "parse error";
        case ErrorKind::cycle_detected: return "cycle detected";
        case ErrorKind::unknown_step_ref: return "unknown step reference";
        case ErrorKind::usage_error: return "usage error";
        case ErrorKind::config_error: return "config error";
        case ErrorKind::io_error: return "io error";
    }
    return "error";
}

} // namespace claimed
