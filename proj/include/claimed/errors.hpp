#ifndef CLAIMED_ERRORS_HPP
#define CLAIMED_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace claimed {

// Every failure the toolchain can report. Compile-side kinds carry the
// offending cell role or parameter name in detail() so the CLI can render
// a precise message; run-side kinds map onto the CLI exit-code classes.
enum class ErrorKind {
    invalid_source,
    missing_mandatory_cell,
    duplicate_role,
    invalid_operator_name,
    duplicate_parameter,
    empty_interface,
    invalid_base_image,
    catalog_locked,
    corrupt_catalog,
    not_found,
    version_not_found,
    runtime_unavailable,
    image_pull_failed,
    missing_required_input,
    unknown_parameter,
    operator_failed,
    stream_timeout,
    not_stream_capable,
    artifacts_missing,
    parse_error,
    cycle_detected,
    unknown_step_ref,
    usage_error,
    config_error,
    io_error,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message, std::string detail = {})
        : std::runtime_error(message), kind_(kind), detail_(std::move(detail)) {}

    ErrorKind kind() const { return kind_; }

    // Structured payload: the missing role, the duplicate parameter name,
    // the unresolved step id, ... depending on kind.
    const std::string& detail() const { return detail_; }

private:
    ErrorKind kind_;
    std::string detail_;
};

} // namespace claimed

#endif
