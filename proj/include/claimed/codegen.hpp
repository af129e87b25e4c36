#ifndef CLAIMED_CODEGEN_HPP
#define CLAIMED_CODEGEN_HPP

#include "claimed/config.hpp"
#include "claimed/interface.hpp"
#include "claimed/source.hpp"

#include <string>

namespace claimed {

// Everything a compiled operator deploys as. All texts are deterministic
// functions of (source, config): no timestamps, no host paths. image_ref is
// stamped by the catalog once a version is assigned.
struct CompiledArtifacts {
    std::string script_text;
    std::string entrypoint_text;
    std::string buildfile_text;
    std::string descriptor_text;
    std::string digest;
    std::string image_ref;
};

// Imports, interface and body cells concatenated in source order. The
// dependencies cell moves into the build file and any author-written argv
// shim is dropped in favor of the generated entrypoint.
std::string generate_script(const OperatorSource& src);

// POSIX sh launcher: exports declared k=v arguments (split at the first '=',
// value taken verbatim) as environment variables, warns about undeclared
// keys on stderr, then execs the operator script next to itself.
std::string generate_entrypoint(const OperatorInterface& iface, const std::string& operator_name);

std::string generate_buildfile(const OperatorSource& src, const OperatorInterface& iface,
                               const std::string& base_image, const ToolConfig& cfg);

// Workflow-component document: name, description, inputs, outputs and the
// container block binding each input as a name=<placeholder> argument the
// entrypoint consumes.
std::string generate_component_descriptor(const OperatorInterface& iface,
                                          const std::string& image_ref,
                                          const std::string& description,
                                          const ToolConfig& cfg);

// SHA-256 over a canonical serialization of (script, buildfile, interface).
std::string compute_digest(const std::string& script_text, const std::string& buildfile_text,
                           const OperatorInterface& iface);

// All artifacts except the descriptor, which needs the versioned image ref.
CompiledArtifacts compile_operator(const OperatorSource& src, const OperatorInterface& iface,
                                   const ToolConfig& cfg);

std::string script_filename(const std::string& operator_name);
std::string descriptor_filename(const std::string& operator_name);

} // namespace claimed

#endif
