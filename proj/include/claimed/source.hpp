#ifndef CLAIMED_SOURCE_HPP
#define CLAIMED_SOURCE_HPP

#include <filesystem>
#include <string>
#include <vector>

namespace claimed {

enum class SourceKind { notebook, script };

enum class CellRole { name, description, dependencies, imports, interface, argv_shim, body };

const char* to_string(CellRole role);

// Raw bytes of an operator source file. Text is UTF-8 with line endings
// normalized to LF; loading fails on anything else.
struct RawSource {
    std::filesystem::path path;
    SourceKind kind = SourceKind::script;
    std::string text;

    // Kind inferred from the extension (.ipynb -> notebook, else script).
    static RawSource load(const std::filesystem::path& path);
    static RawSource from_text(std::filesystem::path path, SourceKind kind, std::string text);
};

struct SourceCell {
    int index = 0;      // document ordinal, strictly increasing
    CellRole role = CellRole::body;
    std::string code;
    std::vector<std::string> leading_comments;
};

// Normalized operator source: role-tagged cells in document order plus the
// fields every later stage needs. Successful parses always carry exactly one
// name, description, dependencies and interface cell.
struct OperatorSource {
    std::string name;
    std::string description;
    std::vector<SourceCell> cells;
    std::vector<std::string> dependency_specs;

    const SourceCell* cell(CellRole role) const;
    std::vector<const SourceCell*> cells_with(CellRole role) const;
};

OperatorSource parse_notebook(const RawSource& raw);
OperatorSource parse_script(const RawSource& raw);
OperatorSource parse_source(const RawSource& raw);

// Package tokens of the dependencies cell in source order, deduplicated,
// version pins kept, installer prefixes and flags stripped.
std::vector<std::string> extract_dependencies(const OperatorSource& src);

bool is_valid_operator_name(const std::string& name);

// Lowercase-kebab sanitization used for script file stems.
std::string sanitize_to_kebab(const std::string& stem);

bool is_install_directive(const std::string& line);
std::vector<std::string> parse_install_directive(const std::string& line);

} // namespace claimed

#endif
