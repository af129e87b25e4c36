#include "claimed/source.hpp"

#include "claimed/errors.hpp"
#include "claimed/interface.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>

namespace claimed {

namespace {

using nlohmann::json;

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

std::string rstrip(const std::string& s) {
    auto end = s.find_last_not_of(" \t\r\n");
    if (end == std::string::npos) return {};
    return s.substr(0, end + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(current);
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) lines.push_back(current);
    return lines;
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out.push_back('\n');
        out += lines[i];
    }
    return out;
}

std::string normalize_newlines(std::string text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

bool utf8_valid(const std::string& text) {
    const auto* p = reinterpret_cast<const unsigned char*>(text.data());
    std::size_t n = text.size();
    std::size_t i = 0;
    while (i < n) {
        unsigned char c = p[i];
        std::size_t len;
        unsigned char min_second = 0x80, max_second = 0xbf;
        if (c < 0x80) { ++i; continue; }
        else if (c < 0xc2) return false;
        else if (c < 0xe0) len = 2;
        else if (c < 0xf0) {
            len = 3;
            if (c == 0xe0) min_second = 0xa0;
            if (c == 0xed) max_second = 0x9f;
        } else if (c < 0xf5) {
            len = 4;
            if (c == 0xf0) min_second = 0x90;
            if (c == 0xf4) max_second = 0x8f;
        } else {
            return false;
        }
        if (i + len > n) return false;
        if (p[i + 1] < min_second || p[i + 1] > max_second) return false;
        for (std::size_t k = 2; k < len; ++k) {
            if (p[i + k] < 0x80 || p[i + k] > 0xbf) return false;
        }
        i += len;
    }
    return true;
}

bool is_comment_line(const std::string& line) {
    std::string t = trim(line);
    return !t.empty() && t[0] == '#';
}

bool is_blank_line(const std::string& line) { return trim(line).empty(); }

bool is_import_line(const std::string& line) {
    static const std::regex import_re(R"(^\s*(import\s+\S+|from\s+\S+\s+import\s+.+)\s*$)");
    return std::regex_match(line, import_re);
}

// A cell is the dependencies cell when every significant line installs.
bool is_pure_install_cell(const std::string& code) {
    bool any = false;
    for (const auto& line : split_lines(code)) {
        if (is_blank_line(line)) continue;
        if (!is_install_directive(line)) return false;
        any = true;
    }
    return any;
}

bool is_pure_import_cell(const std::string& code) {
    bool any = false;
    for (const auto& line : split_lines(code)) {
        if (is_blank_line(line) || is_comment_line(line)) continue;
        if (!is_import_line(line)) return false;
        any = true;
    }
    return any;
}

bool cell_has_env_read(const std::string& code) {
    for (const auto& line : split_lines(code)) {
        if (is_env_read_line(line)) return true;
    }
    return false;
}

// Cell (6) shape: pulls k=v pairs out of the process arguments and assigns
// them via exec.
bool is_argv_shim_cell(const std::string& code) {
    return code.find("sys.argv") != std::string::npos && code.find("exec(") != std::string::npos;
}

std::vector<std::string> leading_comments_of(const std::string& code) {
    std::vector<std::string> comments;
    for (const auto& line : split_lines(code)) {
        if (is_blank_line(line)) continue;
        if (!is_comment_line(line)) break;
        comments.push_back(trim(line));
    }
    return comments;
}

std::string strip_heading_markers(const std::string& line) {
    std::string t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && t[i] == '#') ++i;
    return trim(t.substr(i));
}

std::string join_notebook_source(const json& source) {
    if (source.is_string()) return source.get<std::string>();
    std::string out;
    if (source.is_array()) {
        for (const auto& part : source) {
            if (part.is_string()) out += part.get<std::string>();
        }
    }
    return out;
}

void append_cell(std::vector<SourceCell>& cells, CellRole role, std::string code) {
    SourceCell cell;
    cell.index = static_cast<int>(cells.size());
    cell.role = role;
    cell.leading_comments = leading_comments_of(code);
    cell.code = std::move(code);
    cells.push_back(std::move(cell));
}

std::string validated_name(const std::string& raw) {
    std::string name = strip_heading_markers(raw);
    if (!is_valid_operator_name(name)) {
        throw Error(ErrorKind::invalid_operator_name,
                    "operator name '" + name + "' is not lowercase kebab-case", name);
    }
    return name;
}

[[noreturn]] void missing_cell(CellRole role) {
    throw Error(ErrorKind::missing_mandatory_cell,
                std::string("mandatory cell missing: ") + to_string(role), to_string(role));
}

[[noreturn]] void duplicate_role(CellRole role, int index) {
    throw Error(ErrorKind::duplicate_role,
                std::string("two cells claim the ") + to_string(role) + " role (cell " +
                    std::to_string(index) + ")",
                to_string(role));
}

} // namespace

const char* to_string(CellRole role) {
    switch (role) {
        case CellRole::name: return "name";
        case CellRole::description: return "description";
        case CellRole::dependencies: return "dependencies";
        case CellRole::imports: return "imports";
        case CellRole::interface: return "interface";
        case CellRole::argv_shim: return "argv_shim";
        case CellRole::body: return "body";
    }
    return "?";
}

RawSource RawSource::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io_error, "cannot read source file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    SourceKind kind = path.extension() == ".ipynb" ? SourceKind::notebook : SourceKind::script;
    return from_text(path, kind, buf.str());
}

RawSource RawSource::from_text(std::filesystem::path path, SourceKind kind, std::string text) {
    if (!utf8_valid(text)) {
        throw Error(ErrorKind::invalid_source, "source is not valid UTF-8: " + path.string());
    }
    RawSource raw;
    raw.path = std::move(path);
    raw.kind = kind;
    raw.text = normalize_newlines(std::move(text));
    return raw;
}

const SourceCell* OperatorSource::cell(CellRole role) const {
    for (const auto& c : cells) {
        if (c.role == role) return &c;
    }
    return nullptr;
}

std::vector<const SourceCell*> OperatorSource::cells_with(CellRole role) const {
    std::vector<const SourceCell*> out;
    for (const auto& c : cells) {
        if (c.role == role) out.push_back(&c);
    }
    return out;
}

bool is_valid_operator_name(const std::string& name) {
    static const std::regex kebab(R"([a-z][a-z0-9]*(-[a-z0-9]+)*)");
    return std::regex_match(name, kebab);
}

std::string sanitize_to_kebab(const std::string& stem) {
    std::string out;
    for (char c : stem) {
        if (c >= 'A' && c <= 'Z') {
            out.push_back(static_cast<char>(c - 'A' + 'a'));
        } else if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            out.push_back(c);
        } else {
            out.push_back('-');
        }
    }
    // collapse runs and trim
    std::string collapsed;
    for (char c : out) {
        if (c == '-' && (collapsed.empty() || collapsed.back() == '-')) continue;
        collapsed.push_back(c);
    }
    while (!collapsed.empty() && collapsed.back() == '-') collapsed.pop_back();
    return collapsed;
}

bool is_install_directive(const std::string& line) {
    static const std::vector<std::string> prefixes = {
        "!pip install ", "!pip3 install ", "%pip install ", "# pip install ", "# pip3 install ",
    };
    std::string t = trim(line);
    for (const auto& p : prefixes) {
        if (t.rfind(p, 0) == 0) return true;
    }
    return false;
}

std::vector<std::string> parse_install_directive(const std::string& line) {
    std::string t = trim(line);
    auto pos = t.find("install ");
    if (pos == std::string::npos) return {};
    std::stringstream ss(t.substr(pos + 8));
    std::vector<std::string> tokens;
    std::string tok;
    while (ss >> tok) {
        if (tok[0] == '-') continue;  // installer flags are not packages
        tokens.push_back(tok);
    }
    return tokens;
}

std::vector<std::string> extract_dependencies(const OperatorSource& src) {
    const SourceCell* deps = src.cell(CellRole::dependencies);
    if (deps == nullptr) missing_cell(CellRole::dependencies);
    std::vector<std::string> specs;
    for (const auto& line : split_lines(deps->code)) {
        if (!is_install_directive(line)) continue;
        for (auto& tok : parse_install_directive(line)) {
            if (std::find(specs.begin(), specs.end(), tok) == specs.end()) {
                specs.push_back(tok);
            }
        }
    }
    return specs;
}

OperatorSource parse_notebook(const RawSource& raw) {
    if (raw.kind != SourceKind::notebook) {
        throw Error(ErrorKind::invalid_source, "not a notebook source: " + raw.path.string());
    }
    json doc;
    try {
        doc = json::parse(raw.text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::invalid_source,
                    "notebook JSON is malformed: " + std::string(e.what()));
    }
    if (!doc.is_object() || !doc.contains("cells") || !doc["cells"].is_array()) {
        throw Error(ErrorKind::invalid_source, "notebook has no top-level cell list");
    }

    std::vector<std::string> markdown_cells;
    std::vector<std::string> code_cells;
    for (const auto& cell : doc["cells"]) {
        if (!cell.is_object()) continue;
        std::string type = cell.value("cell_type", "");
        std::string text = rstrip(join_notebook_source(cell.contains("source") ? cell["source"] : json()));
        if (type == "markdown") {
            markdown_cells.push_back(text);
        } else if (type == "code") {
            code_cells.push_back(text);
        }
    }

    if (markdown_cells.empty() || trim(markdown_cells[0]).empty()) missing_cell(CellRole::name);

    auto heading_lines = split_lines(markdown_cells[0]);
    std::size_t heading_idx = 0;
    while (heading_idx < heading_lines.size() && is_blank_line(heading_lines[heading_idx])) ++heading_idx;
    std::string name = validated_name(heading_lines[heading_idx]);

    std::string description;
    std::string description_cell_text;
    if (markdown_cells.size() >= 2 && !trim(markdown_cells[1]).empty()) {
        description_cell_text = markdown_cells[1];
        description = trim(markdown_cells[1]);
    } else {
        // remaining lines of the title cell may carry the description
        description_cell_text = trim(join_lines(heading_lines, heading_idx + 1, heading_lines.size()));
        description = description_cell_text;
    }
    if (description.empty()) missing_cell(CellRole::description);

    // Classify code cells in document order.
    std::vector<std::pair<CellRole, std::string>> classified;
    bool have_deps = false, have_imports = false, have_interface = false, have_shim = false;
    int ordinal = 0;
    for (const auto& code : code_cells) {
        ++ordinal;
        CellRole role;
        if (is_pure_install_cell(code)) {
            if (have_deps) duplicate_role(CellRole::dependencies, ordinal);
            have_deps = true;
            role = CellRole::dependencies;
        } else if (have_deps && !have_imports && is_pure_import_cell(code)) {
            have_imports = true;
            role = CellRole::imports;
        } else if (cell_has_env_read(code)) {
            if (have_interface) duplicate_role(CellRole::interface, ordinal);
            have_interface = true;
            role = CellRole::interface;
        } else if (!have_shim && is_argv_shim_cell(code)) {
            have_shim = true;
            role = CellRole::argv_shim;
        } else {
            role = CellRole::body;
        }
        classified.emplace_back(role, code);
    }
    if (!have_deps) missing_cell(CellRole::dependencies);
    if (!have_interface) missing_cell(CellRole::interface);

    OperatorSource src;
    src.name = name;
    src.description = description;
    append_cell(src.cells, CellRole::name, markdown_cells[0]);
    append_cell(src.cells, CellRole::description, description_cell_text);
    for (auto& [role, code] : classified) {
        append_cell(src.cells, role, std::move(code));
    }
    src.dependency_specs = extract_dependencies(src);
    return src;
}

OperatorSource parse_script(const RawSource& raw) {
    if (raw.kind != SourceKind::script) {
        throw Error(ErrorKind::invalid_source, "not a script source: " + raw.path.string());
    }
    if (trim(raw.text).empty()) missing_cell(CellRole::name);

    std::string name = sanitize_to_kebab(raw.path.stem().string());
    if (!is_valid_operator_name(name)) {
        throw Error(ErrorKind::invalid_operator_name,
                    "file stem '" + raw.path.stem().string() + "' does not sanitize to kebab-case",
                    name);
    }

    auto lines = split_lines(raw.text);
    std::vector<bool> consumed(lines.size(), false);

    // Leading docstring or comment block carries the description.
    std::string description;
    std::string description_text;
    std::size_t i = 0;
    if (i < lines.size() && lines[i].rfind("#!", 0) == 0) ++i;  // shebang
    while (i < lines.size() && is_blank_line(lines[i])) ++i;
    if (i < lines.size()) {
        std::string t = trim(lines[i]);
        if (t.rfind("\"\"\"", 0) == 0 || t.rfind("'''", 0) == 0) {
            std::string delim = t.substr(0, 3);
            std::size_t start = i;
            std::string content = t.substr(3);
            std::size_t end = i;
            if (content.find(delim) != std::string::npos) {
                content = content.substr(0, content.find(delim));
            } else {
                for (end = i + 1; end < lines.size(); ++end) {
                    auto close = lines[end].find(delim);
                    if (close != std::string::npos) {
                        content += "\n" + lines[end].substr(0, close);
                        break;
                    }
                    content += "\n" + lines[end];
                }
                if (end == lines.size()) {
                    throw Error(ErrorKind::invalid_source,
                                "unterminated docstring in " + raw.path.string());
                }
            }
            for (std::size_t k = start; k <= end && k < lines.size(); ++k) consumed[k] = true;
            description_text = trim(content);
            for (const auto& dl : split_lines(description_text)) {
                if (!is_blank_line(dl)) { description = trim(dl); break; }
            }
        } else if (is_comment_line(lines[i]) && !is_install_directive(lines[i])) {
            std::size_t k = i;
            while (k < lines.size() && is_comment_line(lines[k]) && !is_install_directive(lines[k])) {
                consumed[k] = true;
                ++k;
            }
            description_text = join_lines(lines, i, k);
            std::string first = trim(lines[i]);
            first.erase(0, first.find_first_not_of("# \t"));
            description = trim(first);
        }
    }

    // Install directives, wherever they appear, form the dependencies cell.
    std::vector<std::string> install_lines;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        if (!consumed[k] && is_install_directive(lines[k])) {
            install_lines.push_back(trim(lines[k]));
            consumed[k] = true;
        }
    }

    // Interface region: the contiguous env-read run (comments and blank
    // lines between reads stay inside), including the comment block that
    // introduces the first read.
    std::size_t first_env = lines.size();
    for (std::size_t k = 0; k < lines.size(); ++k) {
        if (!consumed[k] && is_env_read_line(lines[k])) { first_env = k; break; }
    }
    if (first_env == lines.size()) missing_cell(CellRole::interface);

    std::size_t region_begin = first_env;
    while (region_begin > 0 && !consumed[region_begin - 1] && is_comment_line(lines[region_begin - 1])) {
        --region_begin;
    }
    std::size_t region_end = first_env;  // inclusive, last env-read line
    for (std::size_t k = first_env + 1; k < lines.size(); ++k) {
        if (consumed[k]) break;
        if (is_env_read_line(lines[k])) {
            region_end = k;
        } else if (is_blank_line(lines[k]) || is_comment_line(lines[k])) {
            continue;
        } else {
            break;
        }
    }

    auto collect = [&](std::size_t begin, std::size_t end) {
        std::vector<std::string> kept;
        for (std::size_t k = begin; k < end; ++k) {
            if (!consumed[k]) kept.push_back(lines[k]);
        }
        while (!kept.empty() && is_blank_line(kept.front())) kept.erase(kept.begin());
        while (!kept.empty() && is_blank_line(kept.back())) kept.pop_back();
        return join_lines(kept, 0, kept.size());
    };

    std::string body_before = collect(0, region_begin);
    std::string interface_code = collect(region_begin, region_end + 1);
    std::string body_after = collect(region_end + 1, lines.size());

    OperatorSource src;
    src.name = name;
    src.description = description;
    append_cell(src.cells, CellRole::name, name);
    append_cell(src.cells, CellRole::description, description_text);
    append_cell(src.cells, CellRole::dependencies, join_lines(install_lines, 0, install_lines.size()));
    if (!body_before.empty()) append_cell(src.cells, CellRole::body, body_before);
    append_cell(src.cells, CellRole::interface, interface_code);
    if (!body_after.empty()) append_cell(src.cells, CellRole::body, body_after);
    src.dependency_specs = extract_dependencies(src);
    return src;
}

OperatorSource parse_source(const RawSource& raw) {
    return raw.kind == SourceKind::notebook ? parse_notebook(raw) : parse_script(raw);
}

} // namespace claimed
