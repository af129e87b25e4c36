#include "claimed/interface.hpp"

#include "claimed/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <set>

namespace claimed {

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
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

bool is_comment_line(const std::string& line) {
    std::string t = trim(line);
    return !t.empty() && t[0] == '#';
}

bool is_blank_line(const std::string& line) { return trim(line).empty(); }

std::string strip_comment_marker(const std::string& line) {
    std::string t = trim(line);
    std::size_t i = 0;
    while (i < t.size() && t[i] == '#') ++i;
    return trim(t.substr(i));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool parses_as_integer(const std::string& s) {
    if (s.empty()) return false;
    std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
    if (i == s.size()) return false;
    return std::all_of(s.begin() + i, s.end(), [](unsigned char c) { return std::isdigit(c); });
}

bool parses_as_float(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

bool parses_as_boolean(const std::string& s) {
    static const std::set<std::string> lexicon = {"true", "false", "True", "False", "1", "0"};
    return lexicon.count(s) > 0;
}

void check_default_lexical_space(const Parameter& p) {
    if (!p.default_value) return;
    bool ok = true;
    switch (p.type) {
        case ParamType::integer: ok = parses_as_integer(*p.default_value); break;
        case ParamType::floating: ok = parses_as_float(*p.default_value); break;
        case ParamType::boolean: ok = parses_as_boolean(*p.default_value); break;
        case ParamType::string: break;
    }
    if (!ok) {
        throw Error(ErrorKind::invalid_source,
                    "default '" + *p.default_value + "' of parameter '" + p.name +
                        "' is not a valid " + to_string(p.type) + " literal",
                    p.name);
    }
}

} // namespace

const char* to_string(ParamType type) {
    switch (type) {
        case ParamType::string: return "string";
        case ParamType::integer: return "integer";
        case ParamType::floating: return "float";
        case ParamType::boolean: return "boolean";
    }
    return "?";
}

const char* to_string(ParamDirection direction) {
    switch (direction) {
        case ParamDirection::input_required: return "input_required";
        case ParamDirection::input_optional: return "input_optional";
        case ParamDirection::output: return "output";
    }
    return "?";
}

ParamType param_type_from_string(const std::string& s) {
    if (s == "string") return ParamType::string;
    if (s == "integer") return ParamType::integer;
    if (s == "float") return ParamType::floating;
    if (s == "boolean") return ParamType::boolean;
    throw Error(ErrorKind::corrupt_catalog, "unknown parameter type: " + s);
}

ParamDirection param_direction_from_string(const std::string& s) {
    if (s == "input_required") return ParamDirection::input_required;
    if (s == "input_optional") return ParamDirection::input_optional;
    if (s == "output") return ParamDirection::output;
    throw Error(ErrorKind::corrupt_catalog, "unknown parameter direction: " + s);
}

const char* descriptor_type_name(ParamType type) {
    switch (type) {
        case ParamType::string: return "String";
        case ParamType::integer: return "Integer";
        case ParamType::floating: return "Float";
        case ParamType::boolean: return "Boolean";
    }
    return "String";
}

const Parameter* OperatorInterface::find(const std::string& name) const {
    for (const auto& p : params) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

std::vector<const Parameter*> OperatorInterface::inputs() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params) {
        if (p.direction != ParamDirection::output) out.push_back(&p);
    }
    return out;
}

std::vector<const Parameter*> OperatorInterface::outputs() const {
    std::vector<const Parameter*> out;
    for (const auto& p : params) {
        if (p.direction == ParamDirection::output) out.push_back(&p);
    }
    return out;
}

// The Python pattern set: environ indexing (with or without an assigned
// value), getenv and environ.get (with or without a default). Both quote
// styles are accepted; names follow the identifier class; bare numeric and
// True/False defaults are captured too.
const std::vector<PatternFamily>& python_env_patterns() {
    static const std::vector<PatternFamily> families = [] {
        const std::string name_cls = R"(["']([A-Za-z_][A-Za-z0-9_]*)["'])";
        const std::string literal = R"((?:["']([^"']*)["']|([0-9][0-9.eE+-]*|True|False)))";
        std::vector<PatternFamily> out;
        out.push_back({"environ_index",
                       std::regex(R"(os\.environ\[\s*)" + name_cls + R"(\s*\](?:\s*=\s*)" +
                                  literal + R"()?)")});
        out.push_back({"getenv", std::regex(R"(os\.getenv\(\s*)" + name_cls +
                                            R"(\s*(?:,\s*)" + literal + R"(\s*)?\))")});
        out.push_back({"environ_get", std::regex(R"(os\.environ\.get\(\s*)" + name_cls +
                                                 R"(\s*(?:,\s*)" + literal + R"(\s*)?\))")});
        return out;
    }();
    return families;
}

bool is_env_read_line(const std::string& line) {
    return match_env_read(line).has_value();
}

std::optional<EnvReadMatch> match_env_read(const std::string& line) {
    // A commented-out read declares nothing.
    if (is_comment_line(line)) return std::nullopt;
    for (const auto& family : python_env_patterns()) {
        std::smatch m;
        if (std::regex_search(line, m, family.pattern)) {
            EnvReadMatch match;
            match.family = family.key;
            match.name = m[1].str();
            if (m[2].matched) {
                match.default_value = m[2].str();
            } else if (m[3].matched) {
                match.default_value = m[3].str();
            }
            return match;
        }
    }
    return std::nullopt;
}

ParamType infer_type(const std::string& line) {
    for (const auto& family : python_env_patterns()) {
        std::smatch m;
        if (!std::regex_search(line, m, family.pattern)) continue;
        std::string prefix = line.substr(0, static_cast<std::size_t>(m.position(0)));
        static const std::regex cast_re(R"((int|float|bool)\s*\(\s*$)");
        std::smatch cm;
        if (std::regex_search(prefix, cm, cast_re)) {
            std::string cast = cm[1].str();
            if (cast == "int") return ParamType::integer;
            if (cast == "float") return ParamType::floating;
            if (cast == "bool") return ParamType::boolean;
        }
        return ParamType::string;
    }
    return ParamType::string;
}

OperatorInterface extract_interface(const OperatorSource& src) {
    const SourceCell* cell = src.cell(CellRole::interface);
    if (cell == nullptr) {
        throw Error(ErrorKind::missing_mandatory_cell, "mandatory cell missing: interface",
                    "interface");
    }

    OperatorInterface iface;
    iface.operator_name = src.name;

    auto lines = split_lines(cell->code);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto match = match_env_read(lines[i]);
        if (!match) continue;

        if (iface.find(match->name) != nullptr) {
            throw Error(ErrorKind::duplicate_parameter,
                        "parameter declared twice: " + match->name, match->name);
        }

        Parameter p;
        p.name = match->name;
        p.default_value = match->default_value;
        p.type = infer_type(lines[i]);
        p.source_index = static_cast<int>(iface.params.size());

        // Comment lines directly above, unbroken by blanks, are the
        // description.
        std::vector<std::string> comment_lines;
        for (std::size_t k = i; k-- > 0;) {
            if (is_comment_line(lines[k])) {
                comment_lines.insert(comment_lines.begin(), strip_comment_marker(lines[k]));
            } else {
                break;
            }
        }
        std::string description;
        for (const auto& part : comment_lines) {
            if (part.empty()) continue;
            if (!description.empty()) description += " ";
            description += part;
        }
        p.description = description;

        if (p.name.rfind("output_", 0) == 0) {
            p.direction = ParamDirection::output;
        } else if (p.default_value.has_value()) {
            p.direction = ParamDirection::input_optional;
        } else {
            p.direction = ParamDirection::input_required;
        }
        check_default_lexical_space(p);
        iface.params.push_back(std::move(p));
    }

    if (iface.params.empty()) {
        throw Error(ErrorKind::empty_interface,
                    "the interface cell declares no parameters");
    }
    return iface;
}

std::vector<Warning> validate_interface(const OperatorInterface& iface) {
    std::vector<Warning> warnings;

    if (iface.outputs().empty()) {
        warnings.push_back({"no-outputs", "operator declares no output_ parameter"});
    }

    std::string undescribed;
    for (const auto& p : iface.params) {
        if (p.description.empty()) {
            if (!undescribed.empty()) undescribed += ", ";
            undescribed += p.name;
        }
    }
    if (!undescribed.empty()) {
        warnings.push_back({"undescribed-params", "parameters lack descriptions: " + undescribed});
    }

    std::set<std::string> seen;
    for (const auto& p : iface.params) {
        std::string folded = lower(p.name);
        if (!seen.insert(folded).second) {
            warnings.push_back({"case-shadowing",
                                "parameter '" + p.name + "' shadows another name differing only by case"});
        }
    }
    return warnings;
}

nlohmann::json to_json(const Parameter& p) {
    nlohmann::json j;
    j["name"] = p.name;
    j["type"] = to_string(p.type);
    if (p.default_value) j["default"] = *p.default_value;
    j["description"] = p.description;
    j["direction"] = to_string(p.direction);
    j["index"] = p.source_index;
    return j;
}

nlohmann::json to_json(const OperatorInterface& iface) {
    nlohmann::json j;
    j["operator_name"] = iface.operator_name;
    j["params"] = nlohmann::json::array();
    for (const auto& p : iface.params) j["params"].push_back(to_json(p));
    return j;
}

Parameter parameter_from_json(const nlohmann::json& j) {
    Parameter p;
    p.name = j.at("name").get<std::string>();
    p.type = param_type_from_string(j.at("type").get<std::string>());
    if (j.contains("default")) p.default_value = j["default"].get<std::string>();
    p.description = j.value("description", "");
    p.direction = param_direction_from_string(j.at("direction").get<std::string>());
    p.source_index = j.value("index", 0);
    return p;
}

OperatorInterface interface_from_json(const nlohmann::json& j) {
    OperatorInterface iface;
    iface.operator_name = j.value("operator_name", "");
    for (const auto& pj : j.at("params")) iface.params.push_back(parameter_from_json(pj));
    return iface;
}

} // namespace claimed
