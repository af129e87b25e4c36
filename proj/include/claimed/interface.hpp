#ifndef CLAIMED_INTERFACE_HPP
#define CLAIMED_INTERFACE_HPP

#include "claimed/source.hpp"

#include <json.hpp>

#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace claimed {

enum class ParamType { string, integer, floating, boolean };
enum class ParamDirection { input_required, input_optional, output };

const char* to_string(ParamType type);
const char* to_string(ParamDirection direction);
ParamType param_type_from_string(const std::string& s);
ParamDirection param_direction_from_string(const std::string& s);

// The descriptor-side spellings: String, Integer, Float, Boolean.
const char* descriptor_type_name(ParamType type);

struct Parameter {
    std::string name;
    ParamType type = ParamType::string;
    std::optional<std::string> default_value;  // raw literal text, quotes stripped
    std::string description;
    ParamDirection direction = ParamDirection::input_required;
    int source_index = 0;  // position within the interface cell

    bool operator==(const Parameter&) const = default;
};

struct OperatorInterface {
    std::string operator_name;
    std::vector<Parameter> params;

    const Parameter* find(const std::string& name) const;
    std::vector<const Parameter*> inputs() const;
    std::vector<const Parameter*> outputs() const;

    bool operator==(const OperatorInterface&) const = default;
};

// One family of source patterns that declare a parameter. Families are kept
// as an ordered, keyed list so other source languages can plug in their own
// sets; the Python set covers environ indexing, getenv and environ.get.
struct PatternFamily {
    std::string key;
    std::regex pattern;
};

const std::vector<PatternFamily>& python_env_patterns();

// True when the line declares a parameter under any pattern family; used by
// ingestion to spot the interface cell.
bool is_env_read_line(const std::string& line);

struct EnvReadMatch {
    std::string family;
    std::string name;
    std::optional<std::string> default_value;
};

std::optional<EnvReadMatch> match_env_read(const std::string& line);

// Cast wrapper around the env read, if any: int(...) -> integer,
// float(...) -> floating, bool(...) -> boolean, otherwise string.
ParamType infer_type(const std::string& line);

OperatorInterface extract_interface(const OperatorSource& src);

struct Warning {
    std::string code;
    std::string message;
};

std::vector<Warning> validate_interface(const OperatorInterface& iface);

nlohmann::json to_json(const Parameter& p);
nlohmann::json to_json(const OperatorInterface& iface);
Parameter parameter_from_json(const nlohmann::json& j);
OperatorInterface interface_from_json(const nlohmann::json& j);

} // namespace claimed

#endif
