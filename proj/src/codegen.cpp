#include "claimed/codegen.hpp"

#include "claimed/digest.hpp"
#include "claimed/errors.hpp"

#include <json.hpp>

#include <cctype>
#include <sstream>

namespace claimed {

namespace {

// Always single-quoted so arbitrary descriptions and defaults stay one
// deterministic scalar shape.
std::string yaml_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "''";
        else out.push_back(c);
    }
    out += "'";
    return out;
}

std::string container_dir(const ToolConfig& cfg) {
    std::string dir = cfg.container_path;
    if (!dir.empty() && dir.back() == '/') dir.pop_back();
    return dir;
}

bool plausible_image_ref(const std::string& ref) {
    if (ref.empty()) return false;
    for (unsigned char c : ref) {
        if (std::isspace(c) || std::iscntrl(c)) return false;
    }
    return true;
}

} // namespace

std::string script_filename(const std::string& operator_name) { return operator_name + ".py"; }

std::string descriptor_filename(const std::string& operator_name) { return operator_name + ".yaml"; }

std::string generate_script(const OperatorSource& src) {
    std::string out;
    for (const auto& cell : src.cells) {
        if (cell.role != CellRole::imports && cell.role != CellRole::interface &&
            cell.role != CellRole::body) {
            continue;
        }
        if (cell.code.empty()) continue;
        if (!out.empty()) out += "\n\n";
        out += cell.code;
    }
    if (!out.empty() && out.back() != '\n') out += "\n";
    return out;
}

std::string generate_entrypoint(const OperatorInterface& iface, const std::string& operator_name) {
    std::string declared;
    for (const auto& p : iface.params) {
        if (!declared.empty()) declared += " ";
        declared += p.name;
    }

    std::ostringstream out;
    out << "#!/bin/sh\n";
    out << "# Generated launcher for " << operator_name << ": maps declared key=value\n";
    out << "# arguments onto environment variables, then runs the operator script.\n";
    out << "set -u\n";
    out << "\n";
    out << "declared_params=\"" << declared << "\"\n";
    out << "\n";
    out << "for launch_arg in \"$@\"; do\n";
    out << "    case \"$launch_arg\" in\n";
    out << "        [A-Za-z_]*=*)\n";
    out << "            launch_key=${launch_arg%%=*}\n";
    out << "            launch_value=${launch_arg#*=}\n";
    out << "            case \" $declared_params \" in\n";
    out << "                *\" $launch_key \"*)\n";
    out << "                    export \"$launch_key=$launch_value\"\n";
    out << "                    ;;\n";
    out << "                *)\n";
    out << "                    echo \"warning: undeclared parameter: $launch_key\" >&2\n";
    out << "                    ;;\n";
    out << "            esac\n";
    out << "            ;;\n";
    out << "        *)\n";
    out << "            echo \"warning: ignoring argument: $launch_arg\" >&2\n";
    out << "            ;;\n";
    out << "    esac\n";
    out << "done\n";
    out << "\n";
    out << "script_dir=$(CDPATH= cd -- \"$(dirname -- \"$0\")\" && pwd)\n";
    out << "exec python3 \"$script_dir/" << script_filename(operator_name) << "\"\n";
    return out.str();
}

std::string generate_buildfile(const OperatorSource& src, const OperatorInterface& /*iface*/,
                               const std::string& base_image, const ToolConfig& cfg) {
    if (!plausible_image_ref(base_image)) {
        throw Error(ErrorKind::invalid_base_image, "invalid base image: '" + base_image + "'");
    }
    std::string dir = container_dir(cfg);
    std::string script = script_filename(src.name);

    std::ostringstream out;
    out << "FROM " << base_image << "\n";
    if (!src.dependency_specs.empty()) {
        out << "RUN pip install";
        for (const auto& spec : src.dependency_specs) out << " " << spec;
        out << "\n";
    }
    out << "COPY " << script << " " << dir << "/" << script << "\n";
    out << "COPY entrypoint.sh " << dir << "/entrypoint.sh\n";
    out << "WORKDIR " << dir << "\n";
    out << "ENTRYPOINT [\"/bin/sh\", \"" << dir << "/entrypoint.sh\"]\n";
    return out.str();
}

std::string generate_component_descriptor(const OperatorInterface& iface,
                                          const std::string& image_ref,
                                          const std::string& description,
                                          const ToolConfig& cfg) {
    std::string dir = container_dir(cfg);
    auto inputs = iface.inputs();
    auto outputs = iface.outputs();

    std::ostringstream out;
    out << "name: " << yaml_quote(iface.operator_name) << "\n";
    out << "description: " << yaml_quote(description) << "\n";
    if (inputs.empty()) {
        out << "inputs: []\n";
    } else {
        out << "inputs:\n";
        for (const auto* p : inputs) {
            out << "- name: " << yaml_quote(p->name) << "\n";
            out << "  type: " << yaml_quote(descriptor_type_name(p->type)) << "\n";
            out << "  description: " << yaml_quote(p->description) << "\n";
            if (p->default_value) {
                out << "  default: " << yaml_quote(*p->default_value) << "\n";
            }
        }
    }
    if (outputs.empty()) {
        out << "outputs: []\n";
    } else {
        out << "outputs:\n";
        for (const auto* p : outputs) {
            out << "- name: " << yaml_quote(p->name) << "\n";
            out << "  type: " << yaml_quote(descriptor_type_name(p->type)) << "\n";
            out << "  description: " << yaml_quote(p->description) << "\n";
        }
    }
    out << "implementation:\n";
    out << "  container:\n";
    out << "    image: " << yaml_quote(image_ref) << "\n";
    out << "    command:\n";
    out << "    - '/bin/sh'\n";
    out << "    - " << yaml_quote(dir + "/entrypoint.sh") << "\n";
    if (inputs.empty()) {
        out << "    args: []\n";
    } else {
        out << "    args:\n";
        for (const auto* p : inputs) {
            out << "    - concat:\n";
            out << "      - " << yaml_quote(p->name + "=") << "\n";
            out << "      - inputValue: " << yaml_quote(p->name) << "\n";
        }
    }
    return out.str();
}

std::string compute_digest(const std::string& script_text, const std::string& buildfile_text,
                           const OperatorInterface& iface) {
    nlohmann::json canonical;
    canonical["buildfile"] = buildfile_text;
    canonical["interface"] = to_json(iface);
    canonical["script"] = script_text;
    return sha256_hex(canonical.dump());
}

CompiledArtifacts compile_operator(const OperatorSource& src, const OperatorInterface& iface,
                                   const ToolConfig& cfg) {
    CompiledArtifacts artifacts;
    artifacts.script_text = generate_script(src);
    artifacts.entrypoint_text = generate_entrypoint(iface, src.name);
    artifacts.buildfile_text = generate_buildfile(src, iface, cfg.base_image, cfg);
    artifacts.digest = compute_digest(artifacts.script_text, artifacts.buildfile_text, iface);
    return artifacts;
}

} // namespace claimed
