#include "claimed/cli.hpp"

#include "claimed/catalog.hpp"
#include "claimed/codegen.hpp"
#include "claimed/errors.hpp"
#include "claimed/interface.hpp"
#include "claimed/pipeline.hpp"
#include "claimed/runner.hpp"
#include "claimed/source.hpp"
#include "claimed/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <regex>
#include <set>
#include <sstream>

namespace claimed::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string>& boolean_flags() {
    static const std::set<std::string> flags = {"build", "push", "major", "json"};
    return flags;
}

const std::set<std::string>& valued_flags() {
    static const std::set<std::string> flags = {"out", "config", "backend", "data-dir",
                                                "category"};
    return flags;
}

bool is_param_token(const std::string& token) {
    static const std::regex key_re(R"(^[A-Za-z_][A-Za-z0-9_]*=)");
    return std::regex_search(token, key_re);
}

[[noreturn]] void usage_fail(const std::string& why) {
    throw Error(ErrorKind::usage_error, why);
}

std::pair<std::string, std::string> split_param(const std::string& token) {
    auto eq = token.find('=');
    return {token.substr(0, eq), token.substr(eq + 1)};
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io_error, "cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw Error(ErrorKind::io_error, "short write to " + path.string());
}

std::string flag_or(const Invocation& inv, const std::string& name, const std::string& fallback) {
    auto it = inv.flags.find(name);
    return it == inv.flags.end() ? fallback : it->second;
}

bool has_flag(const Invocation& inv, const std::string& name) {
    return inv.flags.count(name) > 0;
}

RuntimeBackend choose_backend(const Invocation& inv, ToolConfig& cfg, CliContext& ctx) {
    if (has_flag(inv, "backend")) {
        const std::string& want = inv.flags.at("backend");
        if (want != "docker" && want != "podman" && want != "process") {
            usage_fail("--backend must be docker, podman or process");
        }
        cfg.runtime_override = want;
    }
    std::string warning;
    RuntimeBackend backend = detect_backend(cfg, *ctx.commands, &warning);
    if (!warning.empty()) *ctx.err << "warning: " << warning << "\n";
    return backend;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::runtime_unavailable:
        case ErrorKind::image_pull_failed:
        case ErrorKind::artifacts_missing:
        case ErrorKind::stream_timeout:
        case ErrorKind::catalog_locked:
        case ErrorKind::corrupt_catalog:
        case ErrorKind::io_error:
            return 2;
        default:
            return 1;
    }
}

json entry_json(const CatalogEntry& entry) {
    json j;
    j["name"] = entry.name;
    j["version"] = entry.version.str();
    j["category"] = entry.category;
    j["digest"] = entry.digest;
    j["image_ref"] = entry.image_ref;
    j["created_at"] = entry.created_at;
    return j;
}

std::string operator_description(const OperatorSource& src) {
    const SourceCell* cell = src.cell(CellRole::description);
    if (!cell) return "";
    // First line carries the summary; keep it single-line for the descriptor.
    std::istringstream in(cell->code);
    std::string line;
    while (std::getline(in, line)) {
        auto start = line.find_first_not_of(" \t");
        if (start != std::string::npos) {
            auto end = line.find_last_not_of(" \t");
            return line.substr(start, end - start + 1);
        }
    }
    return "";
}

} // namespace

const char* to_string(Subcommand sub) {
    switch (sub) {
        case Subcommand::compile: return "compile";
        case Subcommand::run: return "run";
        case Subcommand::ls: return "ls";
        case Subcommand::pipeline_run: return "pipeline-run";
    }
    return "run";
}

std::string usage() {
    return "usage:\n"
           "  claimed compile <path> [--out DIR] [--build] [--push] [--major] [--config PATH]\n"
           "  claimed run <name[:version]> [k=v ...] [--backend docker|podman|process] [--data-dir PATH]\n"
           "  claimed <name[:version]> [k=v ...]        (same as run)\n"
           "  claimed ls [--category C] [--json]\n"
           "  claimed pipeline-run <file> [--backend docker|podman|process]\n";
}

Invocation parse_invocation(const std::vector<std::string>& argv) {
    if (argv.empty()) usage_fail("no arguments given");

    Invocation inv;
    std::size_t start = 1;
    const std::string& first = argv[0];
    if (first == "compile") {
        inv.sub = Subcommand::compile;
    } else if (first == "run") {
        inv.sub = Subcommand::run;
    } else if (first == "ls") {
        inv.sub = Subcommand::ls;
    } else if (first == "pipeline-run") {
        inv.sub = Subcommand::pipeline_run;
    } else if (first.rfind("-", 0) == 0) {
        usage_fail("expected a subcommand or operator reference, got '" + first + "'");
    } else {
        // Bare grammar: claimed <name[:version]> k=v ...
        inv.sub = Subcommand::run;
        inv.positional.push_back(first);
    }

    const bool takes_params = inv.sub == Subcommand::run || inv.sub == Subcommand::pipeline_run;

    for (std::size_t i = start; i < argv.size(); ++i) {
        const std::string& token = argv[i];
        if (token.rfind("--", 0) == 0) {
            std::string name = token.substr(2);
            if (boolean_flags().count(name)) {
                inv.flags[name] = "true";
            } else if (valued_flags().count(name)) {
                if (i + 1 >= argv.size()) usage_fail("flag --" + name + " needs a value");
                inv.flags[name] = argv[++i];
            } else {
                usage_fail("unknown flag --" + name);
            }
        } else if (takes_params && token.find('=') != std::string::npos) {
            if (!is_param_token(token)) {
                usage_fail("malformed parameter '" + token + "' (want key=value)");
            }
            inv.params.push_back(split_param(token));
        } else {
            inv.positional.push_back(token);
        }
    }
    return inv;
}

std::vector<std::string> render_argv(const Invocation& inv) {
    std::vector<std::string> argv;
    argv.push_back(to_string(inv.sub));
    for (const auto& pos : inv.positional) argv.push_back(pos);
    for (const auto& [name, value] : inv.flags) {
        argv.push_back("--" + name);
        if (!boolean_flags().count(name)) argv.push_back(value);
    }
    for (const auto& [key, value] : inv.params) argv.push_back(key + "=" + value);
    return argv;
}

int cmd_compile(const Invocation& inv, CliContext& ctx) {
    if (inv.positional.size() != 1) usage_fail("compile takes exactly one source path");
    const ToolConfig& cfg = ctx.config;

    OperatorSource src;
    OperatorInterface iface;
    CompiledArtifacts artifacts;
    try {
        RawSource raw = RawSource::load(inv.positional[0]);
        src = parse_source(raw);
        iface = extract_interface(src);
        for (const auto& warning : validate_interface(iface)) {
            *ctx.err << "warning: " << warning.message << "\n";
        }
        artifacts = compile_operator(src, iface, cfg);
    } catch (const Error& ex) {
        *ctx.err << "detailed compilation error (" << to_string(ex.kind()) << "): " << ex.what()
                 << "\n";
        return 1;
    }

    CategoryResult category = category_of(src.name, cfg);
    if (!category.known) {
        *ctx.err << "warning: '" << category.category
                 << "' is not a known operator category\n";
    }

    std::string description = operator_description(src);

    RegisterRequest req;
    req.name = src.name;
    req.category = category.category;
    req.image_repo = cfg.registry + "/" + cfg.image_prefix + src.name;
    req.interface = iface;
    req.artifacts = artifacts;
    req.bump_major = has_flag(inv, "major");
    req.make_descriptor = [&](const std::string& image_ref) {
        return generate_component_descriptor(iface, image_ref, description, cfg);
    };

    Catalog catalog(cfg.home);
    CatalogEntry entry = catalog.register_operator(std::move(req));

    std::string descriptor = generate_component_descriptor(iface, entry.image_ref, description, cfg);

    fs::path out_dir = flag_or(inv, "out", "./target/" + src.name);
    fs::create_directories(out_dir);
    write_text_file(out_dir / script_filename(src.name), artifacts.script_text);
    write_text_file(out_dir / "entrypoint.sh", artifacts.entrypoint_text);
    write_text_file(out_dir / "Dockerfile", artifacts.buildfile_text);
    write_text_file(out_dir / descriptor_filename(src.name), descriptor);

    if (has_flag(inv, "build") || has_flag(inv, "push")) {
        ToolConfig backend_cfg = cfg;
        RuntimeBackend backend = choose_backend(inv, backend_cfg, ctx);
        if (backend.kind == BackendKind::process) {
            throw Error(ErrorKind::runtime_unavailable,
                        "--build/--push need a container runtime");
        }
        if (has_flag(inv, "build")) {
            ExecResult build = ctx.commands->run(
                {backend.binary_path, "build", "-t", entry.image_ref, out_dir.string()}, {}, true);
            if (build.exit_code != 0) {
                throw Error(ErrorKind::operator_failed,
                            "container build failed with exit code " +
                                std::to_string(build.exit_code));
            }
        }
        if (has_flag(inv, "push")) {
            ExecResult push =
                ctx.commands->run({backend.binary_path, "push", entry.image_ref}, {}, true);
            if (push.exit_code != 0) {
                throw Error(ErrorKind::operator_failed,
                            "image push failed with exit code " +
                                std::to_string(push.exit_code));
            }
        }
    }

    if (has_flag(inv, "json")) {
        *ctx.out << entry_json(entry).dump(2) << "\n";
    } else {
        *ctx.out << entry.name << ":" << entry.version.str() << "\n";
    }
    return 0;
}

int cmd_run(const Invocation& inv, CliContext& ctx) {
    if (inv.positional.size() != 1) usage_fail("run takes exactly one operator reference");
    ToolConfig cfg = ctx.config;

    Catalog catalog(cfg.home);
    CatalogEntry entry = catalog.resolve(inv.positional[0], cfg.image_prefix);

    RuntimeBackend backend = choose_backend(inv, cfg, ctx);

    fs::path data_dir;
    if (has_flag(inv, "data-dir")) {
        data_dir = inv.flags.at("data-dir");
        fs::create_directories(data_dir);
    } else {
        data_dir = Runner::provision_data_dir(cfg, new_run_id());
    }

    RunRequest req;
    req.entry = entry;
    req.params = inv.params;
    req.data_dir_host = data_dir;
    req.backend = backend;

    Runner runner(cfg, *ctx.commands);
    RunResult result = runner.run_operator(req);

    if (has_flag(inv, "json")) {
        json j;
        j["operator"] = entry.name + ":" + entry.version.str();
        j["exit_code"] = result.exit_code;
        j["data_dir"] = result.data_dir_host.string();
        j["duration_seconds"] = result.duration_seconds;
        *ctx.out << j.dump(2) << "\n";
    } else if (result.exit_code != 0) {
        *ctx.err << "operator exited with code " << result.exit_code << "\n";
    }
    return result.exit_code;
}

int cmd_ls(const Invocation& inv, CliContext& ctx) {
    if (!inv.positional.empty()) usage_fail("ls takes no positional arguments");
    const ToolConfig& cfg = ctx.config;

    std::optional<std::string> category;
    if (has_flag(inv, "category")) category = inv.flags.at("category");

    Catalog catalog(cfg.home);
    std::vector<CatalogEntry> entries = catalog.list_entries(category);

    if (has_flag(inv, "json")) {
        json j = json::array();
        for (const auto& entry : entries) j.push_back(entry_json(entry));
        *ctx.out << j.dump(2) << "\n";
        return 0;
    }

    std::size_t name_width = 4, version_width = 7, category_width = 8;
    for (const auto& entry : entries) {
        name_width = std::max(name_width, entry.name.size());
        version_width = std::max(version_width, entry.version.str().size());
        category_width = std::max(category_width, entry.category.size());
    }
    *ctx.out << std::left << std::setw(static_cast<int>(name_width + 2)) << "NAME"
             << std::setw(static_cast<int>(version_width + 2)) << "VERSION"
             << std::setw(static_cast<int>(category_width + 2)) << "CATEGORY"
             << "DIGEST" << "\n";
    for (const auto& entry : entries) {
        *ctx.out << std::left << std::setw(static_cast<int>(name_width + 2)) << entry.name
                 << std::setw(static_cast<int>(version_width + 2)) << entry.version.str()
                 << std::setw(static_cast<int>(category_width + 2)) << entry.category
                 << entry.digest.substr(0, 12) << "\n";
    }
    return 0;
}

int cmd_pipeline_run(const Invocation& inv, CliContext& ctx) {
    if (inv.positional.size() != 1) usage_fail("pipeline-run takes exactly one pipeline file");
    ToolConfig cfg = ctx.config;

    PipelineSpec spec = load_pipeline(inv.positional[0]);
    RuntimeBackend backend = choose_backend(inv, cfg, ctx);

    Catalog catalog(cfg.home);
    Runner runner(cfg, *ctx.commands);
    PipelineExecutor executor(catalog, runner, cfg, backend);
    RunRecord record = executor.execute(spec);

    if (has_flag(inv, "json")) {
        json j;
        j["run_id"] = record.run_id;
        j["data_dir"] = record.data_dir_host.string();
        j["succeeded"] = record.all_succeeded();
        json steps = json::object();
        for (const auto& [id, res] : record.step_results) {
            json s;
            s["status"] = to_string(res.status);
            if (res.run) s["exit_code"] = res.run->exit_code;
            if (!res.error.empty()) s["error"] = res.error;
            steps[id] = s;
        }
        j["steps"] = steps;
        *ctx.out << j.dump(2) << "\n";
    } else {
        for (const auto& step : record.pipeline.steps) {
            const StepResult& res = record.step_results.at(step.id);
            *ctx.out << "step " << step.id << ": " << to_string(res.status) << "\n";
        }
        *ctx.out << "run record: " << (cfg.runs_dir() / record.run_id / "record.json").string()
                 << "\n";
    }
    return record.all_succeeded() ? 0 : 1;
}

int dispatch(const std::vector<std::string>& argv, CliContext& ctx) {
    try {
        Invocation inv = parse_invocation(argv);

        CliContext local = ctx;
        ToolConfig cfg = ctx.config;
        if (has_flag(inv, "config")) cfg.apply_file(inv.flags.at("config"));
        local.config = cfg;

        switch (inv.sub) {
            case Subcommand::compile: return cmd_compile(inv, local);
            case Subcommand::run: return cmd_run(inv, local);
            case Subcommand::ls: return cmd_ls(inv, local);
            case Subcommand::pipeline_run: return cmd_pipeline_run(inv, local);
        }
        return 1;
    } catch (const Error& ex) {
        *ctx.err << "error: " << ex.what() << "\n";
        if (ex.kind() == ErrorKind::usage_error) *ctx.err << usage();
        return exit_code_for(ex.kind());
    } catch (const std::exception& ex) {
        *ctx.err << "error: " << ex.what() << "\n";
        return 1;
    }
}

} // namespace claimed::cli
