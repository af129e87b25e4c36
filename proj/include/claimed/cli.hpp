#ifndef CLAIMED_CLI_HPP
#define CLAIMED_CLI_HPP

#include "claimed/config.hpp"
#include "claimed/process.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace claimed::cli {

enum class Subcommand { compile, run, ls, pipeline_run };

const char* to_string(Subcommand sub);

// Parsed command line. A bare `<name[:version]> k=v ...` is the run
// grammar; params keep their order and split at the first '=' so values may
// carry '=', ':' and '/'.
struct Invocation {
    Subcommand sub = Subcommand::run;
    std::vector<std::string> positional;
    std::map<std::string, std::string> flags;  // boolean flags hold "true"
    std::vector<std::pair<std::string, std::string>> params;

    bool operator==(const Invocation&) const = default;
};

Invocation parse_invocation(const std::vector<std::string>& argv);
std::vector<std::string> render_argv(const Invocation& inv);

// Exit code classes: 0 ok, 1 user/compile error, 2 runtime environment
// error; operator exit codes >= 1 pass through.
struct CliContext {
    ToolConfig config;
    CommandRunner* commands = nullptr;
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
};

int dispatch(const std::vector<std::string>& argv, CliContext& ctx);

int cmd_compile(const Invocation& inv, CliContext& ctx);
int cmd_run(const Invocation& inv, CliContext& ctx);
int cmd_ls(const Invocation& inv, CliContext& ctx);
int cmd_pipeline_run(const Invocation& inv, CliContext& ctx);

std::string usage();

} // namespace claimed::cli

#endif
