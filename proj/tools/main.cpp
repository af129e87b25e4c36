#include "claimed/cli.hpp"
#include "claimed/config.hpp"
#include "claimed/process.hpp"

#include <iostream>
#include <vector>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);

    claimed::cli::CliContext ctx;
    try {
        ctx.config = claimed::ToolConfig::from_env();
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    ctx.commands = &claimed::system_command_runner();
    ctx.out = &std::cout;
    ctx.err = &std::cerr;

    return claimed::cli::dispatch(args, ctx);
}
