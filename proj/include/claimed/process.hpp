#ifndef CLAIMED_PROCESS_HPP
#define CLAIMED_PROCESS_HPP

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace claimed {

struct ExecResult {
    int exit_code = -1;
    std::string stdout_text;
    std::string stderr_text;
    double duration_seconds = 0.0;
};

using EnvOverrides = std::vector<std::pair<std::string, std::string>>;

// A launched child. wait() reaps it and hands back captured output; output
// pumping runs on background threads so pipes never fill up.
class ChildHandle {
public:
    virtual ~ChildHandle() = default;
    virtual ExecResult wait() = 0;
    virtual void terminate() = 0;  // SIGTERM, then SIGKILL after a grace period
};

// Seam between the toolchain and external processes (container runtimes,
// interpreters). Tests swap in a recorder; production execs for real.
class CommandRunner {
public:
    virtual ~CommandRunner() = default;

    // forward_output mirrors the child's streams onto ours while capturing.
    virtual std::unique_ptr<ChildHandle> spawn(const std::vector<std::string>& argv,
                                               const EnvOverrides& env,
                                               bool forward_output) = 0;

    virtual ExecResult run(const std::vector<std::string>& argv, const EnvOverrides& env,
                           bool forward_output);
};

class SystemCommandRunner : public CommandRunner {
public:
    std::unique_ptr<ChildHandle> spawn(const std::vector<std::string>& argv,
                                       const EnvOverrides& env,
                                       bool forward_output) override;
};

CommandRunner& system_command_runner();

} // namespace claimed

#endif
