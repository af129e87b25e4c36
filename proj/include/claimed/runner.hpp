#ifndef CLAIMED_RUNNER_HPP
#define CLAIMED_RUNNER_HPP

#include "claimed/catalog.hpp"
#include "claimed/config.hpp"
#include "claimed/process.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace claimed {

enum class BackendKind { docker, podman, process };

const char* to_string(BackendKind kind);

struct RuntimeBackend {
    BackendKind kind = BackendKind::process;
    std::string binary_path;  // container kinds only
};

// CLAIMED_RUNTIME wins; otherwise docker, then podman, each probed with
// "<binary> version"; the process backend is the fallback (a warning goes to
// stderr in that case).
RuntimeBackend detect_backend(const ToolConfig& cfg, CommandRunner& runner,
                              std::string* warning = nullptr);

enum class StreamRole { none, producer, consumer };

struct RunRequest {
    CatalogEntry entry;
    std::vector<std::pair<std::string, std::string>> params;  // ordered
    std::filesystem::path data_dir_host;
    RuntimeBackend backend;
    StreamRole stream_role = StreamRole::none;
    std::string stream_peer;  // host:port, filled by the bridge
};

struct RunResult {
    int exit_code = -1;
    std::string stdout_log;
    std::string stderr_log;
    double duration_seconds = 0.0;
    std::filesystem::path data_dir_host;
};

class Runner {
public:
    Runner(const ToolConfig& cfg, CommandRunner& commands);

    // Validates the request, ensures the image (container kinds), injects
    // parameters as environment variables and propagates the operator's
    // exit code in the result. Never launches on a validation failure.
    RunResult run_operator(const RunRequest& req);

    // Consumer first (claimed_stream_port), producer once the port accepts
    // (claimed_stream_url); both must declare the claimed_stream parameter.
    std::pair<RunResult, RunResult> bridge_stream(const RunRequest& producer,
                                                  const RunRequest& consumer);

    // $CLAIMED_HOME/runs/<run_id>/data, created on first use; one run's
    // steps all share it.
    static std::filesystem::path provision_data_dir(const ToolConfig& cfg,
                                                    const std::string& run_id);

    // The documented shell-out template, exposed for golden tests:
    //   <binary> run --rm [-p P:P] -e k=v ... -v <host>:<container_data> <image>
    std::vector<std::string> container_run_argv(const RunRequest& req,
                                                const EnvOverrides& extra_env,
                                                int publish_port = 0) const;

    std::chrono::milliseconds stream_accept_timeout{30000};

private:
    struct LaunchPlan {
        std::vector<std::string> argv;
        EnvOverrides env;
    };
    LaunchPlan plan_launch(const RunRequest& req, const EnvOverrides& extra_env, int publish_port);
    void validate_request(const RunRequest& req) const;
    void ensure_image(const RunRequest& req);
    std::filesystem::path script_path(const CatalogEntry& entry) const;

    const ToolConfig& cfg_;
    CommandRunner& commands_;
};

bool stream_capable(const CatalogEntry& entry);

std::string new_run_id();

// Loopback helpers for the HTTP bridge.
int allocate_loopback_port();
bool wait_for_accept(int port, std::chrono::milliseconds timeout);

} // namespace claimed

#endif
