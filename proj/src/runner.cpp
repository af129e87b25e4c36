#include "claimed/runner.hpp"

#include "claimed/codegen.hpp"
#include "claimed/errors.hpp"
#include "claimed/util.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <ctime>
#include <thread>

namespace claimed {

namespace fs = std::filesystem;

namespace {

std::string with_trailing_slash(std::string s) {
    if (s.empty() || s.back() != '/') s += '/';
    return s;
}

bool has_param(const RunRequest& req, const std::string& key) {
    return std::any_of(req.params.begin(), req.params.end(),
                       [&](const auto& kv) { return kv.first == key; });
}

bool probe_runtime(CommandRunner& runner, const std::string& binary) {
    try {
        return runner.run({binary, "version"}, {}, false).exit_code == 0;
    } catch (const Error&) {
        return false;
    }
}

// The environment the operator sees, in injection order: user params, then
// the data_dir fallback, then bridge-provided stream variables.
EnvOverrides operator_env(const RunRequest& req, const EnvOverrides& extra_env,
                          const std::string& data_dir_value) {
    EnvOverrides env;
    for (const auto& kv : req.params) env.push_back(kv);
    if (!has_param(req, "data_dir")) {
        env.emplace_back("data_dir", with_trailing_slash(data_dir_value));
    }
    for (const auto& kv : extra_env) env.push_back(kv);
    return env;
}

} // namespace

const char* to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::docker: return "docker";
        case BackendKind::podman: return "podman";
        case BackendKind::process: return "process";
    }
    return "process";
}

RuntimeBackend detect_backend(const ToolConfig& cfg, CommandRunner& runner, std::string* warning) {
    if (!cfg.runtime_override.empty()) {
        const std::string& want = cfg.runtime_override;
        if (want == "process") return {BackendKind::process, ""};
        if (want == "docker" || want == "podman") {
            if (!probe_runtime(runner, want)) {
                throw Error(ErrorKind::runtime_unavailable,
                            "requested runtime '" + want + "' is not usable");
            }
            return {want == "docker" ? BackendKind::docker : BackendKind::podman, want};
        }
        throw Error(ErrorKind::config_error, "unknown runtime '" + want + "'");
    }
    if (probe_runtime(runner, "docker")) return {BackendKind::docker, "docker"};
    if (probe_runtime(runner, "podman")) return {BackendKind::podman, "podman"};
    if (warning) {
        *warning = "no container runtime found; falling back to local process execution";
    }
    return {BackendKind::process, ""};
}

Runner::Runner(const ToolConfig& cfg, CommandRunner& commands) : cfg_(cfg), commands_(commands) {}

void Runner::validate_request(const RunRequest& req) const {
    for (const auto& [key, value] : req.params) {
        (void)value;
        if (!req.entry.interface.find(key)) {
            throw Error(ErrorKind::unknown_parameter,
                        "operator '" + req.entry.name + "' declares no parameter '" + key + "'",
                        key);
        }
    }
    for (const auto& p : req.entry.interface.params) {
        if (p.direction == ParamDirection::input_required && !has_param(req, p.name)) {
            throw Error(ErrorKind::missing_required_input,
                        "required input '" + p.name + "' not provided", p.name);
        }
    }
}

void Runner::ensure_image(const RunRequest& req) {
    const std::string& bin = req.backend.binary_path;
    ExecResult inspect = commands_.run({bin, "image", "inspect", req.entry.image_ref}, {}, false);
    if (inspect.exit_code == 0) return;
    ExecResult pull = commands_.run({bin, "pull", req.entry.image_ref}, {}, false);
    if (pull.exit_code != 0) {
        throw Error(ErrorKind::image_pull_failed,
                    "cannot pull " + req.entry.image_ref + ": " + pull.stderr_text);
    }
}

fs::path Runner::script_path(const CatalogEntry& entry) const {
    return cfg_.artifacts_dir() / entry.name / entry.version.str() /
           script_filename(entry.name);
}

std::vector<std::string> Runner::container_run_argv(const RunRequest& req,
                                                    const EnvOverrides& extra_env,
                                                    int publish_port) const {
    std::vector<std::string> argv{req.backend.binary_path, "run", "--rm"};
    if (publish_port > 0) {
        std::string p = std::to_string(publish_port);
        argv.push_back("-p");
        argv.push_back(p + ":" + p);
    }
    for (const auto& [key, value] : operator_env(req, extra_env, cfg_.container_data_path)) {
        argv.push_back("-e");
        argv.push_back(key + "=" + value);
    }
    argv.push_back("-v");
    argv.push_back(req.data_dir_host.string() + ":" + cfg_.container_data_path);
    argv.push_back(req.entry.image_ref);
    return argv;
}

Runner::LaunchPlan Runner::plan_launch(const RunRequest& req, const EnvOverrides& extra_env,
                                       int publish_port) {
    LaunchPlan plan;
    if (req.backend.kind == BackendKind::process) {
        fs::path script = script_path(req.entry);
        if (!fs::exists(script)) {
            throw Error(ErrorKind::artifacts_missing,
                        "no stored script for " + req.entry.name + ":" + req.entry.version.str() +
                            " (expected " + script.string() + ")");
        }
        plan.argv = {"python3", script.string()};
        plan.env = operator_env(req, extra_env, req.data_dir_host.string());
    } else {
        plan.argv = container_run_argv(req, extra_env, publish_port);
    }
    return plan;
}

RunResult Runner::run_operator(const RunRequest& req) {
    validate_request(req);
    if (req.backend.kind != BackendKind::process) ensure_image(req);

    LaunchPlan plan = plan_launch(req, {}, 0);
    ExecResult exec = commands_.run(plan.argv, plan.env, true);

    RunResult result;
    result.exit_code = exec.exit_code;
    result.stdout_log = exec.stdout_text;
    result.stderr_log = exec.stderr_text;
    result.duration_seconds = exec.duration_seconds;
    result.data_dir_host = req.data_dir_host;
    return result;
}

std::pair<RunResult, RunResult> Runner::bridge_stream(const RunRequest& producer,
                                                      const RunRequest& consumer) {
    for (const RunRequest* req : {&producer, &consumer}) {
        if (!stream_capable(req->entry)) {
            throw Error(ErrorKind::not_stream_capable,
                        "operator '" + req->entry.name + "' does not declare claimed_stream",
                        req->entry.name);
        }
        validate_request(*req);
        if (req->backend.kind != BackendKind::process) ensure_image(*req);
    }

    int port = allocate_loopback_port();
    std::string port_text = std::to_string(port);

    LaunchPlan consumer_plan =
        plan_launch(consumer, {{"claimed_stream_port", port_text}}, port);
    auto consumer_child = commands_.spawn(consumer_plan.argv, consumer_plan.env, true);

    if (!wait_for_accept(port, stream_accept_timeout)) {
        consumer_child->terminate();
        consumer_child->wait();
        throw Error(ErrorKind::stream_timeout,
                    "consumer '" + consumer.entry.name + "' never opened port " + port_text);
    }

    LaunchPlan producer_plan =
        plan_launch(producer, {{"claimed_stream_url", "http://127.0.0.1:" + port_text + "/"}}, 0);
    auto producer_child = commands_.spawn(producer_plan.argv, producer_plan.env, true);

    ExecResult producer_exec = producer_child->wait();
    ExecResult consumer_exec = consumer_child->wait();

    auto to_result = [](const ExecResult& exec, const RunRequest& req) {
        RunResult r;
        r.exit_code = exec.exit_code;
        r.stdout_log = exec.stdout_text;
        r.stderr_log = exec.stderr_text;
        r.duration_seconds = exec.duration_seconds;
        r.data_dir_host = req.data_dir_host;
        return r;
    };
    return {to_result(producer_exec, producer), to_result(consumer_exec, consumer)};
}

fs::path Runner::provision_data_dir(const ToolConfig& cfg, const std::string& run_id) {
    fs::path dir = cfg.runs_dir() / run_id / "data";
    fs::create_directories(dir);
    return dir;
}

bool stream_capable(const CatalogEntry& entry) {
    const Parameter* p = entry.interface.find("claimed_stream");
    return p && p->default_value && *p->default_value == "true";
}

std::string new_run_id() {
    // Compact UTC stamp: no ':' so the id stays safe inside -v host:container
    // mount syntax and as a directory name.
    std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm_utc);
    return std::string(buf) + "-" + random_hex(8);
}

int allocate_loopback_port() {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error(ErrorKind::io_error, "socket: " + std::string(std::strerror(errno)));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        int saved = errno;
        ::close(fd);
        throw Error(ErrorKind::io_error, "bind: " + std::string(std::strerror(saved)));
    }
    socklen_t len = sizeof(addr);
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
        int saved = errno;
        ::close(fd);
        throw Error(ErrorKind::io_error, "getsockname: " + std::string(std::strerror(saved)));
    }
    int port = ntohs(addr.sin_port);
    ::close(fd);
    return port;
}

bool wait_for_accept(int port, std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<uint16_t>(port));

    for (;;) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd >= 0) {
            int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
            ::close(fd);
            if (rc == 0) return true;
        }
        if (std::chrono::steady_clock::now() >= deadline) return false;
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
}

} // namespace claimed
