#include "claimed/runner.hpp"

#include "claimed/digest.hpp"
#include "claimed/errors.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>
#include <thread>

using namespace claimed;
using testsupport::RecorderRunner;
using testsupport::TempDir;

namespace {

CatalogEntry entry_with(const std::string& name, const std::string& version,
                        const std::vector<Parameter>& params) {
    CatalogEntry entry;
    entry.name = name;
    entry.version = Version::parse(version);
    entry.image_ref = "local/claimed-" + name + ":" + version;
    entry.digest = sha256_hex(name);
    entry.category = "util";
    entry.created_at = "2026-01-01T00:00:00Z";
    entry.interface.operator_name = name;
    entry.interface.params = params;
    return entry;
}

Parameter input(const std::string& name, std::optional<std::string> def = std::nullopt) {
    Parameter p;
    p.name = name;
    p.direction = def ? ParamDirection::input_optional : ParamDirection::input_required;
    p.default_value = std::move(def);
    return p;
}

std::string joined(const std::vector<std::string>& argv) {
    std::string out;
    for (const auto& a : argv) out += a + "\n";
    return out;
}

// Stores a runnable script for the entry under the configured artifacts dir.
void store_script(const ToolConfig& cfg, const CatalogEntry& entry, const std::string& body) {
    auto dir = cfg.artifacts_dir() / entry.name / entry.version.str();
    testsupport::write_file(dir / (entry.name + ".py"), body);
}

} // namespace

TEST_CASE("backend detection prefers the override, then docker, then podman") {
    TempDir tmp;
    RecorderRunner commands;
    ToolConfig cfg = testsupport::test_config(tmp);

    SUBCASE("explicit process override never probes") {
        cfg.runtime_override = "process";
        RuntimeBackend backend = detect_backend(cfg, commands);
        CHECK(backend.kind == BackendKind::process);
        CHECK(commands.calls.empty());
    }

    SUBCASE("explicit docker override probes docker") {
        cfg.runtime_override = "docker";
        commands.handler = [](const std::vector<std::string>& argv, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = argv[0] == "docker" ? 0 : 1;
            return r;
        };
        RuntimeBackend backend = detect_backend(cfg, commands);
        CHECK(backend.kind == BackendKind::docker);
        CHECK(backend.binary_path == "docker");
        REQUIRE(commands.calls.size() == 1);
        CHECK(commands.calls[0].argv == std::vector<std::string>{"docker", "version"});
    }

    SUBCASE("an unusable override is an error, not a fallback") {
        cfg.runtime_override = "docker";
        commands.handler = [](const std::vector<std::string>&, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = 1;
            return r;
        };
        try {
            detect_backend(cfg, commands);
            FAIL("expected an error");
        } catch (const Error& ex) {
            CHECK(ex.kind() == ErrorKind::runtime_unavailable);
        }
    }

    SUBCASE("unknown override names are config errors") {
        cfg.runtime_override = "lxc";
        try {
            detect_backend(cfg, commands);
            FAIL("expected an error");
        } catch (const Error& ex) {
            CHECK(ex.kind() == ErrorKind::config_error);
        }
    }

    SUBCASE("docker unavailable falls through to podman") {
        cfg.runtime_override.clear();
        commands.handler = [](const std::vector<std::string>& argv, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = argv[0] == "podman" ? 0 : 1;
            return r;
        };
        RuntimeBackend backend = detect_backend(cfg, commands);
        CHECK(backend.kind == BackendKind::podman);
    }

    SUBCASE("no runtime at all falls back to process with a warning") {
        cfg.runtime_override.clear();
        commands.handler = [](const std::vector<std::string>&, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = 1;
            return r;
        };
        std::string warning;
        RuntimeBackend backend = detect_backend(cfg, commands, &warning);
        CHECK(backend.kind == BackendKind::process);
        CHECK(warning.find("process") != std::string::npos);
    }
}

TEST_CASE("container launch argv matches the documented template byte for byte") {
    TempDir tmp;
    RecorderRunner commands;
    ToolConfig cfg = testsupport::test_config(tmp);
    Runner runner(cfg, commands);

    SUBCASE("plain run, docker") {
        RunRequest req;
        req.entry = entry_with("util-cos", "0.3",
                               {input("access_key_id"), input("secret_access_key"),
                                input("endpoint"), input("bucket_name"), input("path"),
                                input("recursive"), input("operation"),
                                input("data_dir", "../data/")});
        req.params = {{"access_key_id", "xxx"},
                      {"secret_access_key", "yyy"},
                      {"endpoint", "https://s3.us-east.cloud-object-storage.appdomain.cloud"},
                      {"bucket_name", "era5-cropscape-zarr"},
                      {"path", "/"},
                      {"recursive", "True"},
                      {"operation", "ls"}};
        req.data_dir_host = "/tmp/claimed-golden-data";
        req.backend = {BackendKind::docker, "docker"};
        CHECK(joined(runner.container_run_argv(req, {}, 0)) ==
              testsupport::read_file(testsupport::golden_path("docker_run_argv.txt")));
    }

    SUBCASE("streaming consumer publishes its port") {
        RunRequest req;
        req.entry = entry_with("stream-sink", "0.1",
                               {input("msg", "hi"), input("claimed_stream", "true")});
        req.params = {{"msg", "hi"}};
        req.data_dir_host = "/tmp/claimed-golden-data";
        req.backend = {BackendKind::docker, "docker"};
        CHECK(joined(runner.container_run_argv(req, {{"claimed_stream_port", "9000"}}, 9000)) ==
              testsupport::read_file(testsupport::golden_path("docker_run_argv_stream.txt")));
    }

    SUBCASE("podman spells the same template") {
        RunRequest req;
        req.entry = entry_with("util-echo", "0.2", {input("msg", "hi")});
        req.params = {{"msg", "hi"}};
        req.data_dir_host = "/tmp/claimed-golden-data";
        req.backend = {BackendKind::podman, "podman"};
        CHECK(joined(runner.container_run_argv(req, {}, 0)) ==
              testsupport::read_file(testsupport::golden_path("podman_run_argv.txt")));
    }

    SUBCASE("a user-supplied data_dir suppresses the injected one") {
        RunRequest req;
        req.entry = entry_with("util-echo", "0.2", {input("msg", "hi"), input("data_dir", "x")});
        req.params = {{"msg", "hi"}, {"data_dir", "/custom/"}};
        req.data_dir_host = "/tmp/claimed-golden-data";
        req.backend = {BackendKind::docker, "docker"};
        auto argv = runner.container_run_argv(req, {}, 0);
        CHECK(std::count(argv.begin(), argv.end(), "-e") == 2);
        CHECK(std::find(argv.begin(), argv.end(), "data_dir=/custom/") != argv.end());
        CHECK(std::find(argv.begin(), argv.end(), "data_dir=/opt/data/") == argv.end());
    }
}

TEST_CASE("container runs ensure the image and pass the exit code through") {
    TempDir tmp;
    RecorderRunner commands;
    ToolConfig cfg = testsupport::test_config(tmp);
    Runner runner(cfg, commands);

    RunRequest req;
    req.entry = entry_with("util-echo", "0.1", {input("msg", "hi")});
    req.params = {{"msg", "hello"}};
    req.data_dir_host = tmp.path() / "data";
    req.backend = {BackendKind::docker, "docker"};

    SUBCASE("image present: inspect, then run") {
        commands.handler = [](const std::vector<std::string>& argv, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = 0;
            if (argv[1] == "run") r.exit_code = 7;
            return r;
        };
        RunResult result = runner.run_operator(req);
        CHECK(result.exit_code == 7);
        REQUIRE(commands.calls.size() == 2);
        CHECK(commands.calls[0].argv ==
              std::vector<std::string>{"docker", "image", "inspect",
                                       "local/claimed-util-echo:0.1"});
        CHECK(commands.calls[1].argv[1] == "run");
        CHECK(commands.calls[1].forward_output);
    }

    SUBCASE("image absent: pull first") {
        commands.handler = [](const std::vector<std::string>& argv, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = argv[1] == "image" ? 1 : 0;
            return r;
        };
        runner.run_operator(req);
        REQUIRE(commands.calls.size() == 3);
        CHECK(commands.calls[1].argv ==
              std::vector<std::string>{"docker", "pull", "local/claimed-util-echo:0.1"});
    }

    SUBCASE("pull failure is fatal before any run") {
        commands.handler = [](const std::vector<std::string>& argv, const EnvOverrides&) {
            ExecResult r;
            r.exit_code = argv[1] == "run" ? 0 : 1;
            return r;
        };
        try {
            runner.run_operator(req);
            FAIL("expected an error");
        } catch (const Error& ex) {
            CHECK(ex.kind() == ErrorKind::image_pull_failed);
        }
        CHECK(commands.calls.size() == 2);  // inspect + pull, never run
    }
}

TEST_CASE("requests are validated before anything launches") {
    TempDir tmp;
    RecorderRunner commands;
    ToolConfig cfg = testsupport::test_config(tmp);
    Runner runner(cfg, commands);

    RunRequest req;
    req.entry = entry_with("util-echo", "0.1", {input("msg"), input("level", "1")});
    req.data_dir_host = tmp.path() / "data";
    req.backend = {BackendKind::docker, "docker"};

    SUBCASE("undeclared parameter") {
        req.params = {{"msg", "x"}, {"volume", "11"}};
        try {
            runner.run_operator(req);
            FAIL("expected an error");
        } catch (const Error& ex) {
            CHECK(ex.kind() == ErrorKind::unknown_parameter);
            CHECK(ex.detail() == "volume");
        }
        CHECK(commands.calls.empty());
    }

    SUBCASE("missing required input") {
        req.params = {{"level", "2"}};
        try {
            runner.run_operator(req);
            FAIL("expected an error");
        } catch (const Error& ex) {
            CHECK(ex.kind() == ErrorKind::missing_required_input);
            CHECK(ex.detail() == "msg");
        }
        CHECK(commands.calls.empty());
    }
}

TEST_CASE("process backend executes the stored script with injected env") {
    TempDir tmp;
    ToolConfig cfg = testsupport::test_config(tmp);
    Runner runner(cfg, system_command_runner());

    CatalogEntry entry = entry_with("util-env-dump", "0.1",
                                    {input("msg", "hi"), input("data_dir", "../data/")});
    store_script(cfg, entry,
                 "import os, sys\n"
                 "print(os.environ['msg'])\n"
                 "print(os.environ['data_dir'])\n"
                 "sys.exit(int(os.environ.get('rc', '0')))\n");

    RunRequest req;
    req.entry = entry;
    req.params = {{"msg", "hello"}};
    req.data_dir_host = tmp.path() / "data";
    std::filesystem::create_directories(req.data_dir_host);
    req.backend = {BackendKind::process, ""};

    RunResult result = runner.run_operator(req);
    CHECK(result.exit_code == 0);
    std::istringstream out(result.stdout_log);
    std::string line1, line2;
    std::getline(out, line1);
    std::getline(out, line2);
    CHECK(line1 == "hello");
    CHECK(line2 == req.data_dir_host.string() + "/");

    // Operator exit codes surface unchanged.
    CatalogEntry failing = entry_with("util-fail", "0.1", {input("rc", "0")});
    store_script(cfg, failing, "import os, sys\nsys.exit(int(os.environ.get('rc', '0')))\n");
    RunRequest fail_req;
    fail_req.entry = failing;
    fail_req.params = {{"rc", "3"}};
    fail_req.data_dir_host = req.data_dir_host;
    fail_req.backend = {BackendKind::process, ""};
    CHECK(runner.run_operator(fail_req).exit_code == 3);

    // Missing stored artifacts are their own failure class.
    CatalogEntry ghost = entry_with("util-ghost", "0.1", {});
    RunRequest ghost_req;
    ghost_req.entry = ghost;
    ghost_req.data_dir_host = req.data_dir_host;
    ghost_req.backend = {BackendKind::process, ""};
    try {
        runner.run_operator(ghost_req);
        FAIL("expected an error");
    } catch (const Error& ex) {
        CHECK(ex.kind() == ErrorKind::artifacts_missing);
    }
}

TEST_CASE("stream bridge hands the consumer a port and the producer a url") {
    TempDir tmp;
    ToolConfig cfg = testsupport::test_config(tmp);
    Runner runner(cfg, system_command_runner());

    Parameter stream_flag = input("claimed_stream", "true");

    CatalogEntry consumer = entry_with("stream-sink", "0.1", {stream_flag});
    store_script(cfg, consumer,
                 "import os, socket\n"
                 "port = int(os.environ['claimed_stream_port'])\n"
                 "srv = socket.socket()\n"
                 "srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)\n"
                 "srv.bind(('127.0.0.1', port))\n"
                 "srv.listen(1)\n"
                 "while True:\n"
                 "    conn, _ = srv.accept()\n"
                 "    data = conn.recv(4096)\n"
                 "    conn.close()\n"
                 "    if data:\n"  // readiness probes connect and send nothing
                 "        break\n"
                 "with open(os.environ['data_dir'] + 'received.txt', 'wb') as f:\n"
                 "    f.write(data)\n");

    CatalogEntry producer = entry_with("stream-source", "0.1", {stream_flag});
    store_script(cfg, producer,
                 "import os, socket\n"
                 "from urllib.parse import urlparse\n"
                 "url = urlparse(os.environ['claimed_stream_url'])\n"
                 "c = socket.create_connection((url.hostname, url.port))\n"
                 "c.sendall(b'streamed-bytes')\n"
                 "c.close()\n");

    auto data_dir = tmp.path() / "data";
    std::filesystem::create_directories(data_dir);

    RunRequest producer_req;
    producer_req.entry = producer;
    producer_req.data_dir_host = data_dir;
    producer_req.backend = {BackendKind::process, ""};
    producer_req.stream_role = StreamRole::producer;

    RunRequest consumer_req;
    consumer_req.entry = consumer;
    consumer_req.data_dir_host = data_dir;
    consumer_req.backend = {BackendKind::process, ""};
    consumer_req.stream_role = StreamRole::consumer;

    auto [producer_run, consumer_run] = runner.bridge_stream(producer_req, consumer_req);
    CHECK(producer_run.exit_code == 0);
    CHECK(consumer_run.exit_code == 0);
    CHECK(testsupport::read_file(data_dir / "received.txt") == "streamed-bytes");
}

TEST_CASE("a consumer that never listens trips the accept timeout") {
    TempDir tmp;
    ToolConfig cfg = testsupport::test_config(tmp);
    RecorderRunner commands;  // nothing actually listens
    Runner runner(cfg, commands);
    runner.stream_accept_timeout = std::chrono::milliseconds(300);

    Parameter stream_flag = input("claimed_stream", "true");
    RunRequest producer_req;
    producer_req.entry = entry_with("stream-source", "0.1", {stream_flag});
    producer_req.data_dir_host = tmp.path() / "data";
    producer_req.backend = {BackendKind::process, ""};

    RunRequest consumer_req;
    consumer_req.entry = entry_with("stream-sink", "0.1", {stream_flag});
    consumer_req.data_dir_host = tmp.path() / "data";
    consumer_req.backend = {BackendKind::process, ""};

    // Scripts must exist for the launch plan even though the recorder
    // swallows the actual exec.
    store_script(cfg, producer_req.entry, "pass\n");
    store_script(cfg, consumer_req.entry, "pass\n");

    auto before = std::chrono::steady_clock::now();
    try {
        runner.bridge_stream(producer_req, consumer_req);
        FAIL("expected an error");
    } catch (const Error& ex) {
        CHECK(ex.kind() == ErrorKind::stream_timeout);
    }
    auto waited = std::chrono::steady_clock::now() - before;
    CHECK(waited >= std::chrono::milliseconds(250));
    CHECK(waited < std::chrono::milliseconds(5000));
    // The stuck consumer was terminated, and the producer never launched.
    CHECK(commands.terminated.size() == 1);
    CHECK(commands.calls.size() == 1);
}

TEST_CASE("operators must declare the stream parameter to join a bridge") {
    TempDir tmp;
    ToolConfig cfg = testsupport::test_config(tmp);
    RecorderRunner commands;
    Runner runner(cfg, commands);

    CatalogEntry plain = entry_with("util-echo", "0.1", {input("msg", "hi")});
    CHECK_FALSE(stream_capable(plain));
    CatalogEntry capable = entry_with("stream-sink", "0.1", {input("claimed_stream", "true")});
    CHECK(stream_capable(capable));
    CatalogEntry disabled = entry_with("stream-off", "0.1", {input("claimed_stream", "false")});
    CHECK_FALSE(stream_capable(disabled));

    RunRequest a;
    a.entry = plain;
    a.backend = {BackendKind::process, ""};
    RunRequest b;
    b.entry = capable;
    b.backend = {BackendKind::process, ""};
    try {
        runner.bridge_stream(a, b);
        FAIL("expected an error");
    } catch (const Error& ex) {
        CHECK(ex.kind() == ErrorKind::not_stream_capable);
    }
    CHECK(commands.calls.empty());
}

TEST_CASE("each run gets its own shared data dir") {
    TempDir tmp;
    ToolConfig cfg = testsupport::test_config(tmp);

    auto a = Runner::provision_data_dir(cfg, "run-a");
    auto b = Runner::provision_data_dir(cfg, "run-b");
    CHECK(a != b);
    CHECK(std::filesystem::is_directory(a));
    CHECK(std::filesystem::is_directory(b));
    CHECK(a == Runner::provision_data_dir(cfg, "run-a"));

    auto id1 = new_run_id();
    auto id2 = new_run_id();
    CHECK(id1 != id2);
    CHECK(id1.find(':') == std::string::npos);
}
