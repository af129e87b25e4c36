#ifndef CLAIMED_TESTS_SUPPORT_HPP
#define CLAIMED_TESTS_SUPPORT_HPP

#include "claimed/config.hpp"
#include "claimed/process.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace testsupport {

inline std::filesystem::path fixture_path(const std::string& name) {
    return std::filesystem::path(CLAIMED_FIXTURE_DIR) / name;
}

inline std::filesystem::path golden_path(const std::string& name) {
    return std::filesystem::path(CLAIMED_GOLDEN_DIR) / name;
}

inline std::filesystem::path oracle_path(const std::string& name) {
    return std::filesystem::path(CLAIMED_ORACLE_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "claimed-test-XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
        path_ = buf.data();
    }

    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// A tool configuration rooted inside a temp dir, defaulting to the process
// backend so tests never touch a container daemon.
inline claimed::ToolConfig test_config(const TempDir& tmp) {
    claimed::ToolConfig cfg;
    cfg.home = tmp.path() / "home";
    cfg.runtime_override = "process";
    return cfg;
}

struct RecordedCall {
    std::vector<std::string> argv;
    claimed::EnvOverrides env;
    bool forward_output = false;
};

// Scripted stand-in for the system runner: every spawn is recorded and
// answered by the handler (default: immediate success).
class RecorderRunner : public claimed::CommandRunner {
public:
    using Handler =
        std::function<claimed::ExecResult(const std::vector<std::string>&, const claimed::EnvOverrides&)>;

    std::vector<RecordedCall> calls;
    std::vector<std::vector<std::string>> terminated;
    Handler handler;

    class ScriptedChild : public claimed::ChildHandle {
    public:
        ScriptedChild(claimed::ExecResult result, RecorderRunner* owner,
                      std::vector<std::string> argv)
            : result_(std::move(result)), owner_(owner), argv_(std::move(argv)) {}

        claimed::ExecResult wait() override { return result_; }

        void terminate() override { owner_->terminated.push_back(argv_); }

    private:
        claimed::ExecResult result_;
        RecorderRunner* owner_;
        std::vector<std::string> argv_;
    };

    std::unique_ptr<claimed::ChildHandle> spawn(const std::vector<std::string>& argv,
                                                const claimed::EnvOverrides& env,
                                                bool forward_output) override {
        calls.push_back({argv, env, forward_output});
        claimed::ExecResult result;
        result.exit_code = 0;
        if (handler) result = handler(argv, env);
        return std::make_unique<ScriptedChild>(std::move(result), this, argv);
    }
};

// Assembles a minimal nbformat document from (cell_type, text) pairs.
inline std::string notebook_json(
    const std::vector<std::pair<std::string, std::string>>& cells) {
    nlohmann::json doc;
    doc["cells"] = nlohmann::json::array();
    for (const auto& [type, text] : cells) {
        nlohmann::json cell;
        cell["cell_type"] = type;
        cell["metadata"] = nlohmann::json::object();
        if (type == "code") {
            cell["execution_count"] = nullptr;
            cell["outputs"] = nlohmann::json::array();
        }
        cell["source"] = text;
        doc["cells"].push_back(cell);
    }
    doc["metadata"] = nlohmann::json::object();
    doc["nbformat"] = 4;
    doc["nbformat_minor"] = 5;
    return doc.dump(1);
}

// Runs the execution oracle over a batch of interface-cell texts.
inline nlohmann::json run_env_probe_oracle(const std::vector<std::string>& codes) {
    TempDir tmp;
    nlohmann::json batch;
    batch["cases"] = nlohmann::json::array();
    for (std::size_t i = 0; i < codes.size(); ++i) {
        batch["cases"].push_back({{"id", "case-" + std::to_string(i)}, {"code", codes[i]}});
    }
    auto in_file = tmp.path() / "in.json";
    auto out_file = tmp.path() / "out.json";
    write_file(in_file, batch.dump());

    claimed::ExecResult run = claimed::system_command_runner().run(
        {"python3", oracle_path("env_probe_oracle.py").string(), in_file.string(),
         out_file.string()},
        {}, false);
    if (run.exit_code != 0) {
        throw std::runtime_error("oracle failed: " + run.stderr_text);
    }
    return nlohmann::json::parse(read_file(out_file));
}

} // namespace testsupport

#endif
