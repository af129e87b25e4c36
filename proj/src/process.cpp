#include "claimed/process.hpp"

#include "claimed/errors.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

namespace claimed {

namespace {

// Drains one pipe end into a string, optionally mirroring onto our own fd.
void pump(int fd, std::string* sink, int mirror_fd, std::mutex* sink_mutex) {
    char buf[4096];
    for (;;) {
        ssize_t n = ::read(fd, buf, sizeof(buf));
        if (n > 0) {
            {
                std::lock_guard<std::mutex> guard(*sink_mutex);
                sink->append(buf, static_cast<std::size_t>(n));
            }
            if (mirror_fd >= 0) {
                ssize_t off = 0;
                while (off < n) {
                    ssize_t w = ::write(mirror_fd, buf + off, static_cast<std::size_t>(n - off));
                    if (w <= 0) break;
                    off += w;
                }
            }
        } else if (n == 0) {
            break;
        } else if (errno != EINTR) {
            break;
        }
    }
    ::close(fd);
}

class ForkedChild : public ChildHandle {
public:
    ForkedChild(pid_t pid, int out_fd, int err_fd, bool forward)
        : pid_(pid), started_(std::chrono::steady_clock::now()) {
        out_thread_ = std::thread(pump, out_fd, &result_.stdout_text,
                                  forward ? STDOUT_FILENO : -1, &output_mutex_);
        err_thread_ = std::thread(pump, err_fd, &result_.stderr_text,
                                  forward ? STDERR_FILENO : -1, &output_mutex_);
    }

    ~ForkedChild() override {
        if (!reaped_) {
            terminate();
            wait();
        }
    }

    ExecResult wait() override {
        if (!reaped_) {
            if (out_thread_.joinable()) out_thread_.join();
            if (err_thread_.joinable()) err_thread_.join();
            int status = 0;
            while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {}
            if (WIFEXITED(status)) {
                result_.exit_code = WEXITSTATUS(status);
            } else if (WIFSIGNALED(status)) {
                result_.exit_code = 128 + WTERMSIG(status);
            } else {
                result_.exit_code = -1;
            }
            result_.duration_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
            reaped_ = true;
        }
        return result_;
    }

    void terminate() override {
        if (reaped_) return;
        ::kill(pid_, SIGTERM);
        // Grace period, then the hard way; wait() still reaps normally.
        for (int i = 0; i < 20; ++i) {
            int status = 0;
            pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_) {
                finish_reap(status);
                return;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
        ::kill(pid_, SIGKILL);
    }

private:
    void finish_reap(int status) {
        if (out_thread_.joinable()) out_thread_.join();
        if (err_thread_.joinable()) err_thread_.join();
        if (WIFEXITED(status)) {
            result_.exit_code = WEXITSTATUS(status);
        } else if (WIFSIGNALED(status)) {
            result_.exit_code = 128 + WTERMSIG(status);
        } else {
            result_.exit_code = -1;
        }
        result_.duration_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
        reaped_ = true;
    }

    pid_t pid_;
    std::chrono::steady_clock::time_point started_;
    std::thread out_thread_;
    std::thread err_thread_;
    std::mutex output_mutex_;
    ExecResult result_;
    bool reaped_ = false;
};

} // namespace

ExecResult CommandRunner::run(const std::vector<std::string>& argv, const EnvOverrides& env,
                              bool forward_output) {
    return spawn(argv, env, forward_output)->wait();
}

std::unique_ptr<ChildHandle> SystemCommandRunner::spawn(const std::vector<std::string>& argv,
                                                        const EnvOverrides& env,
                                                        bool forward_output) {
    if (argv.empty()) {
        throw Error(ErrorKind::io_error, "cannot spawn an empty command");
    }

    int out_pipe[2], err_pipe[2];
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) {
        throw Error(ErrorKind::io_error, std::string("pipe failed: ") + std::strerror(errno));
    }

    pid_t pid = ::fork();
    if (pid < 0) {
        throw Error(ErrorKind::io_error, std::string("fork failed: ") + std::strerror(errno));
    }

    if (pid == 0) {
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);

        for (const auto& [key, value] : env) {
            ::setenv(key.c_str(), value.c_str(), 1);
        }

        std::vector<char*> cargv;
        cargv.reserve(argv.size() + 1);
        for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
        cargv.push_back(nullptr);

        ::execvp(cargv[0], cargv.data());
        // exec failed; 127 is the conventional "command not found" code.
        std::fprintf(stderr, "exec %s: %s\n", cargv[0], std::strerror(errno));
        ::_exit(127);
    }

    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    return std::make_unique<ForkedChild>(pid, out_pipe[0], err_pipe[0], forward_output);
}

CommandRunner& system_command_runner() {
    static SystemCommandRunner runner;
    return runner;
}

} // namespace claimed
