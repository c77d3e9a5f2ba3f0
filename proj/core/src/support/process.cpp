#include "rsmig/support/process.hpp"

#include "rsmig/support/error.hpp"

#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <map>

extern char** environ;

namespace rsmig {

namespace {

struct Pipe {
    int fds[2] = {-1, -1};
    Pipe() {
        if (pipe(fds) != 0) throw InfrastructureError(std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe() {
        close_read();
        close_write();
    }
    Pipe(const Pipe&) = delete;
    Pipe& operator=(const Pipe&) = delete;
    void close_read() {
        if (fds[0] >= 0) ::close(fds[0]);
        fds[0] = -1;
    }
    void close_write() {
        if (fds[1] >= 0) ::close(fds[1]);
        fds[1] = -1;
    }
};

std::vector<std::string> merged_environment(const std::vector<std::pair<std::string, std::string>>& extra) {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        auto eq = kv.find('=');
        if (eq == std::string_view::npos) continue;
        env[std::string(kv.substr(0, eq))] = std::string(kv.substr(eq + 1));
    }
    for (const auto& [k, v] : extra) env[k] = v;
    std::vector<std::string> out;
    out.reserve(env.size());
    for (const auto& [k, v] : env) out.push_back(k + "=" + v);
    return out;
}

}  // namespace

ProcessResult run_process(std::span<const std::string> argv, const ProcessOptions& options) {
    if (argv.empty()) throw InfrastructureError("run_process: empty argv");

    Pipe in, out, err;
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in.fds[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out.fds[1], STDOUT_FILENO);
    posix_spawn_file_actions_adddup2(&actions, err.fds[1], STDERR_FILENO);
    for (int fd : {in.fds[0], in.fds[1], out.fds[0], out.fds[1], err.fds[0], err.fds[1]})
        posix_spawn_file_actions_addclose(&actions, fd);
    if (!options.cwd.empty()) posix_spawn_file_actions_addchdir_np(&actions, options.cwd.c_str());

    std::vector<char*> c_argv;
    for (const auto& a : argv) c_argv.push_back(const_cast<char*>(a.c_str()));
    c_argv.push_back(nullptr);
    auto env_strings = merged_environment(options.env);
    std::vector<char*> c_env;
    for (auto& e : env_strings) c_env.push_back(e.data());
    c_env.push_back(nullptr);

    pid_t pid = 0;
    int rc = posix_spawnp(&pid, c_argv[0], &actions, nullptr, c_argv.data(), c_env.data());
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) throw InfrastructureError("cannot run '" + argv[0] + "': " + std::strerror(rc));

    in.close_read();
    out.close_write();
    err.close_write();

    std::string_view pending_input = options.stdin_text ? std::string_view(*options.stdin_text) : std::string_view{};
    if (pending_input.empty()) in.close_write();

    ProcessResult result;
    std::array<char, 65536> buf{};
    while (out.fds[0] >= 0 || err.fds[0] >= 0) {
        std::vector<pollfd> fds;
        if (out.fds[0] >= 0) fds.push_back({out.fds[0], POLLIN, 0});
        if (err.fds[0] >= 0) fds.push_back({err.fds[0], POLLIN, 0});
        if (in.fds[1] >= 0) fds.push_back({in.fds[1], POLLOUT, 0});
        if (poll(fds.data(), fds.size(), -1) < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (const auto& p : fds) {
            if (p.revents == 0) continue;
            if (p.fd == in.fds[1]) {
                ssize_t n = ::write(p.fd, pending_input.data(), pending_input.size());
                if (n > 0) pending_input.remove_prefix(static_cast<size_t>(n));
                if (n < 0 || pending_input.empty()) in.close_write();
                continue;
            }
            ssize_t n = ::read(p.fd, buf.data(), buf.size());
            if (n > 0) {
                (p.fd == out.fds[0] ? result.out : result.err).append(buf.data(), static_cast<size_t>(n));
            } else {
                if (p.fd == out.fds[0]) out.close_read();
                else err.close_read();
            }
        }
    }
    in.close_write();

    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    else if (WIFSIGNALED(status)) result.exit_code = 128 + WTERMSIG(status);
    // posix_spawnp reports exec failure as exit status 127 from the child.
    return result;
}

bool executable_available(const std::string& name) {
    if (name.find('/') != std::string::npos) return access(name.c_str(), X_OK) == 0;
    const char* path = std::getenv("PATH");
    if (!path) return false;
    std::string_view rest(path);
    while (!rest.empty()) {
        auto colon = rest.find(':');
        std::string dir(rest.substr(0, colon));
        if (!dir.empty() && access((dir + "/" + name).c_str(), X_OK) == 0) return true;
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return false;
}

}  // namespace rsmig
