#include "forge/compiler.hpp"

#include "forge/common.hpp"

#include <atomic>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <map>
#include <mutex>
#include <sstream>

#include <fcntl.h>
#include <poll.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

namespace forge::corpus {

namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        words.push_back(word);
    }
    return words;
}

bool is_executable_file(const std::string& path) {
    struct stat st{};
    return ::stat(path.c_str(), &st) == 0 && S_ISREG(st.st_mode) &&
           ::access(path.c_str(), X_OK) == 0;
}

} // namespace

std::optional<std::string> resolve_executable(const std::string& name) {
    if (name.find('/') != std::string::npos) {
        if (is_executable_file(name)) {
            return name;
        }
        return std::nullopt;
    }
    const char* path_env = std::getenv("PATH");
    if (path_env == nullptr) {
        return std::nullopt;
    }
    std::string paths(path_env);
    std::size_t start = 0;
    while (start <= paths.size()) {
        std::size_t sep = paths.find(':', start);
        std::string dir = paths.substr(start, sep == std::string::npos ? std::string::npos
                                                                       : sep - start);
        if (!dir.empty()) {
            std::string candidate = dir + "/" + name;
            if (is_executable_file(candidate)) {
                return candidate;
            }
        }
        if (sep == std::string::npos) {
            break;
        }
        start = sep + 1;
    }
    return std::nullopt;
}

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& working_dir,
                          std::chrono::milliseconds timeout) {
    if (argv.empty()) {
        throw ConfigError("run_process: empty argv");
    }
    int out_pipe[2];
    int err_pipe[2];
    if (::pipe(out_pipe) != 0 || ::pipe(err_pipe) != 0) {
        throw IoError("pipe() failed");
    }

    pid_t pid = ::fork();
    if (pid < 0) {
        throw IoError("fork() failed");
    }
    if (pid == 0) {
        // child
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        if (!working_dir.empty() && ::chdir(working_dir.c_str()) != 0) {
            ::_exit(126);
        }
        std::vector<char*> cargv;
        cargv.reserve(argv.size() + 1);
        for (const auto& arg : argv) {
            cargv.push_back(const_cast<char*>(arg.c_str()));
        }
        cargv.push_back(nullptr);
        ::execvp(cargv[0], cargv.data());
        ::_exit(127);
    }

    ::close(out_pipe[1]);
    ::close(err_pipe[1]);
    ::fcntl(out_pipe[0], F_SETFL, O_NONBLOCK);
    ::fcntl(err_pipe[0], F_SETFL, O_NONBLOCK);

    ProcessResult result;
    auto deadline = std::chrono::steady_clock::now() + timeout;
    bool out_open = true;
    bool err_open = true;
    char buf[4096];

    auto drain = [&](int fd, std::string& sink, bool& open_flag) {
        for (;;) {
            ssize_t n = ::read(fd, buf, sizeof(buf));
            if (n > 0) {
                sink.append(buf, static_cast<std::size_t>(n));
            } else if (n == 0) {
                open_flag = false;
                return;
            } else {
                return; // EAGAIN
            }
        }
    };

    while (out_open || err_open) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            ::kill(pid, SIGKILL);
            break;
        }
        struct pollfd fds[2];
        nfds_t nfds = 0;
        if (out_open) {
            fds[nfds++] = {out_pipe[0], POLLIN, 0};
        }
        if (err_open) {
            fds[nfds++] = {err_pipe[0], POLLIN, 0};
        }
        int wait_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        int ready = ::poll(fds, nfds, std::max(1, std::min(wait_ms, 200)));
        if (ready < 0 && errno != EINTR) {
            break;
        }
        drain(out_pipe[0], result.out, out_open);
        drain(err_pipe[0], result.err, err_open);
    }
    // pick up whatever arrived before a timeout kill
    drain(out_pipe[0], result.out, out_open);
    drain(err_pipe[0], result.err, err_open);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);

    int status = 0;
    ::waitpid(pid, &status, 0);
    if (result.timed_out) {
        result.exit_code = -1;
    } else if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

std::vector<std::string> compiler_argv(const CompilerConfig& config) {
    std::vector<std::string> argv = split_words(config.command);
    if (argv.empty()) {
        throw ConfigError("compiler command is empty");
    }
    argv.push_back("-S");
    argv.push_back("-o");
    argv.push_back("-");
    for (const auto& flag : config.extra_flags) {
        argv.push_back(flag);
    }
    return argv;
}

std::string compiler_identity(const CompilerConfig& config) {
    static std::mutex cache_mutex;
    static std::map<std::string, std::string> cache;

    auto words = split_words(config.command);
    if (words.empty()) {
        throw ConfigError("compiler command is empty");
    }
    {
        std::lock_guard<std::mutex> lock(cache_mutex);
        if (auto it = cache.find(config.command); it != cache.end()) {
            return it->second;
        }
    }
    if (!resolve_executable(words.front())) {
        throw ConfigError("compiler binary not found on PATH: " + words.front());
    }
    auto probe = run_process({words.front(), "--version"}, "", std::chrono::milliseconds(10'000));
    std::string identity = words.front();
    if (probe.exit_code == 0) {
        auto lines = split_lines(probe.out);
        if (!lines.empty()) {
            identity = std::string(trim(lines.front()));
        }
    }
    std::lock_guard<std::mutex> lock(cache_mutex);
    cache[config.command] = identity;
    return identity;
}

namespace {

bool has_label_line(std::string_view asm_code) {
    for (const auto& line : split_lines(asm_code)) {
        std::string_view body = trim(line);
        if (!body.empty() && body.back() == ':') {
            return true;
        }
    }
    return false;
}

/// Scratch directory with a fixed-name source file; removed on destruction.
class ScratchDir {
public:
    ScratchDir() {
        static std::atomic<std::uint64_t> counter{0};
        auto base = std::filesystem::temp_directory_path();
        path_ = base / ("forge-cc-" + std::to_string(::getpid()) + "-" +
                        std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace

CompiledSample compile(const SourceSample& sample, const CompilerConfig& config) {
    CompiledSample result;
    result.source_id = sample.id;
    result.compiler_id = compiler_identity(config); // throws if the binary is missing

    auto argv = compiler_argv(config);
    result.flags.assign(argv.begin() + 1, argv.end());

    ScratchDir scratch;
    // Fixed basename keeps the .file directive identical across runs.
    write_text_file(scratch.path() / "sample.c", sample.c_code);
    argv.push_back("sample.c");

    auto proc = run_process(argv, scratch.path().string(), config.timeout);
    result.diagnostics = proc.err;
    if (proc.timed_out) {
        result.compile_ok = false;
        result.diagnostics += "\n[compile timed out after " +
                              std::to_string(config.timeout.count()) + " ms]";
        return result;
    }
    if (proc.exit_code != 0) {
        result.compile_ok = false;
        if (result.diagnostics.empty()) {
            result.diagnostics = "compiler exited with code " + std::to_string(proc.exit_code);
        }
        return result;
    }
    result.asm_code = proc.out;
    result.compile_ok = !result.asm_code.empty() && has_label_line(result.asm_code);
    if (!result.compile_ok && result.diagnostics.empty()) {
        result.diagnostics = "compiler produced no labeled assembly output";
    }
    return result;
}

std::vector<CompiledSample> compile_all(const std::vector<SourceSample>& samples,
                                        const CompilerConfig& config, int workers) {
    compiler_identity(config); // fail fast on a missing binary
    std::vector<CompiledSample> results(samples.size());
    parallel_for(samples.size(), workers,
                 [&](std::size_t i) { results[i] = compile(samples[i], config); });
    return results;
}

} // namespace forge::corpus
