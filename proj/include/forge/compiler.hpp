#pragma once

#include "forge/corpus.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace forge::corpus {

struct CompilerConfig {
    /// Compiler command; may contain leading wrapper words ("ccache gcc").
    std::string command = "gcc";
    /// Appended after the defaults. The defaults are exactly {"-S", "-o", "-"}:
    /// unoptimized assembly on stdout.
    std::vector<std::string> extra_flags;
    std::chrono::milliseconds timeout{30'000};
};

/// Command line (without the input file) this config produces.
std::vector<std::string> compiler_argv(const CompilerConfig& config);

/// "name version" string obtained from `<command> --version`, cached per
/// command. Throws ConfigError when the binary cannot be resolved.
std::string compiler_identity(const CompilerConfig& config);

/// Compiles one C function to x86-64 assembly text. Compile errors and
/// timeouts are reported in the result, never thrown; a missing compiler
/// binary throws ConfigError. The source is always written to a file named
/// `sample.c` inside a scratch directory so the emitted `.file` directive is
/// byte-stable across runs.
CompiledSample compile(const SourceSample& sample, const CompilerConfig& config);

/// Compiles all samples with up to `workers` processes in flight; the result
/// order matches the input order regardless of completion order.
std::vector<CompiledSample> compile_all(const std::vector<SourceSample>& samples,
                                        const CompilerConfig& config, int workers);

// --- low-level subprocess support (exposed for tests) ---

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
};

ProcessResult run_process(const std::vector<std::string>& argv, const std::string& working_dir,
                          std::chrono::milliseconds timeout);

/// Absolute path of an executable resolved via PATH, or nullopt.
std::optional<std::string> resolve_executable(const std::string& name);

} // namespace forge::corpus
