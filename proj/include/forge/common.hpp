#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace forge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unusable configuration or environment (missing binary, bad flag combo).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Bad user input that should map to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Hashing

std::uint64_t fnv1a64(std::string_view data);
std::uint64_t splitmix64(std::uint64_t x);

/// Incremental SHA-256 (FIPS 180-4). Self-contained so artifact hashes do not
/// depend on a crypto library being present.
class Sha256 {
public:
    Sha256();
    void update(const void* data, std::size_t len);
    void update(std::string_view data) { update(data.data(), data.size()); }
    /// Finalizes and returns the 64-char lowercase hex digest. The object
    /// must not be updated afterwards.
    std::string hex_digest();

private:
    void process_block(const std::uint8_t* block);
    std::uint32_t state_[8];
    std::uint8_t buffer_[64];
    std::size_t buffer_len_ = 0;
    std::uint64_t total_bytes_ = 0;
};

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// All randomness in the pipeline flows through this generator so results are
// reproducible across platforms and standard-library versions (std::shuffle
// and std::*_distribution are implementation-defined).

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0x9e3779b97f4a7c15ULL)) {}

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double next_double();
    /// Uniform in [0, bound). bound must be > 0. Uses rejection sampling, no
    /// modulo bias.
    std::uint64_t bounded(std::uint64_t bound);
    /// Standard normal via Box-Muller.
    double gaussian();

    template <typename T>
    void shuffle(std::vector<T>& items) {
        // Fisher-Yates, fixed algorithm for cross-platform determinism.
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(bounded(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Numeric formatting

/// Round half away from zero at `digits` decimal places.
double round_half_up(double value, int digits);
/// Fixed-point string with round-half-up, e.g. format_fixed(85.945, 2) == "85.95"
/// (printf would use the FP rounding mode instead).
std::string format_fixed(double value, int digits);

// ---------------------------------------------------------------------------
// Strings

std::string to_lower(std::string_view text);
std::string_view trim(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);
std::string replace_all(std::string text, std::string_view needle, std::string_view replacement);
bool contains_ci(std::string_view haystack, std::string_view needle);

// ---------------------------------------------------------------------------
// Filesystem helpers

std::string read_text_file(const std::filesystem::path& path);
/// Writes via a temp file + rename so partially written artifacts never
/// appear under the final name.
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Calls fn(line_number, line) for every nonempty line. Line numbers are 1-based.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::size_t, std::string_view)>& fn);

// ---------------------------------------------------------------------------
// Parallel helpers

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Exceptions are
/// captured and the first one is rethrown after all workers join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

} // namespace forge
