// Small shared helpers: logging, atomic file output, seeded RNG streams and
// an index-ordered parallel loop.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <string_view>

namespace gskit {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream) pairs; SplitMix64 finalizer so that
/// adjacent seeds do not produce correlated engines.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream = 0);
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) { return Rng(mix_seed(seed, stream)); }

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Level from GSKIT_LOG (error | info | debug); defaults to info.
LogLevel log_level();
void log(LogLevel level, std::string_view message);

/// Writes `contents` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written by index so output order never depends on scheduling.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& body);

/// Keeps large tensor buffers on the heap instead of fresh mappings (glibc
/// only; a no-op elsewhere). Idempotent.
void keep_heap_buffers();

}  // namespace gskit
