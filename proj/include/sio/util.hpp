// Small shared utilities: logging, deterministic float formatting,
// string helpers and a fixed-partition parallel map.

#ifndef SIO_UTIL_HPP
#define SIO_UTIL_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace sio {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2, Debug = 3 };

/// Current verbosity, initialized once from the SIO_LOG environment variable
/// (quiet|warn|info|debug, default info).
LogLevel log_level();

void log_warn(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

/// Shortest round-trippable decimal form of a double ("%.17g").
/// All text artifacts use this so that save -> load -> save is byte-exact.
std::string fmt_double(double v);

/// Parse a double, rejecting trailing garbage. Throws std::invalid_argument.
double parse_double(const std::string& s);

std::vector<std::string> split_ws(const std::string& line);

/// Runs fn(i) for i in [0, n). Work is split into contiguous index ranges so
/// results written to per-index slots are identical for any thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace sio

#endif  // SIO_UTIL_HPP
