#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace admal {

using TimePoint = std::chrono::system_clock::time_point;
using Clock = std::function<TimePoint()>;

Clock system_clock();

// UTC RFC 3339 with millisecond precision, e.g. 2023-12-17T10:00:00.000Z.
std::string format_rfc3339(TimePoint tp);

// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

// Splits on '\n', strips a trailing '\r' from each line. A final empty
// segment after a terminating newline is not returned.
std::vector<std::string_view> split_lines(std::string_view text);

std::string_view trim(std::string_view s);

void ascii_lower_inplace(std::string& s);

// Structured JSONL logging on stderr.
enum class LogLevel { Debug, Info, Warn, Error };

void set_log_level(LogLevel level);
void log_event(LogLevel level, std::string_view event,
               std::initializer_list<std::pair<std::string_view, std::string>>
                   fields = {});

}  // namespace admal
