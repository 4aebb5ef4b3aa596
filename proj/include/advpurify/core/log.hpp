#pragma once

#include <fmt/format.h>

#include <filesystem>
#include <string_view>
#include <utility>

// Thin front end over spdlog. The sink side lives in its own translation
// unit, built without the tensor library's include paths, because libtorch
// ships a newer fmt than the system spdlog was built against.
namespace advpurify::log {

enum class Level { Debug, Info, Warn, Error };

void write(Level level, std::string_view message);
void set_level(Level level);
// Mirrors every later message into `path` (appending).
void add_file_sink(const std::filesystem::path& path);

template <typename... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::Debug, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::Info, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void warn(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::Warn, fmt::format(f, std::forward<Args>(args)...));
}

template <typename... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
  write(Level::Error, fmt::format(f, std::forward<Args>(args)...));
}

}  // namespace advpurify::log
