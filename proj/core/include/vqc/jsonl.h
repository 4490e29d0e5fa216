#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace vqc {

// Calls fn(line, 1-based line number) for every line, including blank ones.
// Throws Error(kIo) if the file cannot be opened.
void for_each_line(const std::string& path,
                   const std::function<void(std::string_view, std::size_t)>& fn);

// Writes each string followed by '\n' through a temporary file that is
// renamed into place, so readers never see a half-written file.
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Appends line + '\n' and fsyncs before returning. Throws Error(kIo).
void append_line_durable(const std::string& path, std::string_view line);

void write_text(const std::string& path, std::string_view text);

std::string read_text(const std::string& path);

bool is_blank(std::string_view text);
std::string trim(std::string_view text);

}  // namespace vqc
