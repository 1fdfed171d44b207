#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mudamp/common.hpp"

namespace mudamp {

// Shortest decimal form that round-trips to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

// FNV-1a 64-bit hash and its fixed-width hex form.
std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t v);

struct CsvTable {
    std::vector<std::string> comments;  // leading '#' lines, markers stripped
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

// Comma-separated, numeric cells only. Comment lines start with "# " and are
// emitted before the header.
void write_csv(const std::string& path, const std::vector<std::string>& comments,
               const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
CsvTable read_csv(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace mudamp
