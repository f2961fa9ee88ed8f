#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vtp/error.hpp"
#include "vtp/text_util.hpp"

namespace vtp::jsonl {

/// Decodes one document per non-blank line; decode errors carry the 1-based line number.
template <typename T, typename Decode>
std::vector<T> read(const std::filesystem::path& path, Decode decode) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        try {
            out.push_back(decode(nlohmann::json::parse(line)));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), line_no);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("malformed document: ") + e.what(), line_no);
        } catch (const ConfigError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return out;
}

template <typename T, typename Encode>
void write(const std::vector<T>& items, const std::filesystem::path& path, Encode encode) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& item : items) out << encode(item).dump() << '\n';
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace vtp::jsonl
