#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "icpvi/errors.hpp"

namespace icpvi::detail {

/// One parsed CSV row plus the 1-based line it started on (for error messages).
struct CsvRow {
    std::vector<std::string> cells;
    std::size_t line = 0;
};

/// RFC 4180 style parser: quoted cells may contain commas, doubled quotes and
/// newlines. CRLF and LF are both accepted as row terminators.
inline std::vector<CsvRow> parse_csv(std::string_view text, const std::string& source_name) {
    std::vector<CsvRow> rows;
    std::vector<std::string> cells;
    std::string cell;
    bool in_quotes = false;
    bool row_has_data = false;
    std::size_t line = 1;
    std::size_t row_start_line = 1;

    auto end_cell = [&] {
        cells.push_back(std::move(cell));
        cell.clear();
    };
    auto end_row = [&] {
        end_cell();
        rows.push_back({std::move(cells), row_start_line});
        cells.clear();
        row_has_data = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!cell.empty()) {
                throw LoadError(source_name + ":" + std::to_string(line) + ": unexpected quote inside unquoted cell");
            }
            in_quotes = true;
            row_has_data = true;
            break;
        case ',':
            end_cell();
            row_has_data = true;
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break; // handled by the \n
            end_row();
            ++line;
            row_start_line = line;
            break;
        case '\n':
            end_row();
            ++line;
            row_start_line = line;
            break;
        default:
            cell.push_back(c);
            row_has_data = true;
            break;
        }
    }
    if (in_quotes) {
        throw LoadError(source_name + ": unterminated quoted cell (started near line " +
                        std::to_string(row_start_line) + ")");
    }
    if (row_has_data || !cells.empty() || !cell.empty()) end_row();
    return rows;
}

inline std::string csv_escape(std::string_view cell) {
    const bool needs_quotes = cell.find_first_of(",\"\r\n") != std::string_view::npos;
    if (!needs_quotes) return std::string(cell);
    std::string out;
    out.reserve(cell.size() + 2);
    out.push_back('"');
    for (char c : cell) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

} // namespace icpvi::detail
