#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pvvolt/errors.hpp"
#include "pvvolt/matrix.hpp"

namespace pvvolt {

enum class Unit { kilowatt, per_unit_volt };

// One consumer's per-minute measurements: rows are days, columns minutes.
struct DayMatrix {
    Matrix values;
    Unit unit = Unit::kilowatt;

    std::size_t days() const { return values.rows(); }
    std::size_t minutes() const { return values.cols(); }

    bool operator==(const DayMatrix&) const = default;
};

// Per-consumer blocks appended vertically; block_offsets maps consumer k
// to its half-open row range in `values`.
struct StackedMatrix {
    Matrix values;
    std::vector<std::pair<std::size_t, std::size_t>> block_offsets;

    std::size_t consumer_count() const { return block_offsets.size(); }
};

inline void validate_day_matrix(const DayMatrix& m, const std::string& where) {
    if (m.days() < 1 || m.minutes() < 2) {
        throw ShapeError(where + ": need at least 1 day and 2 minutes, got " +
                         std::to_string(m.days()) + "x" + std::to_string(m.minutes()));
    }
    for (std::size_t i = 0; i < m.days(); ++i) {
        for (double v : m.values.row(i)) {
            if (!std::isfinite(v)) {
                throw DataError(where + ": non-finite entry in day " + std::to_string(i));
            }
        }
    }
}

// Fixed-point decimal with at least `sig` significant digits; used for all
// CSV output so files are byte-stable across runs.
inline std::string format_fixed(double v, int sig = 12) {
    if (v == 0.0) return "0";
    const int magnitude = static_cast<int>(std::floor(std::log10(std::fabs(v))));
    int decimals = sig - 1 - magnitude;
    decimals = std::clamp(decimals, 0, 30);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

namespace detail {

inline double parse_cell(const std::string& token, std::size_t row, std::size_t col,
                         const std::string& where) {
    const char* begin = token.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        throw ParseError(where + ": row " + std::to_string(row + 1) + " column " +
                         std::to_string(col + 1) + ": cannot parse '" + token + "'");
    }
    if (!std::isfinite(v)) {
        throw ParseError(where + ": row " + std::to_string(row + 1) + " column " +
                         std::to_string(col + 1) + ": non-finite value");
    }
    return v;
}

}  // namespace detail

// Reads a headerless rectangular CSV of doubles. When `max_aggregate_group`
// is g > 1, each group of g consecutive columns collapses to its maximum;
// this is the ingestion pre-step for sub-minute voltage data, where the
// stored value is the largest reading in the minute.
inline DayMatrix load_day_matrix(const std::filesystem::path& path,
                                 std::size_t expected_minutes, Unit unit,
                                 std::size_t max_aggregate_group = 1) {
    const std::string where = "dataset.load_day_matrix";
    if (max_aggregate_group < 1) {
        throw ConfigError(where + ": max_aggregate_group must be >= 1");
    }
    std::ifstream in(path);
    if (!in) {
        throw DataError(where + ": cannot open '" + path.string() + "'");
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t row_index = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
        std::vector<double> row;
        std::size_t start = 0;
        std::size_t col = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            const std::string token =
                line.substr(start, comma == std::string::npos ? std::string::npos
                                                              : comma - start);
            row.push_back(detail::parse_cell(token, row_index, col, where));
            ++col;
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ShapeError(where + ": ragged row " + std::to_string(row_index + 1) +
                             " has " + std::to_string(row.size()) + " columns, expected " +
                             std::to_string(rows.front().size()));
        }
        rows.push_back(std::move(row));
        ++row_index;
    }
    if (rows.empty()) {
        throw DataError(where + ": '" + path.string() + "' is empty");
    }
    if (max_aggregate_group > 1) {
        const std::size_t raw_cols = rows.front().size();
        if (raw_cols % max_aggregate_group != 0) {
            throw ShapeError(where + ": " + std::to_string(raw_cols) +
                             " columns not divisible by aggregation group " +
                             std::to_string(max_aggregate_group));
        }
        for (auto& row : rows) {
            std::vector<double> reduced(raw_cols / max_aggregate_group);
            for (std::size_t j = 0; j < reduced.size(); ++j) {
                double best = row[j * max_aggregate_group];
                for (std::size_t g = 1; g < max_aggregate_group; ++g) {
                    best = std::max(best, row[j * max_aggregate_group + g]);
                }
                reduced[j] = best;
            }
            row = std::move(reduced);
        }
    }
    if (rows.front().size() != expected_minutes) {
        throw ShapeError(where + ": expected " + std::to_string(expected_minutes) +
                         " columns, found " + std::to_string(rows.front().size()));
    }
    DayMatrix out{Matrix::from_rows(rows), unit};
    validate_day_matrix(out, where);
    return out;
}

inline void save_day_matrix(const std::filesystem::path& path, const DayMatrix& m) {
    const std::string where = "dataset.save_day_matrix";
    validate_day_matrix(m, where);
    std::ofstream out(path);
    if (!out) {
        throw DataError(where + ": cannot open '" + path.string() + "' for writing");
    }
    for (std::size_t i = 0; i < m.days(); ++i) {
        const auto row = m.values.row(i);
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) out << ',';
            out << format_fixed(row[j]);
        }
        out << '\n';
    }
    if (!out) {
        throw DataError(where + ": write to '" + path.string() + "' failed");
    }
}

// Appends the matrices vertically, one contiguous block per consumer.
inline StackedMatrix stack(std::span<const DayMatrix> matrices) {
    const std::string where = "dataset.stack";
    if (matrices.empty()) {
        throw ShapeError(where + ": no matrices to stack");
    }
    const std::size_t n = matrices.front().minutes();
    const Unit unit = matrices.front().unit;
    std::size_t total_rows = 0;
    for (const auto& m : matrices) {
        if (m.minutes() != n) {
            throw ShapeError(where + ": column count mismatch, " +
                             std::to_string(m.minutes()) + " vs " + std::to_string(n));
        }
        if (m.unit != unit) {
            throw ShapeError(where + ": unit mismatch between blocks");
        }
        total_rows += m.days();
    }
    StackedMatrix out;
    out.values = Matrix(total_rows, n);
    std::size_t offset = 0;
    for (const auto& m : matrices) {
        for (std::size_t i = 0; i < m.days(); ++i) {
            std::copy(m.values.row(i).begin(), m.values.row(i).end(),
                      out.values.row(offset + i).begin());
        }
        out.block_offsets.emplace_back(offset, offset + m.days());
        offset += m.days();
    }
    return out;
}

// Keeps columns [start_minute, end_minute); day indexing is preserved.
inline DayMatrix restrict_to_window(const DayMatrix& m, std::size_t start_minute,
                                    std::size_t end_minute) {
    const std::string where = "dataset.restrict_to_window";
    if (start_minute >= end_minute || end_minute > m.minutes()) {
        throw RangeError(where + ": invalid window [" + std::to_string(start_minute) +
                         ", " + std::to_string(end_minute) + ") for " +
                         std::to_string(m.minutes()) + " minutes");
    }
    DayMatrix out{Matrix(m.days(), end_minute - start_minute), m.unit};
    for (std::size_t i = 0; i < m.days(); ++i) {
        for (std::size_t j = start_minute; j < end_minute; ++j) {
            out.values(i, j - start_minute) = m.values(i, j);
        }
    }
    return out;
}

}  // namespace pvvolt
