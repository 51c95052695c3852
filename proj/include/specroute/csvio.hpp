#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "specroute/errors.hpp"

namespace specroute {

// FNV-1a, printed as 16 hex digits. Rows carry this hash of their fully
// resolved configuration so a reader can tell two runs apart at a glance.
inline std::string content_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// Writes rows to <path>.tmp and renames into place on close, so readers never
// observe a half-written file. Abandoning the writer (error unwind) leaves the
// old file untouched.
class CsvWriter {
public:
    CsvWriter(std::string path, const std::vector<std::string>& columns)
        : path_(std::move(path)), tmp_(path_ + ".tmp"), out_(tmp_, std::ios::trunc) {
        if (!out_) throw IoError("cannot open for write: " + tmp_);
        for (std::size_t i = 0; i < columns.size(); ++i)
            out_ << (i ? "," : "") << columns[i];
        out_ << '\n';
        n_cols_ = columns.size();
    }

    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != n_cols_)
            throw ArgumentError("CsvWriter: row width " + std::to_string(fields.size()) +
                                " != header width " + std::to_string(n_cols_));
        for (std::size_t i = 0; i < fields.size(); ++i)
            out_ << (i ? "," : "") << fields[i];
        out_ << '\n';
        ++n_rows_;
    }

    long rows_written() const { return n_rows_; }

    void close() {
        if (closed_) return;
        out_.flush();
        if (!out_) throw IoError("write failed: " + tmp_);
        out_.close();
        if (std::rename(tmp_.c_str(), path_.c_str()) != 0)
            throw IoError("rename failed: " + tmp_ + " -> " + path_);
        closed_ = true;
    }

    ~CsvWriter() {
        if (!closed_) {
            out_.close();
            std::remove(tmp_.c_str());  // abandoned: keep the previous file
        }
    }

private:
    std::string path_, tmp_;
    std::ofstream out_;
    std::size_t n_cols_ = 0;
    long n_rows_ = 0;
    bool closed_ = false;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<int>(i);
        throw ArgumentError("CsvTable: no column named " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) fields.push_back(cell);
        if (line.back() == ',') fields.emplace_back();
        if (first) {
            table.columns = std::move(fields);
            first = false;
        } else {
            if (fields.size() != table.columns.size())
                throw IoError("ragged csv row in " + path);
            table.rows.push_back(std::move(fields));
        }
    }
    return table;
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
}

inline void write_marker(const std::string& path, const std::string& message) {
    std::ofstream out(path, std::ios::trunc);
    out << message << '\n';
}

}  // namespace specroute
