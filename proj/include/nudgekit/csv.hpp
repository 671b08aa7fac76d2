#pragma once
// Minimal CSV reader/writer for the pipeline's tabular outputs. Handles
// RFC-4180 quoting on read; writes quote only when a field needs it.

#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nudgekit/common.hpp"

namespace nudgekit {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ParseError("csv: no column named '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    CsvTable t;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    return t;
}

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw IoError("cannot write " + path);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_escape(fields[i]);
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
};

}  // namespace nudgekit
