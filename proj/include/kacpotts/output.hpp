#ifndef KACPOTTS_OUTPUT_HPP
#define KACPOTTS_OUTPUT_HPP

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "profile_io.hpp"

namespace kacpotts {

inline constexpr const char* software_version = "1.0.0";

/// Rows of scalar cells under a fixed column list. Cells are numbers, strings,
/// booleans or null; a non-finite number is written as an empty CSV field and null in JSON.
class Table {
public:
    Table() = default;
    explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void add(std::vector<nlohmann::json> row) {
        require(row.size() == columns_.size(), "Table: row width differs from column count");
        rows_.push_back(std::move(row));
    }

    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::vector<nlohmann::json>>& rows() const { return rows_; }
    std::size_t size() const { return rows_.size(); }
    const nlohmann::json& at(std::size_t row, const std::string& column) const {
        for (std::size_t c = 0; c < columns_.size(); ++c) {
            if (columns_[c] == column) {
                return rows_.at(row)[c];
            }
        }
        throw InvalidArgument("Table: no column '" + column + "'");
    }

private:
    std::vector<std::string> columns_;
    std::vector<std::vector<nlohmann::json>> rows_;
};

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

inline std::string cell_text(const nlohmann::json& v) {
    if (v.is_null()) {
        return "";
    }
    if (v.is_boolean()) {
        return v.get<bool>() ? "true" : "false";
    }
    if (v.is_number_integer()) {
        return v.dump();
    }
    if (v.is_number_float()) {
        double x = v.get<double>();
        return std::isfinite(x) ? format_double(x) : "";
    }
    if (v.is_string()) {
        return csv_field(v.get<std::string>());
    }
    return csv_field(v.dump());
}

inline nlohmann::json json_cell(const nlohmann::json& v) {
    if (v.is_number_float() && !std::isfinite(v.get<double>())) {
        return nullptr;
    }
    return v;
}

}

inline std::string to_csv(const Table& t) {
    std::string out;
    for (std::size_t c = 0; c < t.columns().size(); ++c) {
        out += (c ? "," : "") + detail::csv_field(t.columns()[c]);
    }
    out += "\r\n";
    for (const auto& row : t.rows()) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            out += (c ? "," : "") + detail::cell_text(row[c]);
        }
        out += "\r\n";
    }
    return out;
}

inline nlohmann::json to_json(const Table& t, const std::string& name, const std::string& experiment) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : t.rows()) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& v : row) {
            r.push_back(detail::json_cell(v));
        }
        rows.push_back(std::move(r));
    }
    return {{"table", name}, {"experiment", experiment}, {"columns", t.columns()}, {"rows", rows}};
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = fnv1a64(bytes);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

class StageTimer {
public:
    void start(std::string stage) {
        stop();
        stage_ = std::move(stage);
        t0_ = std::chrono::steady_clock::now();
    }
    void stop() {
        if (!stage_.empty()) {
            std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0_;
            seconds_[stage_] += dt.count();
            stage_.clear();
        }
    }
    const std::map<std::string, double>& seconds() const { return seconds_; }

private:
    std::string stage_;
    std::chrono::steady_clock::time_point t0_;
    std::map<std::string, double> seconds_;
};

/// Everything an experiment produces, before it touches the filesystem.
struct ExperimentResult {
    std::map<std::string, Table> tables;
    nlohmann::json report = nlohmann::json::object();
    std::map<std::string, std::string> binaries;
};

struct WrittenFile {
    std::string name;
    std::string digest;
    std::size_t bytes = 0;
};

inline WrittenFile write_artifact(const std::filesystem::path& dir, const std::string& name, const std::string& bytes) {
    std::ofstream os(dir / name, std::ios::binary | std::ios::trunc);
    if (!os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        throw std::runtime_error("cannot write " + (dir / name).string());
    }
    return WrittenFile{name, fnv1a_hex(bytes), bytes.size()};
}

/// Deletes the files listed by an earlier manifest in `dir`, so a rerun leaves no orphans.
inline void remove_previous_outputs(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) {
        return;
    }
    auto old = nlohmann::json::parse(in, nullptr, false);
    if (old.is_discarded() || !old.contains("outputs") || !old["outputs"].is_array()) {
        return;
    }
    for (const auto& f : old["outputs"]) {
        if (f.contains("file") && f["file"].is_string()) {
            auto name = std::filesystem::path(f["file"].get<std::string>()).filename();
            std::error_code ec;
            std::filesystem::remove(dir / name, ec);
        }
    }
}

/// Writes tables (csv and/or json), the report, binary dumps and the manifest.
/// Result files depend only on (config, seed); timings live in the manifest alone.
inline std::vector<WrittenFile> emit_results(const ExperimentResult& res, const std::filesystem::path& dir,
                                             const std::vector<std::string>& formats, const nlohmann::json& resolved,
                                             std::uint64_t seed, const StageTimer& timer,
                                             const std::vector<std::pair<std::string, std::string>>& inputs = {}) {
    std::filesystem::create_directories(dir);
    remove_previous_outputs(dir);
    const std::string experiment = resolved.value("experiment", "");
    bool csv = false;
    bool js = false;
    for (const auto& f : formats) {
        csv = csv || f == "csv";
        js = js || f == "json";
    }
    std::vector<WrittenFile> files;
    for (const auto& [name, table] : res.tables) {
        if (csv) {
            files.push_back(write_artifact(dir, name + ".csv", to_csv(table)));
        }
        if (js) {
            files.push_back(write_artifact(dir, name + ".json", to_json(table, name, experiment).dump(2) + "\n"));
        }
    }
    files.push_back(write_artifact(dir, "report.json", res.report.dump(2) + "\n"));
    for (const auto& [name, bytes] : res.binaries) {
        files.push_back(write_artifact(dir, name, bytes));
    }
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : files) {
        out.push_back({{"file", f.name}, {"fnv1a64", f.digest}, {"bytes", f.bytes}});
    }
    nlohmann::json in = nlohmann::json::array();
    for (const auto& [path, bytes] : inputs) {
        in.push_back({{"file", path}, {"fnv1a64", fnv1a_hex(bytes)}, {"bytes", bytes.size()}});
    }
    nlohmann::json manifest = {{"software", "kacpotts"},
                               {"version", software_version},
                               {"experiment", experiment},
                               {"seed", seed},
                               {"config", resolved},
                               {"stage_seconds", timer.seconds()},
                               {"inputs", in},
                               {"outputs", out}};
    write_artifact(dir, "manifest.json", manifest.dump(2) + "\n");
    return files;
}

}

#endif
