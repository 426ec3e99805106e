#include "ispw/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>

namespace ispw {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cur += c;
        } else if (c == ',' && !quoted) {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

std::optional<double> to_number(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

bool blank(const std::string& line) {
    return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

CsvData parse_csv(std::istream& in, const CsvOptions& options) {
    std::string line;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        header = split(line);
        break;
    }
    if (header.empty()) throw Error(ErrorCode::EmptyFile, "file has no header");

    auto find = [&](const std::string& name) -> std::optional<std::size_t> {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) return std::nullopt;
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto time_col = find(options.time_column);
    const auto status_col = find(options.status_column);
    if (!time_col) throw Error(ErrorCode::MissingColumn, "missing column '" + options.time_column + "'");
    if (!status_col) throw Error(ErrorCode::MissingColumn, "missing column '" + options.status_column + "'");
    const auto id_col = find(options.id_column);

    CsvData data;
    data.has_intercept = options.add_intercept;
    if (options.add_intercept) data.covariate_names.push_back("intercept");
    std::vector<std::size_t> cov_cols;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j == *time_col || j == *status_col || (id_col && j == *id_col)) continue;
        cov_cols.push_back(j);
        data.covariate_names.push_back(header[j]);
    }

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        const auto cells = split(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::InvalidDataset, "row " + std::to_string(row) + " has " +
                                                       std::to_string(cells.size()) + " cells, expected " +
                                                       std::to_string(header.size()));
        }
        auto number = [&](std::size_t col) {
            const auto v = to_number(cells[col]);
            if (!v || !std::isfinite(*v)) {
                throw Error(ErrorCode::NonNumericCell, "non-numeric cell at row " + std::to_string(row) +
                                                           ", column " + std::to_string(col + 1) + " ('" +
                                                           header[col] + "')");
            }
            return *v;
        };
        SurvivalRecord r;
        r.id = id_col ? cells[*id_col] : std::to_string(data.records.size() + 1);
        r.time = number(*time_col);
        const double status = number(*status_col);
        if (status != 0.0 && status != 1.0) {
            throw Error(ErrorCode::InvalidDataset, "status at row " + std::to_string(row) + " must be 0 or 1");
        }
        r.event = status == 1.0;
        if (options.add_intercept) r.covariates.push_back(1.0);
        for (auto j : cov_cols) r.covariates.push_back(number(j));
        data.records.push_back(std::move(r));
    }
    if (data.records.empty()) throw Error(ErrorCode::EmptyFile, "file has no data rows");
    return data;
}

CsvData ingest_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
    return parse_csv(in, options);
}

}  // namespace ispw
