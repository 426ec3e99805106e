#pragma once

#include <istream>
#include <string>
#include <vector>

#include "ispw/survival.hpp"

namespace ispw {

struct CsvOptions {
    bool add_intercept = true;
    std::string time_column = "time";
    std::string status_column = "status";  // 1 = event, 0 = censored
    std::string id_column = "id";
};

struct CsvData {
    std::vector<SurvivalRecord> records;
    std::vector<std::string> covariate_names;  // "intercept" first when added
    bool has_intercept = false;
};

CsvData parse_csv(std::istream& in, const CsvOptions& options = {});
CsvData ingest_csv(const std::string& path, const CsvOptions& options = {});

}  // namespace ispw
