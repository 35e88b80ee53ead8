#pragma once

#include "adtp/series.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace adtp {

/// CSV layouts understood by the reader and produced by the writer.
///
///   kpi       timestamp,value,label,KPI ID   (many series per file)
///   yahoo     timestamp,value,is_anomaly     (one series per file)
///   repaired  timestamp,value,label,filled   (audit dump after repair)
enum class CsvLayout { kpi, yahoo, repaired };

/// Parses any of the layouts above; columns are located by header name, so
/// column order does not matter. Rows are grouped by `KPI ID` when present,
/// sorted by timestamp, and stride gaps are materialized as missing (NaN)
/// points. A `filled` column is read back into the missing mask with the
/// value kept, which makes repair idempotent on its own output.
///
/// `granularity` overrides the one inferred from the stride (60 s minute,
/// 3600 s hour, index stride 1 hour). Errors name the offending line.
std::vector<TimeSeries> read_series_csv(
    std::istream& in, const std::string& source_name,
    std::optional<Granularity> granularity = std::nullopt);

std::vector<TimeSeries> read_series_csv(
    const std::filesystem::path& path,
    std::optional<Granularity> granularity = std::nullopt);

void write_series_csv(std::ostream& out, const TimeSeries& series,
                      CsvLayout layout);

void write_series_csv(const std::filesystem::path& path,
                      const TimeSeries& series, CsvLayout layout);

} // namespace adtp
