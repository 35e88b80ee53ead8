#include "adtp/series_io.hpp"

#include "adtp/errors.hpp"
#include "adtp/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace adtp {

namespace {

struct Row {
  std::int64_t timestamp;
  double value;
  std::uint8_t label;
  std::uint8_t filled;
};

struct Columns {
  int timestamp = -1;
  int value = -1;
  int label = -1;
  int id = -1;
  int filled = -1;
};

Columns locate_columns(const std::vector<std::string>& header,
                       const std::string& source) {
  Columns c;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = header[i];
    const int idx = static_cast<int>(i);
    if (name == "timestamp") c.timestamp = idx;
    else if (name == "value") c.value = idx;
    else if (name == "label" || name == "is_anomaly") c.label = idx;
    else if (name == "KPI ID" || name == "kpi_id" || name == "series_id") c.id = idx;
    else if (name == "filled") c.filled = idx;
  }
  if (c.timestamp < 0 || c.value < 0)
    throw DataError(source + ":1: header must contain 'timestamp' and 'value'");
  return c;
}

[[noreturn]] void bad_row(const std::string& source, std::size_t line,
                          const std::string& what) {
  throw DataError(source + ":" + std::to_string(line) + ": " + what);
}

std::uint8_t parse_flag(const std::string& field, const std::string& source,
                        std::size_t line, const char* column) {
  if (field.empty() || field == "0") return 0;
  if (field == "1") return 1;
  bad_row(source, line, std::string("malformed ") + column + " '" + field + "'");
}

TimeSeries assemble(std::string id, std::vector<Row> rows,
                    const std::string& source,
                    std::optional<Granularity> granularity, bool labelled) {
  std::sort(rows.begin(), rows.end(),
            [](const Row& a, const Row& b) { return a.timestamp < b.timestamp; });
  std::int64_t stride = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto d = rows[i].timestamp - rows[i - 1].timestamp;
    if (d == 0)
      throw DataError(source + ": duplicate timestamp " +
                      std::to_string(rows[i].timestamp) + " in series '" + id + "'");
    stride = std::min(stride, d);
  }

  TimeSeries s;
  s.id = std::move(id);
  if (rows.size() < 2) {
    s.granularity = granularity.value_or(Granularity::minute);
  } else if (granularity) {
    s.granularity = *granularity;
    if (stride != stride_seconds(*granularity)) s.stride = stride;
  } else if (stride == 60) {
    s.granularity = Granularity::minute;
  } else if (stride == 3600) {
    s.granularity = Granularity::hour;
  } else if (stride == 1) {
    s.granularity = Granularity::hour;
    s.stride = 1;
  } else {
    throw DataError(source + ": unsupported sampling stride " +
                    std::to_string(stride) + " in series '" + s.id + "'");
  }

  const std::int64_t step = s.effective_stride();
  bool any_filled = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0) {
      const auto d = rows[i].timestamp - rows[i - 1].timestamp;
      if (d % step != 0)
        throw DataError(source + ": irregular sampling at timestamp " +
                        std::to_string(rows[i].timestamp) + " in series '" +
                        s.id + "'");
      for (std::int64_t t = rows[i - 1].timestamp + step; t < rows[i].timestamp;
           t += step) {
        s.timestamps.push_back(t);
        s.values.push_back(std::numeric_limits<double>::quiet_NaN());
        s.labels.push_back(0);
        s.missing.push_back(1);
      }
    }
    const Row& r = rows[i];
    s.timestamps.push_back(r.timestamp);
    s.values.push_back(r.value);
    s.labels.push_back(r.label);
    const bool absent = r.filled || !std::isfinite(r.value);
    s.missing.push_back(absent ? 1 : 0);
    any_filled = any_filled || absent;
  }
  if (!labelled) s.labels.clear();
  if (!any_filled && std::none_of(s.missing.begin(), s.missing.end(),
                                  [](std::uint8_t m) { return m != 0; })) {
    s.missing.clear();
  }
  return s;
}

} // namespace

std::vector<TimeSeries> read_series_csv(std::istream& in,
                                        const std::string& source_name,
                                        std::optional<Granularity> granularity) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(source_name + ": empty file");
  const auto header = split_csv_line(line);
  const Columns cols = locate_columns(header, source_name);
  const std::size_t width = header.size();

  std::map<std::string, std::vector<Row>> groups;
  std::vector<std::string> order;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != width)
      bad_row(source_name, lineno,
              "expected " + std::to_string(width) + " fields, got " +
                  std::to_string(fields.size()));
    Row r{};
    if (!parse_int(fields[static_cast<std::size_t>(cols.timestamp)], r.timestamp))
      bad_row(source_name, lineno, "malformed timestamp");
    const std::string& v = fields[static_cast<std::size_t>(cols.value)];
    if (v.empty() || v == "nan" || v == "NaN") {
      r.value = std::numeric_limits<double>::quiet_NaN();
    } else if (!parse_double(v, r.value) || !std::isfinite(r.value)) {
      bad_row(source_name, lineno, "malformed value '" + v + "'");
    }
    r.label = cols.label >= 0
                  ? parse_flag(fields[static_cast<std::size_t>(cols.label)],
                               source_name, lineno, "label")
                  : 0;
    r.filled = cols.filled >= 0
                   ? parse_flag(fields[static_cast<std::size_t>(cols.filled)],
                                source_name, lineno, "filled")
                   : 0;
    std::string id = cols.id >= 0 ? fields[static_cast<std::size_t>(cols.id)] : "";
    auto [it, inserted] = groups.try_emplace(id);
    if (inserted) order.push_back(id);
    it->second.push_back(r);
  }
  if (groups.empty()) throw DataError(source_name + ": no data rows");

  std::vector<TimeSeries> out;
  for (const auto& id : order) {
    std::string name = id.empty() ? std::filesystem::path(source_name).stem().string() : id;
    out.push_back(assemble(std::move(name), std::move(groups[id]), source_name,
                           granularity, cols.label >= 0));
  }
  return out;
}

std::vector<TimeSeries> read_series_csv(const std::filesystem::path& path,
                                        std::optional<Granularity> granularity) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_series_csv(in, path.string(), granularity);
}

void write_series_csv(std::ostream& out, const TimeSeries& series,
                      CsvLayout layout) {
  const auto label = [&](std::size_t i) {
    return series.has_labels() ? static_cast<int>(series.labels[i]) : 0;
  };
  const auto filled = [&](std::size_t i) {
    return i < series.missing.size() ? static_cast<int>(series.missing[i]) : 0;
  };
  switch (layout) {
  case CsvLayout::kpi: out << "timestamp,value,label,KPI ID\n"; break;
  case CsvLayout::yahoo: out << "timestamp,value,is_anomaly\n"; break;
  case CsvLayout::repaired: out << "timestamp,value,label,filled\n"; break;
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << series.timestamps[i] << ',';
    if (std::isfinite(series.values[i])) out << format_double(series.values[i]);
    out << ',' << label(i);
    if (layout == CsvLayout::kpi) out << ',' << series.id;
    if (layout == CsvLayout::repaired) out << ',' << filled(i);
    out << '\n';
  }
}

void write_series_csv(const std::filesystem::path& path,
                      const TimeSeries& series, CsvLayout layout) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_series_csv(out, series, layout);
}

} // namespace adtp
