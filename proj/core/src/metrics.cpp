#include "g5/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "g5/errors.hpp"

namespace g5 {

namespace {

constexpr const char* kHeader = "run,graph,task,epoch,split,metric,value";

void check_field(const std::string& s) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
    throw ContractError("metrics: field contains a delimiter: '" + s + "'");
}

void write_rows(std::ostream& os, const std::vector<MetricRecord>& records) {
  char buf[64];
  for (const auto& r : records) {
    check_field(r.run);
    check_field(r.graph);
    check_field(r.task);
    check_field(r.split);
    check_field(r.metric);
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    os << r.run << ',' << r.graph << ',' << r.task << ',' << r.epoch << ','
       << r.split << ',' << r.metric << ',' << buf << '\n';
  }
}

}  // namespace

void export_metrics(const std::vector<MetricRecord>& records,
                    const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << kHeader << '\n';
  write_rows(f, records);
  if (!f) throw IoError("write failed: " + path);
}

void append_metrics(const std::vector<MetricRecord>& records,
                    const std::string& path) {
  const bool fresh =
      !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot open for appending: " + path);
  if (fresh) f << kHeader << '\n';
  write_rows(f, records);
  if (!f) throw IoError("write failed: " + path);
}

std::vector<MetricRecord> read_metrics(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty metrics file");
  if (line != kHeader)
    throw ParseError(path + ": unexpected header '" + line + "'");
  std::vector<MetricRecord> out;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    MetricRecord r;
    std::string epoch, value;
    if (!std::getline(is, r.run, ',') || !std::getline(is, r.graph, ',') ||
        !std::getline(is, r.task, ',') || !std::getline(is, epoch, ',') ||
        !std::getline(is, r.split, ',') || !std::getline(is, r.metric, ',') ||
        !std::getline(is, value))
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 7 fields");
    try {
      r.epoch = std::stoll(epoch);
      r.value = std::stod(value);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": non-numeric epoch or value");
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace g5
