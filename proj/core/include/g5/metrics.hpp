#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace g5 {

struct MetricRecord {
  std::string run;
  std::string graph;
  std::string task;
  std::int64_t epoch = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
};

// Writes records as CSV with header "run,graph,task,epoch,split,metric,value".
// Values print with %.17g so re-reading reproduces the doubles exactly;
// exporting the same records twice yields identical bytes.
void export_metrics(const std::vector<MetricRecord>& records,
                    const std::string& path);

// Appends to an existing file (creating it, with header, if absent).
void append_metrics(const std::vector<MetricRecord>& records,
                    const std::string& path);

std::vector<MetricRecord> read_metrics(const std::string& path);

}  // namespace g5
