#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace dnp {

struct MetricRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  std::string split;   // train, val, test
  std::string metric;  // loss, rmse_kcal_mol, mae_kcal_mol
  double value = 0.0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

// Ordered metric records of one run. Steps never decrease.
class RunMetrics {
 public:
  void add(std::size_t step, std::size_t epoch, std::string split, std::string metric, double value);
  const std::vector<MetricRecord>& records() const { return records_; }
  bool empty() const { return records_.empty(); }
  std::vector<MetricRecord> select(const std::string& split, const std::string& metric) const;

  // CSV with header step,epoch,split,metric,value; values printed with 17
  // significant digits.
  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;

  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;

 private:
  std::vector<MetricRecord> records_;
};

}  // namespace dnp
