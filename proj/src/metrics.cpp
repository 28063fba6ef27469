#include "dnp/metrics.hpp"

#include <fstream>

#include "dnp/errors.hpp"
#include "dnp/xyz.hpp"

namespace dnp {

void RunMetrics::add(std::size_t step, std::size_t epoch, std::string split, std::string metric,
                     double value) {
  if (!records_.empty() && step < records_.back().step) {
    throw Error("metric steps must not decrease");
  }
  records_.push_back({step, epoch, std::move(split), std::move(metric), value});
}

std::vector<MetricRecord> RunMetrics::select(const std::string& split, const std::string& metric) const {
  std::vector<MetricRecord> out;
  for (const auto& r : records_) {
    if (r.split == split && r.metric == metric) out.push_back(r);
  }
  return out;
}

std::string RunMetrics::to_csv() const {
  std::string out = "step,epoch,split,metric,value\n";
  for (const auto& r : records_) {
    out += std::to_string(r.step) + ',' + std::to_string(r.epoch) + ',' + r.split + ',' + r.metric +
           ',' + format_double(r.value) + '\n';
  }
  return out;
}

void RunMetrics::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_csv();
}

}  // namespace dnp
