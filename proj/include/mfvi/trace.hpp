#ifndef MFVI_TRACE_HPP
#define MFVI_TRACE_HPP

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfvi {

/// Per-step objective record of one training phase.
struct TrainingTrace {
  struct Row {
    std::string phase;
    int epoch = 0;
    long step = 0;
    double objective = 0.0;
    double lr = 0.0;
    double seconds = 0.0;  // cumulative wall-clock, diagnostics only
  };
  std::vector<Row> rows;

  double epoch_mean_objective(int epoch) const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
      if (r.epoch == epoch) {
        s += r.objective;
        ++n;
      }
    if (n == 0) throw std::out_of_range("epoch_mean_objective: no such epoch");
    return s / static_cast<double>(n);
  }

  double final_objective() const {
    if (rows.empty()) throw std::out_of_range("final_objective: empty trace");
    return rows.back().objective;
  }
};

inline void trace_to_csv(const TrainingTrace& trace, const std::string& path,
                         const std::string& header_comment = "") {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("trace_to_csv: cannot open " + path);
  if (!header_comment.empty()) f << "# " << header_comment << "\n";
  f << "phase,epoch,step,objective,lr,seconds\n";
  char buf[200];
  for (const auto& r : trace.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%ld,%.17g,%.17g,%.3f\n",
                  r.phase.c_str(), r.epoch, r.step, r.objective, r.lr,
                  r.seconds);
    f << buf;
  }
}

}  // namespace mfvi

#endif  // MFVI_TRACE_HPP
