#ifndef MFVI_CHECKPOINT_HPP
#define MFVI_CHECKPOINT_HPP

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mfvi/flows.hpp"
#include "mfvi/tensor.hpp"

namespace mfvi {

struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline std::string format_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Versioned structured-text checkpoint: header `mfviflow v1`, then per
/// parameter a record line `name shape<r,c>` followed by one decimal value
/// per line (17 significant digits), in deterministic parameter order.
inline void checkpoint_save(const ConditionalFlow& flow,
                            const std::string& path) {
  std::ostringstream os;
  os << "mfviflow v1\n";
  std::vector<std::pair<std::string, Tensor>> named;
  flow.named_params(named);
  for (const auto& [name, t] : named) {
    os << name << " shape<" << t.rows() << "," << t.cols() << ">\n";
    for (double v : t.value()) os << detail::format_value(v) << "\n";
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("checkpoint_save: cannot open " + path);
  f << os.str();
  if (!f) throw io_error("checkpoint_save: write failed for " + path);
}

/// Loads into a flow constructed with the matching architecture. The whole
/// file is parsed and validated before any parameter is touched.
inline void checkpoint_load(ConditionalFlow& flow, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("checkpoint_load: cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "mfviflow v1")
    throw io_error("checkpoint_load: bad or unsupported header in " + path);

  std::vector<std::pair<std::string, Tensor>> named;
  flow.named_params(named);

  std::vector<std::vector<double>> staged;
  staged.reserve(named.size());
  for (const auto& [name, t] : named) {
    if (!std::getline(f, line))
      throw io_error("checkpoint_load: unexpected end of file at " + name);
    std::istringstream hs(line);
    std::string fname, fshape;
    hs >> fname >> fshape;
    if (fname != name)
      throw io_error("checkpoint_load: expected parameter '" + name +
                     "', found '" + fname + "'");
    std::ostringstream want;
    want << "shape<" << t.rows() << "," << t.cols() << ">";
    if (fshape != want.str())
      throw io_error("checkpoint_load: shape mismatch for '" + name +
                     "': file has " + fshape + ", model wants " + want.str());
    std::vector<double> vals(t.size());
    for (auto& v : vals) {
      if (!std::getline(f, line))
        throw io_error("checkpoint_load: truncated values for " + name);
      try {
        v = std::stod(line);
      } catch (const std::exception&) {
        throw io_error("checkpoint_load: malformed value '" + line +
                       "' in parameter " + name);
      }
    }
    staged.push_back(std::move(vals));
  }
  for (std::size_t i = 0; i < named.size(); ++i)
    named[i].second.update_values(staged[i]);
}

}  // namespace mfvi

#endif  // MFVI_CHECKPOINT_HPP
