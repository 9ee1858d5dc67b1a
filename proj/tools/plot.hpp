#pragma once

#include <string>
#include <vector>

namespace mtb::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static SVG line chart; every series gets its own color and a legend entry.
std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series, bool log_x = false);

}  // namespace mtb::plot
