#pragma once

#include <string>
#include <vector>

#include "dappo/types.hpp"

namespace dappo::svg {

/// One named series for a grouped bar chart; all series share the category
/// axis.
struct BarSeries {
  std::string label;
  std::string color;
  std::vector<Real> values;
};

struct LineSeries {
  std::string label;
  std::string color;
  std::vector<Real> x;
  std::vector<Real> y;
};

/// Grouped bar chart as a standalone SVG document (no timestamps or other
/// run-varying metadata). category_labels may be sparse; empty strings are
/// skipped on the axis.
std::string grouped_bar_chart(const std::string& title,
                              const std::vector<std::string>& category_labels,
                              const std::vector<BarSeries>& series,
                              const std::string& comment);

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<LineSeries>& series,
                       const std::string& comment);

}  // namespace dappo::svg
