#include "dappo/svg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dappo::svg {
namespace {

constexpr int kWidth = 960;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

std::string num(Real v) {
  std::ostringstream ss;
  ss.precision(6);
  ss << v;
  return ss.str();
}

void header(std::ostringstream& out, const std::string& title, const std::string& comment) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  if (!comment.empty()) out << "<!-- " << comment << " -->\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"16\" "
      << "font-family=\"sans-serif\">" << title << "</text>\n";
}

struct Range {
  Real lo = 0, hi = 1;
  Real scale(Real v, Real pixel_lo, Real pixel_hi) const {
    if (hi == lo) return (pixel_lo + pixel_hi) / 2;
    return pixel_lo + (v - lo) / (hi - lo) * (pixel_hi - pixel_lo);
  }
};

Range value_range(const std::vector<Real>& values) {
  Range r;
  if (values.empty()) return r;
  r.lo = *std::min_element(values.begin(), values.end());
  r.hi = *std::max_element(values.begin(), values.end());
  r.lo = std::min(r.lo, 0.0);
  r.hi = std::max(r.hi, 0.0);
  if (r.hi == r.lo) r.hi = r.lo + 1;
  const Real pad = 0.05 * (r.hi - r.lo);
  r.lo -= pad;
  r.hi += pad;
  return r;
}

void y_axis(std::ostringstream& out, const Range& range) {
  const int ticks = 6;
  for (int i = 0; i <= ticks; ++i) {
    const Real v = range.lo + (range.hi - range.lo) * i / ticks;
    const Real y = range.scale(v, kHeight - kMarginBottom, kMarginTop);
    out << "<line x1=\"" << kMarginLeft << "\" y1=\"" << num(y) << "\" x2=\""
        << kWidth - kMarginRight << "\" y2=\"" << num(y)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << num(y + 4)
        << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << num(v)
        << "</text>\n";
  }
}

void legend(std::ostringstream& out, const std::vector<std::string>& labels,
            const std::vector<std::string>& colors) {
  Real x = kMarginLeft;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << "<rect x=\"" << num(x) << "\" y=\"" << kMarginTop - 14 << "\" width=\"12\" height=\"12\" fill=\""
        << colors[i] << "\"/>\n";
    out << "<text x=\"" << num(x + 16) << "\" y=\"" << kMarginTop - 4
        << "\" font-size=\"12\" font-family=\"sans-serif\">" << labels[i] << "</text>\n";
    x += 18 + 8.0 * static_cast<Real>(labels[i].size()) + 16;
  }
}

}  // namespace

std::string grouped_bar_chart(const std::string& title,
                              const std::vector<std::string>& category_labels,
                              const std::vector<BarSeries>& series,
                              const std::string& comment) {
  std::ostringstream out;
  header(out, title, comment);

  std::vector<Real> all;
  for (const auto& s : series) all.insert(all.end(), s.values.begin(), s.values.end());
  const Range range = value_range(all);
  y_axis(out, range);

  const std::size_t n_cat = category_labels.size();
  const std::size_t n_series = series.size();
  const Real plot_width = kWidth - kMarginLeft - kMarginRight;
  const Real group_width = n_cat ? plot_width / static_cast<Real>(n_cat) : plot_width;
  const Real bar_width = n_series ? group_width * 0.8 / static_cast<Real>(n_series) : group_width;
  const Real zero_y = range.scale(0.0, kHeight - kMarginBottom, kMarginTop);

  for (std::size_t c = 0; c < n_cat; ++c) {
    for (std::size_t s = 0; s < n_series; ++s) {
      if (c >= series[s].values.size()) continue;
      const Real v = series[s].values[c];
      const Real x = kMarginLeft + group_width * static_cast<Real>(c) + group_width * 0.1 +
                     bar_width * static_cast<Real>(s);
      const Real y = range.scale(v, kHeight - kMarginBottom, kMarginTop);
      const Real top = std::min(y, zero_y);
      const Real h = std::abs(y - zero_y);
      out << "<rect x=\"" << num(x) << "\" y=\"" << num(top) << "\" width=\"" << num(bar_width)
          << "\" height=\"" << num(h) << "\" fill=\"" << series[s].color << "\"/>\n";
    }
    if (!category_labels[c].empty()) {
      const Real x = kMarginLeft + group_width * (static_cast<Real>(c) + 0.5);
      out << "<text x=\"" << num(x) << "\" y=\"" << kHeight - kMarginBottom + 16
          << "\" text-anchor=\"middle\" font-size=\"9\" font-family=\"sans-serif\">"
          << category_labels[c] << "</text>\n";
    }
  }

  std::vector<std::string> labels, colors;
  for (const auto& s : series) {
    labels.push_back(s.label);
    colors.push_back(s.color);
  }
  legend(out, labels, colors);
  out << "</svg>\n";
  return out.str();
}

std::string line_chart(const std::string& title, const std::string& x_label,
                       const std::string& y_label, const std::vector<LineSeries>& series,
                       const std::string& comment) {
  std::ostringstream out;
  header(out, title, comment);

  std::vector<Real> xs, ys;
  for (const auto& s : series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  Range xr;
  if (!xs.empty()) {
    xr.lo = *std::min_element(xs.begin(), xs.end());
    xr.hi = *std::max_element(xs.begin(), xs.end());
    if (xr.hi == xr.lo) xr.hi = xr.lo + 1;
  }
  const Range yr = value_range(ys);
  y_axis(out, yr);

  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      const Real px = xr.scale(s.x[i], kMarginLeft, kWidth - kMarginRight);
      const Real py = yr.scale(s.y[i], kHeight - kMarginBottom, kMarginTop);
      out << num(px) << "," << num(py) << " ";
    }
    out << "\"/>\n";
  }

  out << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kHeight / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" "
      << "transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << y_label << "</text>\n";

  std::vector<std::string> labels, colors;
  for (const auto& s : series) {
    labels.push_back(s.label);
    colors.push_back(s.color);
  }
  legend(out, labels, colors);
  out << "</svg>\n";
  return out.str();
}

}  // namespace dappo::svg
