// Copyright (c) the iclp authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "iclp/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "iclp/error.hpp"

namespace iclp::svg {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish() {
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

class Canvas {
 public:
  Canvas(const std::string& title, const std::string& x_label, const std::string& y_label, Range y) : y_(y) {
    os_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
        << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
        << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"15\">" << escape(title) << "</text>\n"
        << "<text x=\"" << kWidth / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"12\">" << escape(x_label) << "</text>\n"
        << "<text x=\"16\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"12\" transform=\"rotate(-90 16 " << kHeight / 2 << ")\">" << escape(y_label) << "</text>\n";
    axes();
  }

  double py(double v) const { return kTop + (1.0 - (v - y_.lo) / (y_.hi - y_.lo)) * (kHeight - kTop - kBottom); }
  static double plot_w() { return kWidth - kLeft - kRight; }

  std::ostringstream& out() { return os_; }
  std::string finish() {
    os_ << "</svg>\n";
    return os_.str();
  }

 private:
  void axes() {
    os_ << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
        << "\" stroke=\"black\"/>\n"
        << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
        << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
      const double v = y_.lo + (y_.hi - y_.lo) * i / 4.0;
      os_ << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fmt(py(v)) << "\" x2=\"" << kLeft << "\" y2=\""
          << fmt(py(v)) << "\" stroke=\"black\"/>\n"
          << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt(py(v) + 4) << "\" text-anchor=\"end\" "
          << "font-family=\"sans-serif\" font-size=\"10\">" << tick_label(v) << "</text>\n";
    }
  }

  Range y_;
  std::ostringstream os_;
};

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&':
        out += "&amp;";
        break;
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '"':
        out += "&quot;";
        break;
      case '\'':
        out += "&apos;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

BoxStats box_stats(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }),
               values.end());
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  auto q = [&](double p) {
    const double idx = p * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(idx));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (idx - static_cast<double>(lo)) * (values[hi] - values[lo]);
  };
  return {values.front(), q(0.25), q(0.5), q(0.75), values.back()};
}

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series) {
  Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ConfigError("line chart series '" + s.name + "' has mismatched x/y");
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  xr.finish();
  yr.finish();
  Canvas c(title, x_label, y_label, yr);
  auto px = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * Canvas::plot_w(); };
  for (int i = 0; i <= 4; ++i) {
    const double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    c.out() << "<text x=\"" << fmt(px(v)) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"10\">" << tick_label(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % std::size(kPalette)];
    std::string pts;
    for (std::size_t j = 0; j < s.x.size(); ++j) {
      if (!std::isfinite(s.x[j]) || !std::isfinite(s.y[j])) continue;
      pts += fmt(px(s.x[j])) + "," + fmt(c.py(s.y[j])) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    c.out() << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"" << pts
            << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(i);
    c.out() << "<rect x=\"" << kWidth - kRight - 130 << "\" y=\"" << fmt(ly - 8) << "\" width=\"10\" height=\"10\" "
            << "fill=\"" << colour << "\"/>\n"
            << "<text x=\"" << kWidth - kRight - 116 << "\" y=\"" << fmt(ly + 1) << "\" font-family=\"sans-serif\" "
            << "font-size=\"10\">" << escape(s.name) << "</text>\n";
  }
  return c.finish();
}

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars) {
  Range yr;
  yr.add(0.0);
  for (const auto& b : bars) {
    yr.add(b.value + b.error);
    yr.add(b.value - b.error);
  }
  yr.finish();
  Canvas c(title, "", y_label, yr);
  const double slot = Canvas::plot_w() / static_cast<double>(std::max<std::size_t>(1, bars.size()));
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.2;
    const double top = c.py(std::max(b.value, 0.0)), base = c.py(std::min(b.value, 0.0));
    c.out() << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(slot * 0.6) << "\" height=\""
            << fmt(base - top) << "\" fill=\"" << kPalette[i % std::size(kPalette)] << "\"/>\n";
    if (b.error > 0.0) {
      const double cx = x + slot * 0.3;
      c.out() << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(c.py(b.value - b.error)) << "\" x2=\"" << fmt(cx)
              << "\" y2=\"" << fmt(c.py(b.value + b.error)) << "\" stroke=\"black\"/>\n";
    }
    c.out() << "<text x=\"" << fmt(x + slot * 0.3) << "\" y=\"" << kHeight - kBottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << escape(b.label)
            << "</text>\n"
            << "<text x=\"" << fmt(x + slot * 0.3) << "\" y=\"" << fmt(top - 4)
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << tick_label(b.value)
            << "</text>\n";
  }
  return c.finish();
}

std::string box_plot(const std::string& title, const std::string& y_label, const std::vector<Box>& boxes) {
  Range yr;
  for (const auto& b : boxes)
    for (double v : b.values) yr.add(v);
  yr.finish();
  Canvas c(title, "", y_label, yr);
  const double slot = Canvas::plot_w() / static_cast<double>(std::max<std::size_t>(1, boxes.size()));
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const BoxStats s = box_stats(boxes[i].values);
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.25, w = slot * 0.5, cx = x + w / 2;
    const char* colour = kPalette[i % std::size(kPalette)];
    c.out() << "<line x1=\"" << fmt(cx) << "\" y1=\"" << fmt(c.py(s.min)) << "\" x2=\"" << fmt(cx) << "\" y2=\""
            << fmt(c.py(s.max)) << "\" stroke=\"black\"/>\n"
            << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(c.py(s.q3)) << "\" width=\"" << fmt(w) << "\" height=\""
            << fmt(c.py(s.q1) - c.py(s.q3)) << "\" fill=\"" << colour << "\" fill-opacity=\"0.6\" stroke=\"black\"/>\n"
            << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(c.py(s.median)) << "\" x2=\"" << fmt(x + w) << "\" y2=\""
            << fmt(c.py(s.median)) << "\" stroke=\"black\" stroke-width=\"2\"/>\n"
            << "<text x=\"" << fmt(cx) << "\" y=\"" << kHeight - kBottom + 16
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">" << escape(boxes[i].label)
            << "</text>\n";
  }
  return c.finish();
}

void write(const std::filesystem::path& path, const std::string& svg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << svg;
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace iclp::svg
