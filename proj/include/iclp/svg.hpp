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


// Self-contained SVG charts for metrics and reports.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace iclp::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Bar {
  std::string label;
  double value = 0.0;
  double error = 0.0;  // half-height of the error bar; 0 draws none
};

struct Box {
  std::string label;
  std::vector<double> values;
};

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles with linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);
std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<Bar>& bars);
std::string box_plot(const std::string& title, const std::string& y_label, const std::vector<Box>& boxes);

std::string escape(const std::string& text);
void write(const std::filesystem::path& path, const std::string& svg);

}  // namespace iclp::svg
