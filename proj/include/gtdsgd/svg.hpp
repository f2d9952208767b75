// SPDX-License-Identifier: Apache-2.0
//
// Minimal deterministic SVG line charts.
#pragma once

#include <string>
#include <vector>

namespace gtdsgd {

struct ChartLine {
    std::string label;
    std::vector<double> values;  // plotted against t = 1..size
};

/// Non-positive values are skipped on a log-scaled y axis.
std::string render_line_chart(const std::string& title, const std::vector<ChartLine>& lines, bool log_y);

}  // namespace gtdsgd
