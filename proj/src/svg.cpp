// SPDX-License-Identifier: Apache-2.0
#include "gtdsgd/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gtdsgd {

namespace {

constexpr double kWidth = 720, kHeight = 440, kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
const char* const kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else if (c == '&') out += "&amp;";
        else out += c;
    }
    return out;
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::vector<ChartLine>& lines, bool log_y) {
    std::size_t t_max = 1;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& l : lines) {
        t_max = std::max(t_max, l.values.size());
        for (double v : l.values) {
            if (!std::isfinite(v) || (log_y && v <= 0.0)) continue;
            const double y = log_y ? std::log10(v) : v;
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) hi = lo + 1.0;

    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double t) { return kLeft + (t_max > 1 ? (t - 1.0) / static_cast<double>(t_max - 1) : 0.0) * pw; };
    auto py = [&](double y) { return kTop + (1.0 - (y - lo) / (hi - lo)) * ph; };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << fmt(kLeft) << "\" y=\"22\" font-size=\"14\">" << escape(title)
       << (log_y ? " (log y)" : "") << "</text>\n";
    os << "<rect x=\"" << fmt(kLeft) << "\" y=\"" << fmt(kTop) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double y = lo + (hi - lo) * k / 4.0;
        const double yy = py(y);
        os << "<line x1=\"" << fmt(kLeft) << "\" x2=\"" << fmt(kLeft + pw) << "\" y1=\"" << fmt(yy) << "\" y2=\""
           << fmt(yy) << "\" stroke=\"#ddd\"/>\n";
        os << "<text x=\"" << fmt(kLeft - 6) << "\" y=\"" << fmt(yy + 4) << "\" text-anchor=\"end\">"
           << tick_label(log_y ? std::pow(10.0, y) : y) << "</text>\n";
        const double t = 1.0 + (static_cast<double>(t_max) - 1.0) * k / 4.0;
        os << "<text x=\"" << fmt(px(t)) << "\" y=\"" << fmt(kTop + ph + 16) << "\" text-anchor=\"middle\">"
           << tick_label(std::round(t)) << "</text>\n";
    }
    os << "<text x=\"" << fmt(kLeft + pw / 2) << "\" y=\"" << fmt(kHeight - 10) << "\" text-anchor=\"middle\">t</text>\n";

    for (std::size_t li = 0; li < lines.size(); ++li) {
        const auto& l = lines[li];
        const char* color = kColors[li % (sizeof kColors / sizeof kColors[0])];
        // Thin long series so files stay small; the stride is a pure function of the length.
        const std::size_t step = std::max<std::size_t>(1, l.values.size() / 1000);
        std::string path;
        bool pen_down = false;
        for (std::size_t k = 0; k < l.values.size(); k += step) {
            const double v = l.values[k];
            if (!std::isfinite(v) || (log_y && v <= 0.0)) {
                pen_down = false;
                continue;
            }
            path += (pen_down ? " L" : " M") + fmt(px(static_cast<double>(k + 1))) + "," +
                    fmt(py(log_y ? std::log10(v) : v));
            pen_down = true;
        }
        if (!path.empty())
            os << "<path d=\"" << path.substr(1) << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
        const double ly = kTop + 14.0 * static_cast<double>(li) + 8.0;
        os << "<line x1=\"" << fmt(kLeft + pw + 10) << "\" x2=\"" << fmt(kLeft + pw + 30) << "\" y1=\"" << fmt(ly)
           << "\" y2=\"" << fmt(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        os << "<text x=\"" << fmt(kLeft + pw + 34) << "\" y=\"" << fmt(ly + 4) << "\">" << escape(l.label)
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace gtdsgd
