#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mldsim/errors.hpp"

namespace mldsim {

struct PlotSeries {
    std::string label;
    std::vector<double> y; // x is the index
    std::string color = "#1f6fb5";
    double stroke_width = 1.5;
};

struct PlotLimits {
    double y_min = 0.0;
    double y_max = 1.0;
};

inline PlotLimits plot_limits(const std::vector<PlotSeries>& series) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& s : series)
        for (double v : s.y)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
    if (!(lo < hi)) {
        lo = std::isfinite(lo) ? lo - 1.0 : 0.0;
        hi = lo + 2.0;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

} // namespace detail

// Plain line chart, x axis is the sample index. Output depends only on the
// arguments, so identical runs write identical files.
inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::string& x_label, const std::string& y_label,
                           const std::vector<PlotSeries>& series,
                           std::optional<PlotLimits> fixed_limits = {}) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write plot file: " + path);

    const int W = 900, H = 520;
    const int ml = 70, mr = 20, mt = 44, mb = 56;
    const double pw = W - ml - mr, ph = H - mt - mb;

    std::size_t n = 1;
    for (const auto& s : series) n = std::max(n, s.y.size());
    const PlotLimits lim = fixed_limits ? *fixed_limits : plot_limits(series);

    auto xpix = [&](double i) { return ml + (n > 1 ? i / static_cast<double>(n - 1) : 0.5) * pw; };
    auto ypix = [&](double v) {
        return mt + (1.0 - (v - lim.y_min) / (lim.y_max - lim.y_min)) * ph;
    };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"#ffffff\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"16\" fill=\"#222\">"
       << title << "</text>\n";

    // grid and ticks
    const int ticks = 5;
    for (int t = 0; t <= ticks; ++t) {
        const double v = lim.y_min + (lim.y_max - lim.y_min) * t / ticks;
        const double y = ypix(v);
        os << "<line x1=\"" << ml << "\" y1=\"" << detail::svg_num(y) << "\" x2=\"" << ml + pw
           << "\" y2=\"" << detail::svg_num(y) << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        os << "<text x=\"" << ml - 8 << "\" y=\"" << detail::svg_num(y + 4)
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">"
           << detail::tick_label(v) << "</text>\n";
    }
    for (int t = 0; t <= ticks; ++t) {
        const double i = (n > 1 ? static_cast<double>(n - 1) : 1.0) * t / ticks;
        const double x = xpix(i);
        os << "<line x1=\"" << detail::svg_num(x) << "\" y1=\"" << mt + ph << "\" x2=\""
           << detail::svg_num(x) << "\" y2=\"" << mt + ph + 5
           << "\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
        os << "<text x=\"" << detail::svg_num(x) << "\" y=\"" << mt + ph + 20
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#444\">"
           << detail::tick_label(std::round(i)) << "</text>\n";
    }

    os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << detail::svg_num(pw)
       << "\" height=\"" << detail::svg_num(ph)
       << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";

    for (const auto& s : series) {
        if (s.y.empty()) continue;
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\""
           << s.stroke_width << "\" points=\"";
        for (std::size_t i = 0; i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            if (i) os << ' ';
            os << detail::svg_num(xpix(static_cast<double>(i))) << ','
               << detail::svg_num(ypix(s.y[i]));
        }
        os << "\"/>\n";
    }

    // legend
    double lx = ml + 12, ly = mt + 16;
    for (const auto& s : series) {
        os << "<line x1=\"" << detail::svg_num(lx) << "\" y1=\"" << detail::svg_num(ly - 4)
           << "\" x2=\"" << detail::svg_num(lx + 22) << "\" y2=\"" << detail::svg_num(ly - 4)
           << "\" stroke=\"" << s.color << "\" stroke-width=\"2.5\"/>\n";
        os << "<text x=\"" << detail::svg_num(lx + 28) << "\" y=\"" << detail::svg_num(ly)
           << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#222\">" << s.label
           << "</text>\n";
        ly += 18;
    }

    os << "<text x=\"" << W / 2 << "\" y=\"" << H - 14
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222\">"
       << x_label << "</text>\n";
    os << "<text x=\"18\" y=\"" << H / 2
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" fill=\"#222\" "
          "transform=\"rotate(-90 18 "
       << H / 2 << ")\">" << y_label << "</text>\n";
    os << "</svg>\n";
}

} // namespace mldsim
