#include "svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <fmt/format.h>

namespace driftwave::svg {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kLeft = 70.0, kRight = 150.0, kTop = 40.0, kBottom = 50.0;
constexpr std::array kColors{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += ch;
        }
    }
    return out;
}

double nice_step(double span) {
    double raw = span / 5.0;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (m * mag >= raw) return m * mag;
    }
    return 10.0 * mag;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
        if (hi - lo < 1e-12) lo -= 0.5, hi += 0.5;
    }
};

}  // namespace

Plot make_plot(std::string title, std::string x_label, std::string y_label, std::vector<Series> series) {
    Plot p;
    p.title = std::move(title);
    p.x_label = std::move(x_label);
    p.y_label = std::move(y_label);
    p.series = std::move(series);
    return p;
}

std::string render(const Plot& plot) {
    Range xr, yr;
    for (const auto& s : plot.series) {
        for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            xr.add(s.x[i]);
            yr.add(s.y[i]);
        }
    }
    if (plot.y_min) yr.lo = *plot.y_min;
    if (plot.y_max) yr.hi = *plot.y_max;
    xr.pad();
    yr.pad();
    const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
    auto px = [&](double x) { return kLeft + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double y) { return kTop + (yr.hi - std::clamp(y, yr.lo, yr.hi)) / (yr.hi - yr.lo) * ph; };

    std::string out = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
        "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kWidth, kHeight);
    out += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                       kLeft + pw / 2.0, escape(plot.title));
    out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", kLeft,
                       kTop, pw, ph);

    const double xs = nice_step(xr.hi - xr.lo), ys = nice_step(yr.hi - yr.lo);
    for (double t = std::ceil(xr.lo / xs) * xs; t <= xr.hi + 1e-9 * xs; t += xs) {
        out += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ddd\"/>\n"
                           "<text x=\"{0:.2f}\" y=\"{3:.2f}\" text-anchor=\"middle\">{4:g}</text>\n",
                           px(t), kTop, kTop + ph, kTop + ph + 16.0, std::abs(t) < 1e-12 * xs ? 0.0 : t);
    }
    for (double t = std::ceil(yr.lo / ys) * ys; t <= yr.hi + 1e-9 * ys; t += ys) {
        out += fmt::format("<line x1=\"{1:.2f}\" y1=\"{0:.2f}\" x2=\"{2:.2f}\" y2=\"{0:.2f}\" stroke=\"#ddd\"/>\n"
                           "<text x=\"{3:.2f}\" y=\"{4:.2f}\" text-anchor=\"end\">{5:g}</text>\n",
                           py(t), kLeft, kLeft + pw, kLeft - 6.0, py(t) + 4.0, std::abs(t) < 1e-12 * ys ? 0.0 : t);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2.0,
                       kHeight - 12.0, escape(plot.x_label));
    out += fmt::format("<text x=\"16\" y=\"{0:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1f})\">{1}"
                       "</text>\n",
                       kTop + ph / 2.0, escape(plot.y_label));

    for (std::size_t s = 0; s < plot.series.size(); ++s) {
        const Series& series = plot.series[s];
        const char* color = kColors[s % kColors.size()];
        const char* dash = series.dashed ? " stroke-dasharray=\"6 4\"" : "";
        std::string points;
        auto flush = [&] {
            if (!points.empty()) {
                out += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{} points=\"{}\"/>\n",
                                   color, dash, points);
            }
            points.clear();
        };
        for (std::size_t i = 0; i < series.x.size() && i < series.y.size(); ++i) {
            if (!std::isfinite(series.y[i]) || !std::isfinite(series.x[i])) {
                flush();
                continue;
            }
            points += fmt::format("{}{:.2f},{:.2f}", points.empty() ? "" : " ", px(series.x[i]), py(series.y[i]));
        }
        flush();
        if (!series.label.empty()) {
            const double ly = kTop + 10.0 + 18.0 * static_cast<double>(s);
            out += fmt::format("<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{2:.1f}\" y2=\"{1:.1f}\" stroke=\"{3}\" "
                               "stroke-width=\"2\"{4}/>\n<text x=\"{5:.1f}\" y=\"{6:.1f}\">{7}</text>\n",
                               kLeft + pw + 10.0, ly, kLeft + pw + 34.0, color, dash, kLeft + pw + 40.0, ly + 4.0,
                               escape(series.label));
        }
    }
    out += "</svg>\n";
    return out;
}

}  // namespace driftwave::svg
