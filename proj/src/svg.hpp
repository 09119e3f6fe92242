#pragma once

#include <optional>
#include <string>
#include <vector>

namespace driftwave::svg {

// Polyline; NaN y values break the line.
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool dashed = false;
};

struct Plot {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    std::optional<double> y_min;
    std::optional<double> y_max;
};

Plot make_plot(std::string title, std::string x_label, std::string y_label, std::vector<Series> series);

std::string render(const Plot& plot);

}  // namespace driftwave::svg
