#pragma once

#include <string>
#include <vector>

namespace hse {

/// Static SVG scatter/line/band figures for front and envelope reports.
/// Deliberately minimal: linear axes, ticks, legend, no interactivity.
namespace svgplot {

struct Series {
    std::string label;
    std::vector<std::pair<double, double>> points;
    bool draw_line = false;
    bool draw_markers = true;
    std::string color = "#1f6fb4";
};

struct Band {
    std::string label;
    std::vector<double> x;
    std::vector<double> lo;
    std::vector<double> hi;
    std::string color = "#1f6fb4";
};

struct Figure {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
    std::vector<Band> bands;
};

std::string render(const Figure& figure, int width = 720, int height = 520);

const std::string& palette_color(std::size_t index);

}  // namespace svgplot

}  // namespace hse
