#include "hse/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace hse {
namespace svgplot {

namespace {

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream out;
    out.precision(6);
    out << v;
    return out.str();
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void include(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(lo <= hi)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double margin = 0.05 * (hi - lo);
        lo -= margin;
        hi += margin;
    }
};

std::vector<double> ticks(const Range& r, int count) {
    std::vector<double> out;
    const double span = r.hi - r.lo;
    const double raw_step = span / count;
    const double mag = std::pow(10.0, std::floor(std::log10(raw_step)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * m >= raw_step) {
            step = mag * m;
            break;
        }
    }
    const double first = std::ceil(r.lo / step) * step;
    for (double v = first; v <= r.hi + 1e-12 * span; v += step) out.push_back(v);
    return out;
}

}  // namespace

const std::string& palette_color(std::size_t index) {
    static const std::vector<std::string> palette = {
        "#1f6fb4", "#d1495b", "#3a7d44", "#8d5a97", "#c77d22", "#3d8b8b"};
    return palette[index % palette.size()];
}

std::string render(const Figure& figure, int width, int height) {
    const double ml = 70, mr = 20, mt = figure.title.empty() ? 20 : 44, mb = 52;
    const double pw = width - ml - mr;
    const double ph = height - mt - mb;

    Range rx, ry;
    for (const auto& s : figure.series) {
        for (const auto& [x, y] : s.points) {
            rx.include(x);
            ry.include(y);
        }
    }
    for (const auto& b : figure.bands) {
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            rx.include(b.x[i]);
            ry.include(b.lo[i]);
            ry.include(b.hi[i]);
        }
    }
    rx.pad();
    ry.pad();

    auto px = [&](double x) { return ml + (x - rx.lo) / (rx.hi - rx.lo) * pw; };
    auto py = [&](double y) { return mt + ph - (y - ry.lo) / (ry.hi - ry.lo) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height
        << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!figure.title.empty()) {
        out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"15\">" << escape(figure.title)
            << "</text>\n";
    }

    // Axes and grid.
    out << "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#333\">\n";
    for (double t : ticks(rx, 6)) {
        const double x = px(t);
        out << "<line x1=\"" << num(x) << "\" y1=\"" << num(mt) << "\" x2=\"" << num(x)
            << "\" y2=\"" << num(mt + ph) << "\" stroke=\"#e4e4e4\"/>\n";
        out << "<text x=\"" << num(x) << "\" y=\"" << num(mt + ph + 16)
            << "\" text-anchor=\"middle\">" << num(t) << "</text>\n";
    }
    for (double t : ticks(ry, 6)) {
        const double y = py(t);
        out << "<line x1=\"" << num(ml) << "\" y1=\"" << num(y) << "\" x2=\""
            << num(ml + pw) << "\" y2=\"" << num(y) << "\" stroke=\"#e4e4e4\"/>\n";
        out << "<text x=\"" << num(ml - 6) << "\" y=\"" << num(y + 4)
            << "\" text-anchor=\"end\">" << num(t) << "</text>\n";
    }
    out << "</g>\n";
    out << "<rect x=\"" << num(ml) << "\" y=\"" << num(mt) << "\" width=\"" << num(pw)
        << "\" height=\"" << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
    out << "<text x=\"" << num(ml + pw / 2) << "\" y=\"" << num(height - 12)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
        << escape(figure.x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << num(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 16 " << num(mt + ph / 2) << ")\">"
        << escape(figure.y_label) << "</text>\n";

    // Bands below series.
    for (const auto& b : figure.bands) {
        if (b.x.empty()) continue;
        std::ostringstream path;
        path << "M";
        for (std::size_t i = 0; i < b.x.size(); ++i) {
            if (!std::isfinite(b.lo[i]) || !std::isfinite(b.hi[i])) continue;
            path << " " << num(px(b.x[i])) << "," << num(py(b.hi[i]));
        }
        for (std::size_t i = b.x.size(); i-- > 0;) {
            if (!std::isfinite(b.lo[i]) || !std::isfinite(b.hi[i])) continue;
            path << " L " << num(px(b.x[i])) << "," << num(py(b.lo[i]));
        }
        path << " Z";
        out << "<path d=\"" << path.str() << "\" fill=\"" << b.color
            << "\" fill-opacity=\"0.35\" stroke=\"" << b.color << "\"/>\n";
    }

    for (const auto& s : figure.series) {
        if (s.draw_line && s.points.size() > 1) {
            std::ostringstream path;
            path << "M";
            for (const auto& [x, y] : s.points)
                path << " " << num(px(x)) << "," << num(py(y));
            out << "<path d=\"" << path.str() << "\" fill=\"none\" stroke=\"" << s.color
                << "\" stroke-width=\"1.6\" stroke-dasharray=\"5,3\"/>\n";
        }
        if (s.draw_markers) {
            for (const auto& [x, y] : s.points) {
                out << "<circle cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
                    << "\" r=\"3\" fill=\"" << s.color << "\" fill-opacity=\"0.8\"/>\n";
            }
        }
    }

    // Legend.
    double ly = mt + 14;
    auto legend_entry = [&](const std::string& label, const std::string& color) {
        if (label.empty()) return;
        out << "<rect x=\"" << num(ml + pw - 150) << "\" y=\"" << num(ly - 9)
            << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
        out << "<text x=\"" << num(ml + pw - 133) << "\" y=\"" << num(ly + 2)
            << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(label)
            << "</text>\n";
        ly += 18;
    };
    for (const auto& b : figure.bands) legend_entry(b.label, b.color);
    for (const auto& s : figure.series) legend_entry(s.label, s.color);

    out << "</svg>\n";
    return out.str();
}

}  // namespace svgplot
}  // namespace hse
