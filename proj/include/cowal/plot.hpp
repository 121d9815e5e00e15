#pragma once

// Minimal SVG line chart for AL curves. Fixed 800x500 viewport and 6-decimal
// coordinates, so identical input yields identical bytes.

#include <algorithm>
#include <array>
#include <string>

#include "cowal/datamodel.hpp"

namespace cowal {

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string curves_to_svg(const CurveTable& t) {
    constexpr double W = 800, H = 500, left = 70, right = 180, top = 30, bottom = 60;
    constexpr std::array<const char*, 8> palette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
    const double x0 = t.steps.front(), x1 = std::max<double>(t.steps.back(), x0 + 1);
    double y0 = 1.0, y1 = 0.0;
    for (const auto& col : t.values)
        for (double v : col) {
            y0 = std::min(y0, v);
            y1 = std::max(y1, v);
        }
    if (y1 - y0 < 1e-9) {
        y0 -= 0.05;
        y1 += 0.05;
    }
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double s) { return left + (s - x0) / (x1 - x0) * pw; };
    auto py = [&](double v) { return top + (1.0 - (v - y0) / (y1 - y0)) * ph; };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n";
    s += "<line class=\"axis\" x1=\"" + format_fixed6(left) + "\" y1=\"" + format_fixed6(top + ph) + "\" x2=\"" +
         format_fixed6(left + pw) + "\" y2=\"" + format_fixed6(top + ph) + "\" stroke=\"black\"/>\n";
    s += "<line class=\"axis\" x1=\"" + format_fixed6(left) + "\" y1=\"" + format_fixed6(top) + "\" x2=\"" +
         format_fixed6(left) + "\" y2=\"" + format_fixed6(top + ph) + "\" stroke=\"black\"/>\n";
    for (int st : t.steps)
        s += "<text class=\"tick\" x=\"" + format_fixed6(px(st)) + "\" y=\"" + format_fixed6(top + ph + 18) +
             "\" font-size=\"12\" text-anchor=\"middle\">" + std::to_string(st) + "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double v = y0 + (y1 - y0) * k / 4.0;
        s += "<text class=\"tick\" x=\"" + format_fixed6(left - 8) + "\" y=\"" + format_fixed6(py(v) + 4) +
             "\" font-size=\"12\" text-anchor=\"end\">" + format_fixed6(v).substr(0, 5) + "</text>\n";
    }
    s += "<text class=\"xlabel\" x=\"" + format_fixed6(left + pw / 2) + "\" y=\"" + format_fixed6(H - 15) +
         "\" font-size=\"14\" text-anchor=\"middle\">AL step</text>\n";
    s += "<text class=\"ylabel\" x=\"18\" y=\"" + format_fixed6(top + ph / 2) + "\" font-size=\"14\" transform=\"rotate(-90 18 " +
         format_fixed6(top + ph / 2) + ")\" text-anchor=\"middle\">DICE</text>\n";

    for (std::size_t c = 0; c < t.labels.size(); ++c) {
        const char* color = palette[c % palette.size()];
        s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < t.steps.size(); ++i) {
            if (i) s += " ";
            s += format_fixed6(px(t.steps[i])) + "," + format_fixed6(py(t.values[c][i]));
        }
        s += "\"/>\n";
        const double ly = top + 20.0 * static_cast<double>(c);
        s += "<line x1=\"" + format_fixed6(W - right + 15) + "\" y1=\"" + format_fixed6(ly) + "\" x2=\"" +
             format_fixed6(W - right + 40) + "\" y2=\"" + format_fixed6(ly) + "\" stroke=\"" + color +
             "\" stroke-width=\"2\"/>\n";
        s += "<text class=\"legend\" x=\"" + format_fixed6(W - right + 46) + "\" y=\"" + format_fixed6(ly + 4) +
             "\" font-size=\"12\">" + xml_escape(t.labels[c]) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

/// Renders the curve CSV at `curves_csv` to an SVG file.
inline void emit_plot(const fs::path& curves_csv, const fs::path& out_path) {
    detail::spit(out_path, curves_to_svg(read_curve_csv(curves_csv)));
}

} // namespace cowal
