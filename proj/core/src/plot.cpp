#include "veye/plot.hpp"

#include "veye/draw.hpp"
#include "veye/errors.hpp"
#include "veye/image_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

namespace veye {

namespace {

constexpr int kW = 900;
constexpr int kH = 560;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 30;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

std::string format_number(double v) {
    std::ostringstream out;
    if (v != 0.0 && (std::abs(v) >= 10000.0 || std::abs(v) < 0.01)) {
        out.precision(1);
        out << std::scientific << v;
    } else {
        out.precision(3);
        out << v;
    }
    return out.str();
}

struct Frame2D {
    double x_min, x_max, y_min, y_max;

    int px(double x) const {
        return kMarginLeft +
               static_cast<int>(std::lround((x - x_min) / (x_max - x_min) * (kW - kMarginLeft - kMarginRight)));
    }
    int py(double y) const {
        return kH - kMarginBottom -
               static_cast<int>(std::lround((y - y_min) / (y_max - y_min) * (kH - kMarginTop - kMarginBottom)));
    }
};

void draw_axes(Canvas& canvas, const Frame2D& f, const std::string& x_label, const std::string& y_label) {
    const Color axis = {60, 60, 60};
    draw_line(canvas, kMarginLeft, kMarginTop, kMarginLeft, kH - kMarginBottom, axis);
    draw_line(canvas, kMarginLeft, kH - kMarginBottom, kW - kMarginRight, kH - kMarginBottom, axis);
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x_min + (f.x_max - f.x_min) * i / 4.0;
        const double yv = f.y_min + (f.y_max - f.y_min) * i / 4.0;
        const int x = f.px(xv);
        const int y = f.py(yv);
        draw_line(canvas, x, kH - kMarginBottom, x, kH - kMarginBottom + 4, axis);
        draw_text(canvas, x - 12, kH - kMarginBottom + 8, format_number(xv), axis);
        draw_line(canvas, kMarginLeft - 4, y, kMarginLeft, y, axis);
        draw_text(canvas, 6, y - 3, format_number(yv), axis);
    }
    draw_text(canvas, (kW - text_width(x_label)) / 2, kH - 16, x_label, axis);
    draw_text(canvas, 6, kMarginTop - 18, y_label, axis);
}

} // namespace

void plot_metrics_csv(const std::string& csv_path, const std::string& out_png) {
    std::ifstream in(csv_path);
    if (!in) {
        throw UsageError("plot: cannot open " + csv_path);
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw UsageError("plot: empty metrics file " + csv_path);
    }
    std::vector<std::string> names;
    {
        std::istringstream hs(header);
        std::string cell;
        while (std::getline(hs, cell, ',')) names.push_back(cell);
    }
    if (names.size() < 2 || names[0] != "step") {
        throw UsageError("plot: metrics file must start with a `step` column");
    }
    std::vector<std::vector<double>> columns(names.size());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        size_t i = 0;
        while (std::getline(ls, cell, ',') && i < columns.size()) {
            columns[i++].push_back(std::stod(cell));
        }
    }
    if (columns[0].empty()) {
        throw UsageError("plot: metrics file has no data rows");
    }

    Frame2D f;
    f.x_min = columns[0].front();
    f.x_max = std::max(columns[0].back(), f.x_min + 1.0);
    f.y_min = 0.0;
    f.y_max = 1e-6;
    for (size_t c = 1; c < columns.size(); ++c) {
        for (double v : columns[c]) f.y_max = std::max(f.y_max, v);
    }
    f.y_max *= 1.05;

    Canvas canvas(kW, kH);
    draw_axes(canvas, f, "step", "loss");

    const Color palette[] = {{20, 20, 20},   {204, 51, 51},  {51, 119, 204}, {51, 153, 68},
                             {204, 136, 34}, {136, 68, 170}, {68, 170, 170}, {170, 102, 102}};
    for (size_t c = 1; c < columns.size(); ++c) {
        const Color color = palette[(c - 1) % std::size(palette)];
        for (size_t i = 1; i < columns[c].size(); ++i) {
            draw_line(canvas, f.px(columns[0][i - 1]), f.py(columns[c][i - 1]), f.px(columns[0][i]),
                      f.py(columns[c][i]), color);
        }
        const int ly = kMarginTop + static_cast<int>(c - 1) * 12;
        draw_line(canvas, kW - 170, ly + 3, kW - 150, ly + 3, color);
        draw_text(canvas, kW - 144, ly, names[c], {40, 40, 40});
    }

    write_png_rgb(out_png, canvas.rgb.data(), canvas.width, canvas.height);
}

void plot_report_histogram(const std::string& report_json_path, const std::string& out_png) {
    std::ifstream in(report_json_path);
    if (!in) {
        throw UsageError("plot: cannot open " + report_json_path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("plot: bad report JSON: ") + e.what());
    }
    std::vector<double> errors;
    for (const auto& entry : j.at("per_sample")) {
        errors.push_back(entry.at("position_error").get<double>());
    }
    if (errors.empty()) {
        throw UsageError("plot: report has no samples");
    }

    const int bins = 20;
    const double max_err = std::max(*std::max_element(errors.begin(), errors.end()), 1e-9);
    std::vector<int> counts(bins, 0);
    for (double e : errors) {
        int b = static_cast<int>(e / max_err * bins);
        counts[std::min(b, bins - 1)] += 1;
    }

    Frame2D f;
    f.x_min = 0.0;
    f.x_max = max_err;
    f.y_min = 0.0;
    f.y_max = static_cast<double>(*std::max_element(counts.begin(), counts.end())) * 1.1 + 1.0;

    Canvas canvas(kW, kH);
    draw_axes(canvas, f, "position error / m", "count");
    const Color bar = {51, 119, 204};
    for (int b = 0; b < bins; ++b) {
        const int x0 = f.px(b * max_err / bins) + 1;
        const int x1 = f.px((b + 1) * max_err / bins) - 1;
        const int y1 = f.py(static_cast<double>(counts[b]));
        for (int x = x0; x <= x1; ++x) {
            draw_line(canvas, x, kH - kMarginBottom - 1, x, y1, bar);
        }
    }
    write_png_rgb(out_png, canvas.rgb.data(), canvas.width, canvas.height);
}

} // namespace veye
