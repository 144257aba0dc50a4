#pragma once

#include <string>

namespace veye {

// Loss curves from a training metrics CSV (step + per-term columns).
void plot_metrics_csv(const std::string& csv_path, const std::string& out_png);

// Position-error histogram from an eval report JSON.
void plot_report_histogram(const std::string& report_json_path, const std::string& out_png);

} // namespace veye
