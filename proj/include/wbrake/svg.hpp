#pragma once

#include <string>
#include <vector>

#include "wbrake/trajectory.hpp"

namespace wbrake {

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Self-contained SVG line chart. Non-finite points are skipped; log_y
/// also drops non-positive values.
std::string svg_line_chart(const std::string& title, const std::vector<Series>& series,
                           const std::string& x_label, const std::string& y_label, bool log_y = false);

/// Space-time density heatmap (time downward, x across), grey scale from 0 to rho.
std::string svg_heatmap(const std::string& title, const Trajectory& traj, int max_rows = 200,
                        int max_cols = 256);

}  // namespace wbrake
