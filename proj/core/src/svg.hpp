#pragma once

// Minimal static SVG plot writer used by the sweep reports.

#include <string>
#include <vector>

namespace qkdlab::svg {

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

/// Connected polylines, one per series, with axes and tick labels.
void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series);

/// Point cloud.
void write_scatter_plot(const std::string& path, const std::string& title,
                        const std::string& x_label, const std::string& y_label,
                        const std::vector<double>& x, const std::vector<double>& y);

/// Equal-width histogram of `values` with `bins` bars.
void write_histogram(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<double>& values,
                     int bins);

}  // namespace qkdlab::svg
