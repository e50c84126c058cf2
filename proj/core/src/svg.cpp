#include "svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace qkdlab::svg {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  double map(double v, double pix_lo, double pix_hi) const {
    if (hi <= lo) return 0.5 * (pix_lo + pix_hi);
    return pix_lo + (v - lo) / (hi - lo) * (pix_hi - pix_lo);
  }
};

Range make_range(double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi <= lo) hi = lo + 1.0;
  double pad = 0.04 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

class Canvas {
 public:
  explicit Canvas(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path);
    out_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
         << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
         << kHeight << "\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }
  ~Canvas() { out_ << "</svg>\n"; }

  void frame(const std::string& title, const std::string& x_label,
             const std::string& y_label, const Range& xr, const Range& yr) {
    out_ << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\""
         << plot_w() << "\" height=\"" << plot_h()
         << "\" fill=\"none\" stroke=\"#444\"/>\n";
    text(kWidth / 2, 22, title, 15, "middle");
    text(kMarginLeft + plot_w() / 2, kHeight - 12, x_label, 12, "middle");
    out_ << "<text x=\"18\" y=\"" << kMarginTop + plot_h() / 2
         << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
         << kMarginTop + plot_h() / 2 << ")\" font-family=\"sans-serif\">" << y_label
         << "</text>\n";
    for (int i = 0; i <= 4; ++i) {
      double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
      double px = xr.map(fx, kMarginLeft, kMarginLeft + plot_w());
      line(px, kMarginTop + plot_h(), px, kMarginTop + plot_h() + 5, "#444", 1.0);
      text(px, kMarginTop + plot_h() + 20, fmt(fx), 10, "middle");
      double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
      double py = yr.map(fy, kMarginTop + plot_h(), kMarginTop);
      line(kMarginLeft - 5, py, kMarginLeft, py, "#444", 1.0);
      text(kMarginLeft - 8, py + 4, fmt(fy), 10, "end");
    }
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width) {
    out_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\""
         << y2 << "\" stroke=\"" << color << "\" stroke-width=\"" << width << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& color) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color
         << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : pts) out_ << x << "," << y << " ";
    out_ << "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color) {
    out_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\""
         << color << "\" fill-opacity=\"0.6\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& color) {
    out_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w
         << "\" height=\"" << h << "\" fill=\"" << color << "\" stroke=\"#333\"/>\n";
  }

  void text(double x, double y, const std::string& s, int size,
            const std::string& anchor) {
    out_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
         << "\" text-anchor=\"" << anchor << "\" font-family=\"sans-serif\">" << s
         << "</text>\n";
  }

  static double plot_w() { return kWidth - kMarginLeft - kMarginRight; }
  static double plot_h() { return kHeight - kMarginTop - kMarginBottom; }

 private:
  std::ofstream out_;
};

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (const Series& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xlo = std::min(xlo, s.x[i]);
      xhi = std::max(xhi, s.x[i]);
      ylo = std::min(ylo, s.y[i]);
      yhi = std::max(yhi, s.y[i]);
    }
  Range xr = make_range(xlo, xhi), yr = make_range(ylo, yhi);

  Canvas c(path);
  c.frame(title, x_label, y_label, xr, yr);
  int color_idx = 0;
  double legend_y = kMarginTop + 14;
  for (const Series& s : series) {
    std::string color =
        s.color.empty() ? kPalette[color_idx++ % 8] : s.color;
    std::vector<std::pair<double, double>> pts;
    pts.reserve(s.x.size());
    for (std::size_t i = 0; i < s.x.size(); ++i)
      pts.push_back({xr.map(s.x[i], kMarginLeft, kMarginLeft + Canvas::plot_w()),
                     yr.map(s.y[i], kMarginTop + Canvas::plot_h(), kMarginTop)});
    c.polyline(pts, color);
    if (!s.label.empty()) {
      c.line(kMarginLeft + Canvas::plot_w() - 120, legend_y - 4,
             kMarginLeft + Canvas::plot_w() - 100, legend_y - 4, color, 2.0);
      c.text(kMarginLeft + Canvas::plot_w() - 95, legend_y, s.label, 10, "start");
      legend_y += 14;
    }
  }
}

void write_scatter_plot(const std::string& path, const std::string& title,
                        const std::string& x_label, const std::string& y_label,
                        const std::vector<double>& x, const std::vector<double>& y) {
  double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo;
  double ylo = xlo, yhi = -xlo;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xlo = std::min(xlo, x[i]);
    xhi = std::max(xhi, x[i]);
    ylo = std::min(ylo, y[i]);
    yhi = std::max(yhi, y[i]);
  }
  Range xr = make_range(xlo, xhi), yr = make_range(ylo, yhi);

  Canvas c(path);
  c.frame(title, x_label, y_label, xr, yr);
  for (std::size_t i = 0; i < x.size(); ++i)
    c.circle(xr.map(x[i], kMarginLeft, kMarginLeft + Canvas::plot_w()),
             yr.map(y[i], kMarginTop + Canvas::plot_h(), kMarginTop), 2.2,
             "#1f77b4");
}

void write_histogram(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<double>& values,
                     int bins) {
  if (bins < 1) bins = 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (values.empty()) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi <= lo) hi = lo + 1.0;
  std::vector<int> counts(bins, 0);
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    counts[std::clamp(b, 0, bins - 1)]++;
  }
  int peak = 1;
  for (int cnt : counts) peak = std::max(peak, cnt);

  Range xr = make_range(lo, hi);
  Range yr{0.0, static_cast<double>(peak) * 1.05};
  Canvas c(path);
  c.frame(title, x_label, "count", xr, yr);
  const double bw = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    double x0 = xr.map(lo + b * bw, kMarginLeft, kMarginLeft + Canvas::plot_w());
    double x1 = xr.map(lo + (b + 1) * bw, kMarginLeft, kMarginLeft + Canvas::plot_w());
    double y0 = yr.map(counts[b], kMarginTop + Canvas::plot_h(), kMarginTop);
    double base = yr.map(0.0, kMarginTop + Canvas::plot_h(), kMarginTop);
    c.rect(x0, y0, std::max(1.0, x1 - x0 - 1.0), base - y0, "#1f77b4");
  }
}

}  // namespace qkdlab::svg
