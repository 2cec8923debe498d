#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ssp3d/errors.hpp"

namespace ssp3d {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal deterministic SVG line chart: fixed canvas, fixed palette, values
// printed with fixed precision so identical inputs yield identical bytes.
inline std::string render_svg(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel, const std::vector<Series>& series) {
  if (series.empty()) throw DataError("render_svg: no series");
  const int W = 640, H = 420, ML = 60, MR = 20, MT = 40, MB = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DataError("render_svg: series length mismatch");
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (xmax <= xmin) xmax = xmin + 1.0;
  if (ymax <= ymin) ymax = ymin + 1.0;
  const auto px = [&](double v) { return ML + (v - xmin) / (xmax - xmin) * (W - ML - MR); };
  const auto py = [&](double v) { return H - MB - (v - ymin) / (ymax - ymin) * (H - MT - MB); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
      << "</text>\n";
  // axes
  out << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
      << H - MB << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ML << "\" y1=\"" << MT << "\" x2=\"" << ML << "\" y2=\"" << H - MB
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << (ML + W - MR) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n";
  out << "<text x=\"16\" y=\"" << (MT + H - MB) / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (MT + H - MB) / 2 << ")\">" << ylabel << "</text>\n";
  // ticks: 5 per axis
  out << std::setprecision(4);
  for (int i = 0; i <= 4; ++i) {
    const double xv = xmin + (xmax - xmin) * i / 4.0;
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x=\"" << std::fixed << px(xv) << "\" y=\"" << H - MB + 16
        << "\" text-anchor=\"middle\" font-size=\"10\">" << xv << "</text>\n";
    out << "<text x=\"" << ML - 6 << "\" y=\"" << py(yv) + 3
        << "\" text-anchor=\"end\" font-size=\"10\">" << yv << "</text>\n";
  }
  // series polylines + legend
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = palette[si % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) out << " ";
      out << px(s.x[i]) << "," << py(s.y[i]);
    }
    out << "\"/>\n";
    const int ly = MT + 14 * static_cast<int>(si);
    out << "<line x1=\"" << W - MR - 120 << "\" y1=\"" << ly << "\" x2=\"" << W - MR - 100
        << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << W - MR - 95 << "\" y=\"" << ly + 4 << "\" font-size=\"10\">" << s.label
        << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

namespace detail {

inline std::vector<std::vector<double>> read_tsv_table(const std::string& path,
                                                       std::vector<std::string>& header) {
  std::ifstream f(path);
  if (!f) throw DataError("plots: missing metrics log " + path);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool first = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    if (first) {
      while (std::getline(ss, cell, '\t')) header.push_back(cell);
      first = false;
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, '\t')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline int col_index(const std::vector<std::string>& header, const std::string& name,
                     const std::string& path) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw DataError("plots: column '" + name + "' missing from " + path);
}

inline Series column_series(const std::string& path, const std::string& xcol,
                            const std::string& ycol, const std::string& label) {
  std::vector<std::string> header;
  auto rows = read_tsv_table(path, header);
  const int xi = col_index(header, xcol, path);
  const int yi = col_index(header, ycol, path);
  Series s;
  s.label = label;
  for (const auto& r : rows) {
    s.x.push_back(r[xi]);
    s.y.push_back(r[yi]);
  }
  return s;
}

}  // namespace detail

// Stage loss curves for a completed run directory, plus optional sweep
// charts when sweep tables are present (`ratio_sweep.tsv` with columns
// ratio/supervised/ssl, `alpha_sweep.tsv` with columns alpha/iou).
// Missing stage logs raise an error naming every expected file.
inline void emit_plots(const std::string& run_dir) {
  const std::string warm = run_dir + "/warmup_metrics.tsv";
  const std::string mut = run_dir + "/mutual_metrics.tsv";
  std::string missing;
  if (!std::filesystem::exists(warm)) missing += " " + warm;
  if (!std::filesystem::exists(mut)) missing += " " + mut;
  if (!missing.empty())
    throw DataError("plots: expected metric logs not found:" + missing);

  std::filesystem::create_directories(run_dir + "/plots");
  {
    std::vector<Series> s;
    s.push_back(detail::column_series(warm, "epoch", "rec_loss", "reconstruction"));
    s.push_back(detail::column_series(warm, "epoch", "disc_loss", "discriminator"));
    std::ofstream f(run_dir + "/plots/warmup_loss.svg");
    f << render_svg("Warm-up losses", "epoch", "loss", s);
  }
  {
    std::vector<Series> s;
    s.push_back(detail::column_series(mut, "epoch", "rec_loss", "supervised"));
    s.push_back(detail::column_series(mut, "epoch", "unsup_loss", "unsupervised"));
    s.push_back(detail::column_series(mut, "epoch", "mean_score", "mean score"));
    std::ofstream f(run_dir + "/plots/mutual_loss.svg");
    f << render_svg("Mutual-learning losses", "epoch", "loss", s);
  }
  const std::string ratio = run_dir + "/ratio_sweep.tsv";
  if (std::filesystem::exists(ratio)) {
    std::vector<Series> s;
    s.push_back(detail::column_series(ratio, "ratio", "supervised", "supervised only"));
    s.push_back(detail::column_series(ratio, "ratio", "ssl", "semi-supervised"));
    std::ofstream f(run_dir + "/plots/iou_vs_ratio.svg");
    f << render_svg("IoU vs labeled ratio", "labeled ratio", "mean IoU (%)", s);
  }
  const std::string alpha = run_dir + "/alpha_sweep.tsv";
  if (std::filesystem::exists(alpha)) {
    std::vector<Series> s;
    s.push_back(detail::column_series(alpha, "alpha", "iou", "teacher"));
    std::ofstream f(run_dir + "/plots/iou_vs_alpha.svg");
    f << render_svg("IoU vs EMA floor", "alpha0", "mean IoU (%)", s);
  }
}

// Generic sweep chart (e.g. IoU vs labeled ratio, IoU vs EMA floor).
inline void emit_sweep_plot(const std::string& out_path, const std::string& title,
                            const std::string& xlabel, const std::vector<Series>& series) {
  std::ofstream f(out_path);
  if (!f) throw DataError("plots: cannot open " + out_path);
  f << render_svg(title, xlabel, "mean IoU (%)", series);
}

}  // namespace ssp3d
