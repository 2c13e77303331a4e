// Copyright 2026 The kgsc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "kgsc/core/error.hpp"

namespace kgsc::tools {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  return out;
}

double parse_x(const std::string& s) {
  if (const auto slash = s.find('/'); slash != std::string::npos) {
    return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
  }
  return std::stod(s);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::vector<Series> series_from_csv(std::istream& in, const std::string& x_column) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::kParse, "empty sweep CSV");
  const auto header = split(line);
  auto col = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::kParse, "sweep CSV lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t x_col = col(x_column);
  const std::size_t map_col = col("mAP");
  std::vector<std::size_t> key_cols;
  for (const char* k : {"mode", "channel", "requested_R", "snr_db"}) {
    if (k != x_column) key_cols.push_back(col(k));
  }

  // series key -> x -> samples
  std::map<std::string, std::map<double, std::vector<double>>> groups;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      fail(ErrorKind::kParse, "sweep CSV line " + std::to_string(line_no) + " has " +
                                  std::to_string(cells.size()) + " cells");
    }
    std::string key;
    for (std::size_t c : key_cols) key += (key.empty() ? "" : " ") + header[c] + "=" + cells[c];
    try {
      groups[key][parse_x(cells[x_col])].push_back(std::stod(cells[map_col]));
    } catch (const std::logic_error&) {
      fail(ErrorKind::kParse, "sweep CSV line " + std::to_string(line_no) + ": bad number");
    }
  }

  std::vector<Series> out;
  for (const auto& [key, points] : groups) {
    Series s;
    s.name = key;
    for (const auto& [x, v] : points) {
      double m = 0.0;
      for (double a : v) m += a;
      m /= static_cast<double>(v.size());
      double var = 0.0;
      for (double a : v) var += (a - m) * (a - m);
      const double sem = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1) /
                                                  static_cast<double>(v.size()))
                                      : 0.0;
      s.x.push_back(x);
      s.mean.push_back(m);
      s.sem.push_back(sem);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_svg(std::ostream& out, const std::vector<Series>& series, const std::string& title,
               const std::string& x_label, const std::string& y_label) {
  const double W = 640, H = 420, left = 70, right = 220, top = 40, bottom = 60;
  double x_lo = 1e300, x_hi = -1e300, y_hi = 0.0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_hi = std::max(y_hi, s.mean[i] + s.sem[i]);
    }
  }
  if (x_lo > x_hi) x_lo = 0, x_hi = 1;
  if (x_hi == x_lo) x_hi = x_lo + 1;
  y_hi = y_hi > 0 ? std::min(1.0, std::ceil(y_hi * 10.0) / 10.0) : 1.0;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return top + ph - y / y_hi * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">"
      << title << "</text>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
      << top + ph << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 5; ++t) {
    const double yv = y_hi * t / 5.0, xv = x_lo + (x_hi - x_lo) * t / 5.0;
    out << "<text x=\"" << left - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << yv
        << "</text>\n<text x=\"" << px(xv) << "\" y=\"" << top + ph + 18
        << "\" text-anchor=\"middle\">" << xv << "</text>\n";
  }
  out << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 16 << "\" text-anchor=\"middle\">"
      << x_label << "</text>\n<text transform=\"translate(18," << top + ph / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.mean[i]) << ' ';
    out << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.mean[i]) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
      if (s.sem[i] > 0) {
        out << "<line x1=\"" << px(s.x[i]) << "\" y1=\"" << py(s.mean[i] - s.sem[i]) << "\" x2=\""
            << px(s.x[i]) << "\" y2=\"" << py(s.mean[i] + s.sem[i]) << "\" stroke=\"" << color
            << "\"/>\n";
      }
    }
    out << "<text x=\"" << left + pw + 12 << "\" y=\"" << top + 16 * (k + 1) << "\" fill=\""
        << color << "\">" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace kgsc::tools
