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

// Static SVG line charts of sweep CSVs (mean mAP with standard-error bars).

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgsc::tools {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> sem;  // standard error of the mean over seeds
};

// Groups sweep rows by every key column except `x_column` and `seed`, then
// averages mAP over seeds at each x.
std::vector<Series> series_from_csv(std::istream& in, const std::string& x_column);

void write_svg(std::ostream& out, const std::vector<Series>& series, const std::string& title,
               const std::string& x_label, const std::string& y_label);

}  // namespace kgsc::tools
