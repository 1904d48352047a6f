// Copyright 2026 The tpmhe Authors
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

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "tpmhe/core.hpp"

namespace tpmhe {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) throw ValidationError("invalid number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write '" + path.string() + "'");
  f << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ValidationError("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

/// Sidecar manifest path: the CSV path with extension .json.
inline fs::path manifest_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

// ---------------------------------------------------------------------------
// Data batches
// ---------------------------------------------------------------------------

struct BatchDims {
  int n = 0, m = 0, q = 0, p = 0;
};

/// Writes `t,u1..um,y1..yp[,x1..xn,w1..wq,v1..vp]` rows plus a JSON sidecar.
/// The last row leaves the w cells empty.
inline void write_batch(const DataBatch& b, const fs::path& csv, const BatchDims& dims) {
  std::ostringstream out;
  out << "t";
  for (int i = 1; i <= dims.m; ++i) out << ",u" << i;
  for (int i = 1; i <= dims.p; ++i) out << ",y" << i;
  if (b.truth) {
    for (int i = 1; i <= dims.n; ++i) out << ",x" << i;
    for (int i = 1; i <= dims.q; ++i) out << ",w" << i;
    for (int i = 1; i <= dims.p; ++i) out << ",v" << i;
  }
  out << "\n";
  auto put = [&](const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) out << "," << format_double(v(i));
  };
  for (std::size_t k = 0; k < b.size(); ++k) {
    out << (b.t0 + static_cast<TimeIndex>(k));
    put(b.inputs[k]);
    put(b.outputs[k]);
    if (b.truth) {
      put(b.truth->x[k]);
      if (k < b.truth->w.size()) put(b.truth->w[k]);
      else
        for (int i = 0; i < dims.q; ++i) out << ",";
      put(b.truth->v[k]);
    }
    out << "\n";
  }
  write_text(csv, out.str());
  Json man{{"model_id", b.meta.model_id},
           {"seed", b.meta.seed},
           {"t0", b.t0},
           {"length", b.size()},
           {"dimensions", {{"n", dims.n}, {"m", dims.m}, {"q", dims.q}, {"p", dims.p}}},
           {"has_truth", b.truth.has_value()},
           {"generation", b.meta.generation},
           {"data_digest", hex_digest(fnv1a64(out.str()))}};
  write_json(manifest_path(csv), man);
}

inline DataBatch read_batch(const fs::path& csv, BatchDims* dims_out = nullptr) {
  const Json man = read_json(manifest_path(csv));
  BatchDims dims;
  const auto& d = man.at("dimensions");
  dims.n = d.at("n").get<int>();
  dims.m = d.at("m").get<int>();
  dims.q = d.at("q").get<int>();
  dims.p = d.at("p").get<int>();
  const bool truth = man.value("has_truth", false);
  DataBatch b;
  b.t0 = man.at("t0").get<TimeIndex>();
  b.meta.model_id = man.value("model_id", std::string());
  b.meta.seed = man.value("seed", std::uint64_t{0});
  b.meta.generation = man.value("generation", Json::object());
  std::istringstream in(read_text(csv));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty batch file '" + csv.string() + "'");
  const std::size_t cols = 1 + static_cast<std::size_t>(dims.m + dims.p) +
                           (truth ? static_cast<std::size_t>(dims.n + dims.q + dims.p) : 0);
  if (split_csv_line(line).size() != cols) throw ValidationError("batch header does not match the manifest");
  TruthRecord tr;
  const std::size_t length = man.at("length").get<std::size_t>();
  auto take = [](const std::vector<std::string>& cells, std::size_t& c, int k) {
    Vec v(k);
    for (int i = 0; i < k; ++i) v(i) = parse_double(cells.at(c++));
    return v;
  };
  for (std::size_t row = 0; std::getline(in, line); ++row) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != cols) throw ValidationError("batch row " + std::to_string(row) + " has the wrong width");
    if (std::stoll(cells[0]) != b.t0 + static_cast<TimeIndex>(row))
      throw ValidationError("batch rows are not consecutive");
    std::size_t c = 1;
    b.inputs.push_back(take(cells, c, dims.m));
    b.outputs.push_back(take(cells, c, dims.p));
    if (truth) {
      tr.x.push_back(take(cells, c, dims.n));
      if (row + 1 < length) tr.w.push_back(take(cells, c, dims.q));
      else c += static_cast<std::size_t>(dims.q);
      tr.v.push_back(take(cells, c, dims.p));
    }
  }
  if (b.size() != length) throw ValidationError("batch length differs from the manifest");
  if (truth) b.truth = std::move(tr);
  if (dims_out) *dims_out = dims;
  return b;
}

/// Digest of the ground truth, used to check that result files refer to
/// the same simulated run.
inline std::string truth_digest(const DataBatch& b) {
  if (!b.truth) return "none";
  std::string s;
  for (const auto& x : b.truth->x)
    for (Eigen::Index i = 0; i < x.size(); ++i) s += format_double(x(i)) + ",";
  return hex_digest(fnv1a64(s));
}

// ---------------------------------------------------------------------------
// Estimate sequences
// ---------------------------------------------------------------------------

inline void write_estimates(const EstimateSequence& est, const fs::path& csv, const Json& extra = Json::object()) {
  std::ostringstream out;
  const int n = est.estimates.empty() ? 0 : static_cast<int>(est.estimates.begin()->second.size());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x" << i;
  out << "\n";
  for (const auto& [t, x] : est.estimates) {
    out << t;
    for (Eigen::Index i = 0; i < x.size(); ++i) out << "," << format_double(x(i));
    out << "\n";
  }
  write_text(csv, out.str());
  Json man{{"kind", to_string(est.kind)}, {"delay", est.delay}, {"config_digest", est.config_digest},
           {"n", n}, {"diagnostics", est.diagnostics}};
  for (auto it = extra.begin(); it != extra.end(); ++it) man[it.key()] = it.value();
  write_json(manifest_path(csv), man);
}

inline EstimateSequence read_estimates(const fs::path& csv, Json* manifest_out = nullptr) {
  const Json man = read_json(manifest_path(csv));
  EstimateSequence est;
  est.kind = estimator_kind_from_string(man.at("kind").get<std::string>());
  est.delay = man.at("delay").get<int>();
  est.config_digest = man.value("config_digest", std::string());
  est.diagnostics = man.value("diagnostics", Json::object());
  const int n = man.at("n").get<int>();
  std::istringstream in(read_text(csv));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != n + 1) throw ValidationError("estimate row has the wrong width");
    Vec x(n);
    for (int i = 0; i < n; ++i) x(i) = parse_double(cells[static_cast<std::size_t>(i) + 1]);
    est.estimates[std::stoll(cells[0])] = x;
  }
  if (manifest_out) *manifest_out = man;
  return est;
}

/// Writes a table with a header row; cells are preformatted strings.
inline void write_table(const fs::path& csv, const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << "\n";
  }
  write_text(csv, out.str());
}

}  // namespace tpmhe
