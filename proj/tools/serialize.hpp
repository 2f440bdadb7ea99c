#pragma once

// JSON and CSV (de)serialization for the potapprox CLI artifacts. Kept out of
// include/ so the library itself depends only on Eigen.

#include <Eigen/Dense>

#include <cstdint>
#include <cstdio>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "potapprox/solver.hpp"

namespace potapprox::tools {

using nlohmann::json;

inline constexpr const char* kSchema = "potapprox/v1";
inline constexpr const char* kCsvHeader =
    "sweep,f,step_norm,kkt_total,active_rank,truncated,proximal_mask,wall_ms";

// %.17g round-trips doubles exactly and keeps output byte-deterministic
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const json& a) {
  if (!a.is_array()) throw ArgumentError("json: expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ArgumentError("json: expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline json mat_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd mat_from_json(const json& a) {
  if (!a.is_array() || a.empty()) throw ArgumentError("json: expected a non-empty matrix");
  const std::size_t rows = a.size();
  if (!a[0].is_array()) throw ArgumentError("json: expected nested arrays for a matrix");
  const std::size_t cols = a[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!a[i].is_array() || a[i].size() != cols)
      throw ArgumentError("json: ragged matrix rows");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!a[i][j].is_number()) throw ArgumentError("json: matrix entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
    }
  }
  return m;
}

inline json factors_to_json(const FactorSet& u) {
  json a = json::array();
  for (const auto& f : u.factors) a.push_back(mat_to_json(f));
  return a;
}

inline FactorSet factors_from_json(const json& a, int s) {
  if (!a.is_array() || a.empty()) throw ArgumentError("json: expected a factor list");
  FactorSet u;
  u.s = s;
  for (const auto& m : a) u.factors.push_back(mat_from_json(m));
  return u;
}

inline json traces_to_json(const std::vector<InnerSweepTrace>& traces) {
  json a = json::array();
  for (const auto& tr : traces) {
    json chain = json::array();
    for (const auto& lam : tr.lambdas_by_mode) chain.push_back(vec_to_json(lam));
    json steps = json::array();
    for (const auto& st : tr.als_col_steps) steps.push_back(vec_to_json(st));
    a.push_back(json{{"sweep", tr.sweep},
                     {"s", tr.s},
                     {"lambdas_by_mode", std::move(chain)},
                     {"als_col_steps", std::move(steps)}});
  }
  return a;
}

inline std::vector<InnerSweepTrace> traces_from_json(const json& a) {
  if (!a.is_array()) throw ArgumentError("json: expected a trace list");
  std::vector<InnerSweepTrace> out;
  for (const auto& t : a) {
    InnerSweepTrace tr;
    tr.sweep = t.at("sweep").get<int>();
    tr.s = t.at("s").get<int>();
    for (const auto& lam : t.at("lambdas_by_mode")) tr.lambdas_by_mode.push_back(vec_from_json(lam));
    for (const auto& st : t.at("als_col_steps")) tr.als_col_steps.push_back(vec_from_json(st));
    out.push_back(std::move(tr));
  }
  return out;
}

struct CsvRow {
  int sweep = 0;
  double f = 0.0;
  double step_norm = 0.0;
  double kkt_total = 0.0;
  int active_rank = 0;
  std::vector<int> truncated;
  unsigned proximal_mask = 0;
  double wall_ms = 0.0;
};

inline std::string csv_line(const CsvRow& r) {
  std::string line = std::to_string(r.sweep);
  line += ',' + fmt_double(r.f);
  line += ',' + fmt_double(r.step_norm);
  line += ',' + fmt_double(r.kkt_total);
  line += ',' + std::to_string(r.active_rank);
  line += ',';
  for (std::size_t i = 0; i < r.truncated.size(); ++i) {
    if (i) line += ';';
    line += std::to_string(r.truncated[i]);
  }
  line += ',' + std::to_string(r.proximal_mask);
  line += ',' + fmt_double(r.wall_ms);
  return line;
}

inline CsvRow row_from_record(const IterationRecord& rec, bool wall_clock) {
  CsvRow r;
  r.sweep = rec.sweep;
  r.f = rec.objective_f;
  r.step_norm = rec.step_norm;
  r.kkt_total = rec.kkt_residual ? *rec.kkt_residual : 0.0;
  r.active_rank = rec.active_rank;
  r.truncated = rec.truncated_indices;
  for (int m : rec.proximal_modes) r.proximal_mask |= 1u << m;
  r.wall_ms = wall_clock ? rec.wall_time_ms : 0.0;
  return r;
}

namespace detail {
inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s) {
  if (s.empty()) throw ArgumentError("csv: empty numeric field");
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ArgumentError("csv: bad numeric field '" + s + "'");
  }
  if (pos != s.size()) throw ArgumentError("csv: bad numeric field '" + s + "'");
  return v;
}

inline long parse_int(const std::string& s) {
  if (s.empty()) throw ArgumentError("csv: empty integer field");
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    throw ArgumentError("csv: bad integer field '" + s + "'");
  }
  if (pos != s.size()) throw ArgumentError("csv: bad integer field '" + s + "'");
  return v;
}
}  // namespace detail

inline std::vector<CsvRow> parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("csv: empty log");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ArgumentError("csv: unexpected header '" + line + "'");
  std::vector<CsvRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 8) throw ArgumentError("csv: expected 8 fields per row");
    CsvRow r;
    r.sweep = static_cast<int>(detail::parse_int(f[0]));
    r.f = detail::parse_double(f[1]);
    r.step_norm = detail::parse_double(f[2]);
    r.kkt_total = detail::parse_double(f[3]);
    r.active_rank = static_cast<int>(detail::parse_int(f[4]));
    if (!f[5].empty())
      for (const auto& t : detail::split(f[5], ';')) r.truncated.push_back(static_cast<int>(detail::parse_int(t)));
    r.proximal_mask = static_cast<unsigned>(detail::parse_int(f[6]));
    r.wall_ms = detail::parse_double(f[7]);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ArgumentError("csv: no data rows");
  return rows;
}

// Just enough of an IterationRecord for the diagnostics over a parsed log.
inline std::vector<IterationRecord> records_from_rows(const std::vector<CsvRow>& rows) {
  std::vector<IterationRecord> recs;
  recs.reserve(rows.size());
  for (const auto& r : rows) {
    IterationRecord rec;
    rec.sweep = r.sweep;
    rec.objective_f = r.f;
    rec.step_norm = r.step_norm;
    rec.kkt_residual = r.kkt_total;
    rec.active_rank = r.active_rank;
    rec.truncated_indices = r.truncated;
    recs.push_back(std::move(rec));
  }
  return recs;
}

}  // namespace potapprox::tools
