// CSV data layout shared by the CLI and the simulator:
//   site, role, y, a_1..a_q, w_1..w_{p-q}
// role is one of labeled / unlabeled / target / tuning; y is empty unless the
// role is labeled or tuning. Target and tuning rows use site 0. Numbers are
// written in shortest round-trip form, so a write/read cycle reproduces every
// double exactly.

#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dorm/data.hpp"
#include "dorm/errors.hpp"

namespace dorm {

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError(std::string("csv: bad number in ") + what + ": '" +
                          s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

struct CsvBundle {
  std::vector<SourceDataset> sources;
  TargetDataset target;
};

inline void write_csv(std::ostream& out,
                      const std::vector<SourceDataset>& sources,
                      const TargetDataset& target) {
  const Eigen::Index q = sources.empty() ? target.A.cols() : sources[0].A.cols();
  const Eigen::Index pw = sources.empty() ? target.W.cols() : sources[0].W.cols();
  out << "site,role,y";
  for (Eigen::Index j = 0; j < q; ++j) out << ",a_" << (j + 1);
  for (Eigen::Index j = 0; j < pw; ++j) out << ",w_" << (j + 1);
  out << "\n";

  const auto write_row = [&](int site, const char* role, const double* yval,
                             const Eigen::MatrixXd& A, const Eigen::MatrixXd& W,
                             Eigen::Index i, bool with_w) {
    out << site << ',' << role << ',';
    if (yval) out << detail::format_double(*yval);
    for (Eigen::Index j = 0; j < q; ++j)
      out << ',' << detail::format_double(A(i, j));
    for (Eigen::Index j = 0; j < pw; ++j) {
      out << ',';
      if (with_w) out << detail::format_double(W(i, j));
    }
    out << "\n";
  };

  for (const auto& src : sources) {
    for (Eigen::Index i = 0; i < src.n_total(); ++i) {
      if (i < src.n_labeled()) {
        const double yv = src.y[i];
        write_row(src.site_id, "labeled", &yv, src.A, src.W, i, true);
      } else {
        write_row(src.site_id, "unlabeled", nullptr, src.A, src.W, i, true);
      }
    }
  }
  for (Eigen::Index i = 0; i < target.n_rows(); ++i)
    write_row(0, "target", nullptr, target.A, target.W, i, true);
  if (target.tuning) {
    const auto& t = *target.tuning;
    const Eigen::MatrixXd empty_w(t.A.rows(), pw);
    const Eigen::VectorXd& vals = t.y ? *t.y : *t.surrogate;
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      const double yv = vals[i];
      write_row(0, "tuning", &yv, t.A, empty_w, i, false);
    }
  }
}

inline void write_csv_file(const std::string& path,
                           const std::vector<SourceDataset>& sources,
                           const TargetDataset& target) {
  std::ofstream out(path);
  if (!out) throw ValidationError("csv: cannot open for writing: " + path);
  write_csv(out, sources, target);
}

// Parses the layout back into datasets. Labeled rows must precede a site's
// unlabeled rows conceptually; the reader reorders them so the labeled
// prefix invariant holds regardless of file order. tuning_is_surrogate
// routes the tuning y column into the surrogate slot.
inline CsvBundle read_csv(std::istream& in, bool tuning_is_surrogate = false) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("csv: empty input");
  const std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "site" || header[1] != "role" ||
      header[2] != "y")
    throw ValidationError("csv: bad header");
  Eigen::Index q = 0, pw = 0;
  for (std::size_t j = 3; j < header.size(); ++j) {
    if (header[j].rfind("a_", 0) == 0)
      ++q;
    else if (header[j].rfind("w_", 0) == 0)
      ++pw;
    else
      throw ValidationError("csv: unknown column " + header[j]);
  }
  if (q < 1) throw ValidationError("csv: no a_ columns");

  struct Row {
    double y = 0.0;
    bool has_y = false;
    Eigen::VectorXd a, w;
  };
  std::map<int, std::vector<Row>> labeled, unlabeled;
  std::vector<Row> target_rows, tuning_rows;

  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ValidationError("csv: wrong cell count at line " +
                            std::to_string(lineno));
    Row row;
    const int site =
        static_cast<int>(detail::parse_double(cells[0], "site column"));
    const std::string& role = cells[1];
    row.has_y = !cells[2].empty();
    if (row.has_y) row.y = detail::parse_double(cells[2], "y column");
    row.a.resize(q);
    for (Eigen::Index j = 0; j < q; ++j)
      row.a[j] = detail::parse_double(cells[3 + static_cast<std::size_t>(j)],
                                      "a column");
    row.w = Eigen::VectorXd::Zero(pw);
    const bool is_tuning = role == "tuning";
    for (Eigen::Index j = 0; j < pw; ++j) {
      const std::string& cell =
          cells[3 + static_cast<std::size_t>(q) + static_cast<std::size_t>(j)];
      if (!cell.empty())
        row.w[j] = detail::parse_double(cell, "w column");
      else if (!is_tuning)
        throw ValidationError("csv: empty w cell at line " +
                              std::to_string(lineno));
    }

    if (role == "labeled") {
      if (!row.has_y)
        throw ValidationError("csv: labeled row without y at line " +
                              std::to_string(lineno));
      labeled[site].push_back(std::move(row));
    } else if (role == "unlabeled") {
      unlabeled[site].push_back(std::move(row));
    } else if (role == "target") {
      target_rows.push_back(std::move(row));
    } else if (role == "tuning") {
      if (!row.has_y)
        throw ValidationError("csv: tuning row without value at line " +
                              std::to_string(lineno));
      tuning_rows.push_back(std::move(row));
    } else {
      throw ValidationError("csv: unknown role '" + role + "' at line " +
                            std::to_string(lineno));
    }
  }

  CsvBundle bundle;
  std::map<int, std::vector<Row>*> sites;
  for (auto& [site, rows] : labeled) sites[site] = nullptr;
  for (auto& [site, rows] : unlabeled) sites[site] = nullptr;
  for (auto& [site, _] : sites) {
    auto lab = labeled.find(site);
    auto unl = unlabeled.find(site);
    const std::size_t nl = lab == labeled.end() ? 0 : lab->second.size();
    const std::size_t nu = unl == unlabeled.end() ? 0 : unl->second.size();
    SourceDataset src;
    src.site_id = site;
    src.A.resize(static_cast<Eigen::Index>(nl + nu), q);
    src.W.resize(static_cast<Eigen::Index>(nl + nu), pw);
    src.y.resize(static_cast<Eigen::Index>(nl));
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < nl; ++i, ++at) {
      src.A.row(at) = lab->second[i].a.transpose();
      src.W.row(at) = lab->second[i].w.transpose();
      src.y[static_cast<Eigen::Index>(i)] = lab->second[i].y;
    }
    for (std::size_t i = 0; i < nu; ++i, ++at) {
      src.A.row(at) = unl->second[i].a.transpose();
      src.W.row(at) = unl->second[i].w.transpose();
    }
    bundle.sources.push_back(std::move(src));
  }

  if (target_rows.empty()) throw ValidationError("csv: no target rows");
  bundle.target.A.resize(static_cast<Eigen::Index>(target_rows.size()), q);
  bundle.target.W.resize(static_cast<Eigen::Index>(target_rows.size()), pw);
  for (std::size_t i = 0; i < target_rows.size(); ++i) {
    bundle.target.A.row(static_cast<Eigen::Index>(i)) =
        target_rows[i].a.transpose();
    bundle.target.W.row(static_cast<Eigen::Index>(i)) =
        target_rows[i].w.transpose();
  }
  if (!tuning_rows.empty()) {
    TuningSample tun;
    tun.A.resize(static_cast<Eigen::Index>(tuning_rows.size()), q);
    Eigen::VectorXd vals(static_cast<Eigen::Index>(tuning_rows.size()));
    for (std::size_t i = 0; i < tuning_rows.size(); ++i) {
      tun.A.row(static_cast<Eigen::Index>(i)) = tuning_rows[i].a.transpose();
      vals[static_cast<Eigen::Index>(i)] = tuning_rows[i].y;
    }
    if (tuning_is_surrogate)
      tun.surrogate = vals;
    else
      tun.y = vals;
    bundle.target.tuning = std::move(tun);
  }
  return bundle;
}

inline CsvBundle read_csv_file(const std::string& path,
                               bool tuning_is_surrogate = false) {
  std::ifstream in(path);
  if (!in) throw ValidationError("csv: cannot open: " + path);
  return read_csv(in, tuning_is_surrogate);
}

}  // namespace dorm
