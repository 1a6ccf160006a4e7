#include "koopman_ddpc/csv_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace kddpc {

std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string CsvTable::to_string() const {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ',';
    out += header[i];
  }
  out += '\n';
  for (const auto& row : rows) {
    require(row.size() == header.size(), ErrorCode::kDimension, "CSV row width differs from header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += format_double(row[i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    fail(ErrorCode::kIo, "bad number '" + s + "' on CSV line " + std::to_string(line));
  return v;
}

}  // namespace

CsvTable CsvTable::parse(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    require(cells.size() == t.header.size(), ErrorCode::kIo,
            "CSV line " + std::to_string(n) + " has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(t.header.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_double(c, n));
    t.rows.push_back(std::move(row));
  }
  require(!t.header.empty(), ErrorCode::kIo, "CSV has no header row");
  return t;
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorCode::kIo, "cannot create directory " + path.parent_path().string());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." +
         std::to_string(std::hash<std::string>{}(path.string() + content.substr(0, 64)));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::kIo, "cannot move output into place at " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

void add_names(std::vector<std::string>& header, const std::string& prefix, int n) {
  for (int i = 1; i <= n; ++i) header.push_back(prefix + "_" + std::to_string(i));
}

void append(std::vector<double>& row, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) row.push_back(v(i));
}

}  // namespace

CsvTable run_table(const TrackingRun& run) {
  CsvTable t;
  const int nz = run.horizon() ? static_cast<int>(run.states.front().size()) : 0;
  const int nu = run.horizon() ? static_cast<int>(run.controls.front().size()) : 0;
  t.header.push_back("t");
  add_names(t.header, "z", nz);
  add_names(t.header, "u", nu);
  add_names(t.header, "r", nz);
  t.header.push_back("stage_cost");
  t.header.push_back("solve_ms");
  for (int k = 0; k < run.horizon(); ++k) {
    const auto i = static_cast<std::size_t>(k);
    std::vector<double> row{static_cast<double>(k + 1)};
    append(row, run.states[i]);
    append(row, run.controls[i]);
    append(row, run.targets[i]);
    row.push_back(run.stage_costs[i]);
    row.push_back(run.solve_ms[i]);
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable reference_table(const ReferenceTrajectory& r) {
  CsvTable t;
  t.header.push_back("t");
  add_names(t.header, "r", r.dim());
  for (int k = 1; k <= r.horizon(); ++k) {
    std::vector<double> row{static_cast<double>(k)};
    append(row, r.at(k));
    t.rows.push_back(std::move(row));
  }
  return t;
}

ReferenceTrajectory reference_from_table(const CsvTable& table) {
  require(table.header.size() >= 2 && table.header.front() == "t", ErrorCode::kIo,
          "reference CSV needs columns t,r_1,...");
  std::vector<Vector> targets;
  for (std::size_t k = 0; k < table.rows.size(); ++k) {
    const auto& row = table.rows[k];
    require(row[0] == static_cast<double>(k + 1), ErrorCode::kIo,
            "reference CSV time column must count 1,2,...");
    Vector v(static_cast<Eigen::Index>(row.size() - 1));
    for (std::size_t i = 1; i < row.size(); ++i) v(static_cast<Eigen::Index>(i - 1)) = row[i];
    targets.push_back(std::move(v));
  }
  return ReferenceTrajectory(std::move(targets));
}

CsvTable offline_table(const OfflineSolution& sol, const ValueFunctionCoeffs& value) {
  CsvTable t;
  const int nu = sol.controls.empty() ? 0 : static_cast<int>(sol.controls.front().size());
  const int nx = sol.states.empty() ? 0 : static_cast<int>(sol.states.front().size());
  t.header.push_back("t");
  add_names(t.header, "u", nu);
  add_names(t.header, "x", nx);
  t.header.push_back("cost_to_go");
  for (std::size_t k = 0; k < sol.controls.size(); ++k) {
    std::vector<double> row{static_cast<double>(k + 1)};
    append(row, sol.controls[k]);
    append(row, sol.states[k]);
    row.push_back(value.evaluate(static_cast<int>(k + 1), sol.states[k]));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable data_table(const std::vector<ExcitationData>& trajectories, bool inputs) {
  CsvTable t;
  const auto& first = inputs ? trajectories.front().u : trajectories.front().z;
  t.header = {"traj", "k"};
  add_names(t.header, inputs ? "u" : "z", static_cast<int>(first.front().size()));
  for (std::size_t j = 0; j < trajectories.size(); ++j) {
    const auto& seq = inputs ? trajectories[j].u : trajectories[j].z;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      std::vector<double> row{static_cast<double>(j), static_cast<double>(k + 1)};
      append(row, seq[k]);
      t.rows.push_back(std::move(row));
    }
  }
  return t;
}

std::vector<ExcitationData> data_from_tables(const CsvTable& u_table, const CsvTable& z_table) {
  require(u_table.rows.size() == z_table.rows.size(), ErrorCode::kIo,
          "u_d and z_d have different row counts");
  std::vector<ExcitationData> out;
  for (std::size_t k = 0; k < u_table.rows.size(); ++k) {
    const auto& ur = u_table.rows[k];
    const auto& zr = z_table.rows[k];
    require(ur[0] == zr[0] && ur[1] == zr[1], ErrorCode::kIo,
            "u_d and z_d rows are not aligned at row " + std::to_string(k + 1));
    const auto traj = static_cast<std::size_t>(ur[0]);
    if (traj == out.size()) out.emplace_back();
    require(traj + 1 == out.size(), ErrorCode::kIo, "trajectory index must be contiguous");
    require(ur[1] == static_cast<double>(out.back().u.size() + 1), ErrorCode::kIo,
            "sample index must count 1,2,... per trajectory");
    out.back().u.push_back(Eigen::Map<const Vector>(ur.data() + 2, static_cast<Eigen::Index>(ur.size() - 2)));
    out.back().z.push_back(Eigen::Map<const Vector>(zr.data() + 2, static_cast<Eigen::Index>(zr.size() - 2)));
  }
  require(!out.empty(), ErrorCode::kIo, "data files contain no samples");
  return out;
}

CsvTable sweep_table(const std::vector<SweepRow>& rows, double slope_fit) {
  CsvTable t;
  t.header = {"W", "regret", "truncation", "feedback", "feedforward", "identity_gap", "slope_fit"};
  for (const auto& r : rows)
    t.rows.push_back({static_cast<double>(r.W), r.regret, r.terms.truncation, r.terms.feedback,
                      r.terms.feedforward, r.identity_gap, slope_fit});
  return t;
}

std::string regret_plot_script(const std::string& data_file, const std::string& title) {
  std::ostringstream s;
  s << "set datafile separator ','\n"
    << "set logscale y\n"
    << "set xlabel 'W'\n"
    << "set ylabel 'dynamic regret'\n"
    << "set key top right\n"
    << "set title '" << title << "'\n"
    << "plot '" << data_file << "' skip 1 using 1:2 with linespoints title 'regret'\n";
  return s.str();
}

}  // namespace kddpc
