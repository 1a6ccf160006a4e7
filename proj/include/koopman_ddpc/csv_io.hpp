#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "koopman_ddpc/ddpc_engine.hpp"
#include "koopman_ddpc/offline_oracle.hpp"
#include "koopman_ddpc/predictive_tracking.hpp"
#include "koopman_ddpc/regret_metrics.hpp"

namespace kddpc {

/// Numeric table with a header row. Cells print in the shortest form that
/// reads back to the same double.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::string to_string() const;
  static CsvTable parse(const std::string& text);
  int column(const std::string& name) const;  ///< -1 when absent
};

std::string format_double(double v);

/// Write to a sibling temporary file, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

CsvTable run_table(const TrackingRun& run);
CsvTable reference_table(const ReferenceTrajectory& r);
ReferenceTrajectory reference_from_table(const CsvTable& table);
CsvTable offline_table(const OfflineSolution& sol, const ValueFunctionCoeffs& value);

/// `traj,k,<prefix>_1..` over one or more trajectories.
CsvTable data_table(const std::vector<ExcitationData>& trajectories, bool inputs);
std::vector<ExcitationData> data_from_tables(const CsvTable& u_table, const CsvTable& z_table);

CsvTable sweep_table(const std::vector<SweepRow>& rows, double slope_fit);

/// gnuplot script plotting ln-scale regret against W from `data_file`.
std::string regret_plot_script(const std::string& data_file, const std::string& title);

}  // namespace kddpc
