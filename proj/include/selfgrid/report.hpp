#pragma once

#include "selfgrid/decomposition.hpp"
#include "selfgrid/scenario.hpp"

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace selfgrid {

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

struct SweepRow {
  double epsilon = 0.0;
  int subnetworks = 0;
  int max_block_size = 0; // buses + DGs of the largest subnetwork
  int uncontrollable_buses = 0;
};

std::vector<SweepRow> sweep(const SensitivityMatrix& sens, const GridModel& grid, DgMode mode,
                            const std::vector<double>& epsilons);

// Every writer emits a header row and a fixed column order.
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
void write_blocks_csv(std::ostream& os, const Decomposition& dec);
void write_rounds_csv(std::ostream& os, const SimReport& report);
void write_comparison_csv(std::ostream& os, const std::vector<ComparisonRow>& rows);
void write_voltage_profile_csv(std::ostream& os, const std::vector<SimReport>& reports);
void write_message_log(std::ostream& os, const SimReport& report);

/// One JSON object per line: a header record, then one per subnetwork, then
/// the uncontrollable buses.
void write_decomposition_jsonl(std::ostream& os, const Decomposition& dec);

/// rounds_<method>.csv, messages_<method>.log (proposed only), plus
/// comparison.csv and voltage_profile.csv over all reports.
void write_report_files(const std::filesystem::path& dir, const std::vector<SimReport>& reports);

} // namespace selfgrid
