#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "badvamp/problems.hpp"
#include "badvamp/vamp_core.hpp"

namespace badvamp {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Experiment { kCsmuSweepMn, kCsmuSweepMu, kSelfcalGrid, kDlPhase, kDlCond };

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);

enum class EmitFormat { kCsv, kJson };

// A Monte-Carlo sweep: the cartesian product of the grid lists (keys in
// sorted order, last key fastest) times `trials` seeded runs per point.
// Grid values override `params` entries of the same name.
struct ExperimentConfig {
    Experiment experiment = Experiment::kCsmuSweepMn;
    std::map<std::string, std::vector<double>> grid;
    std::map<std::string, double> params;
    std::map<std::string, std::string> options;  // e.g. dictionary-learning mode
    int trials = 20;
    std::uint64_t base_seed = 1;
    SolverConfig solver;
    std::string output_path = "records.csv";
    EmitFormat format = EmitFormat::kCsv;
    bool record_timing = true;

    void validate() const;  // throws ConfigError
};

struct TrialRecord {
    std::vector<std::pair<std::string, double>> grid_point;  // sorted keys
    int grid_index = 0;
    int trial_index = 0;
    std::uint64_t seed = 0;
    Metrics metrics;
    Metrics oracle;  // oracle reference metrics where defined (NaN elsewhere)
    int iterations = 0;
    int restarts = 0;
    double wall_time_ms = 0.0;
};

// Runs every (grid point, trial) pair; trials execute concurrently when the
// configured thread count allows, each writing its preassigned slot, so the
// output order and content do not depend on the worker count.
std::vector<TrialRecord> run_experiment(const ExperimentConfig& cfg);

// CSV with one row per record plus a companion "<stem>_summary.csv" holding
// per-grid-point medians and success rates. dB values use 6 decimal places
// and NaN is written literally.
void emit_csv(const std::vector<TrialRecord>& records, const std::string& path);

void emit_json(const std::vector<TrialRecord>& records, const std::string& path);
std::vector<TrialRecord> records_from_json_file(const std::string& path);

void emit(const std::vector<TrialRecord>& records, EmitFormat format, const std::string& path);

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig config_from_json_file(const std::string& path);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

double median_ignoring_nan(std::vector<double> values);

}  // namespace badvamp
