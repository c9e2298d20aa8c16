#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "run_config.hpp"
#include "slide/dataset.hpp"

namespace slide::runner {

// Raised when training produces a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DataSplit {
    Dataset train;
    Dataset test;
};

// Reads the configured files, or draws the synthetic set when no train path
// is given.
DataSplit load_data(const RunConfig& config);

struct EvalRow {
    std::uint64_t iteration = 0;
    // Cumulative training time; evaluation is not counted.
    double wall_seconds = 0;
    // Mean batch loss since the previous row.
    double train_loss = 0;
    double test_p1 = 0;
    double test_p5 = 0;
    // Mean active fraction since the previous row, one entry per LSH layer.
    std::vector<double> active_fraction;
};

struct TrainResult {
    std::vector<EvalRow> rows;
    std::uint64_t iterations = 0;
    double train_seconds = 0;
    // Mean number of active output neurons per instance over the whole run.
    double mean_output_active = 0;
    // Final P@1 when every output neuron is scored.
    double full_output_p1 = 0;
    std::filesystem::path csv_path;
    std::filesystem::path checkpoint_path;

    const EvalRow& final_row() const { return rows.back(); }
};

// Trains, evaluating every eval_every iterations and after the last one.
// Writes <out_dir>/train.csv and, if enabled, <out_dir>/model.slde.
TrainResult run_train(const RunConfig& config, const DataSplit& data);
TrainResult run_train(const RunConfig& config);

// P@1 and P@5 on a fixed subsample of `test`, from sampled or (`dense`)
// full-output prediction.
std::pair<double, double> evaluate(Network& net, const Dataset& test, std::uint32_t max_examples,
                                   std::uint64_t seed, int workers, bool dense = false);

struct SamplerTiming {
    SamplingStrategy strategy;
    std::uint32_t n;
    double seconds;
};

// Median time per call of each strategy on identical candidate streams of
// n ids spread over the configured number of tables.
std::vector<SamplerTiming> run_bench_samplers(const RunConfig& config);

struct InsertionTiming {
    BucketPolicy policy;
    double insert_seconds;  // bucket insertion from precomputed codes
    double full_seconds;    // hashing plus insertion
    std::uint64_t stored;   // ids held across all tables afterwards
};

// Times table construction under FIFO and Reservoir on random rows.
std::vector<InsertionTiming> run_bench_insertion(const RunConfig& config);

struct ScalingRow {
    int workers;
    double seconds;
    double final_p1;
};

// Fixed-iteration training at each configured worker count.
std::vector<ScalingRow> run_scaling(const RunConfig& config, const DataSplit& data);
std::vector<ScalingRow> run_scaling(const RunConfig& config);

void write_csv(std::ostream& out, const RunConfig& config, const std::vector<SamplerTiming>& rows);
void write_csv(std::ostream& out, const RunConfig& config, const std::vector<InsertionTiming>& rows);
void write_csv(std::ostream& out, const RunConfig& config, const std::vector<ScalingRow>& rows);

}  // namespace slide::runner
