#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fairlink/predictor.hpp"
#include "fairlink/split.hpp"
#include "fairlink/synthetic.hpp"

namespace fairlink {

struct MetricsRecord {
    std::string graph_id;
    std::string distill_architecture;  // "none" for the original graph
    std::string architecture;
    std::uint64_t seed = 0;
    double f1 = 0.0;
    double auc = 0.0;
    double delta_dp = 0.0;
    double delta_eo = 0.0;
    double runtime_s = 0.0;
};

// Encoder inputs a predictor is trained on; test scoring uses the same inputs.
struct TrainingSubstrate {
    std::string graph_id;
    std::string distill_architecture = "none";
    EncoderInput input;
};

// Message passing over the training edges only, original features.
TrainingSubstrate original_substrate(const Graph& g, const EdgeSplit& split, std::string graph_id = "original");
TrainingSubstrate artifact_substrate(const SyntheticArtifact& art, std::string graph_id = "fairlink");

struct EvalOptions {
    std::size_t epochs = 200;
    double lr = 0.01;
    double weight_decay = 0.0;
    std::size_t hidden = 64;
    std::size_t embed = 32;
    double neg_ratio = 1.0;
    double threshold = 0.5;
};

// Trains on the substrate with the split's training positives (fresh negatives
// each epoch), then scores the split's test positives and negatives.
MetricsRecord evaluate(const TrainingSubstrate& sub, const EdgeSplit& split, std::span<const int> sensitive,
                       Architecture arch, std::uint64_t seed, const EvalOptions& opts = {});

// Every (architecture, seed) cell, sorted by (graph_id, distill_architecture,
// architecture, seed). `threads` > 1 evaluates cells concurrently.
std::vector<MetricsRecord> cross_arch_sweep(const TrainingSubstrate& sub, const EdgeSplit& split,
                                            std::span<const int> sensitive, std::span<const Architecture> archs,
                                            std::span<const std::uint64_t> seeds, const EvalOptions& opts = {},
                                            std::size_t threads = 1);

struct ReportRow {
    std::string graph_id;
    std::string distill_architecture;
    std::string architecture;
    std::size_t runs = 0;
    double f1_mean = 0, f1_std = 0, auc_mean = 0, auc_std = 0;
    double dp_mean = 0, dp_std = 0, eo_mean = 0, eo_std = 0;
};

// One row per (graph_id, distill_architecture, architecture): mean and sample
// standard deviation (0 for a single run).
std::vector<ReportRow> tradeoff_report(std::span<const MetricsRecord> records);

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows, int decimals = 4);
// Columns delta_dp, auc, label: one line per record.
void write_scatter_csv(std::ostream& out, std::span<const MetricsRecord> records, int decimals = 4);

// One JSON object per line with a fixed key order. runtime_s is included only
// when requested, so default output is reproducible byte for byte.
std::string to_json_line(const MetricsRecord& r, bool with_runtime = false);
MetricsRecord from_json_line(const std::string& line);
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path);
void write_metrics(const std::filesystem::path& path, std::span<const MetricsRecord> records, bool with_runtime = false);

}  // namespace fairlink
