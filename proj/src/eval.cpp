#include "fairlink/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "json.hpp"

#include "fairlink/errors.hpp"
#include "fairlink/fairness.hpp"
#include "fairlink/metrics.hpp"

namespace fairlink {

namespace {

auto sort_key(const MetricsRecord& r) {
    return std::tie(r.graph_id, r.distill_architecture, r.architecture, r.seed);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    sd = 0.0;
    if (v.size() < 2) return;
    for (double x : v) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
}

}  // namespace

TrainingSubstrate original_substrate(const Graph& g, const EdgeSplit& split, std::string graph_id) {
    return {std::move(graph_id), "none", {dense_adjacency(g.n_nodes(), split.train_pos), g.features()}};
}

TrainingSubstrate artifact_substrate(const SyntheticArtifact& art, std::string graph_id) {
    TrainingSubstrate sub{std::move(graph_id), art.meta.get_string("architecture", "unknown"),
                          {art.adjacency, art.features}};
    if (art.mode == ExportMode::sparsified) sub.graph_id += "-sparsified";
    return sub;
}

MetricsRecord evaluate(const TrainingSubstrate& sub, const EdgeSplit& split, std::span<const int> sensitive,
                       Architecture arch, std::uint64_t seed, const EvalOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t n = sub.input.features.rows();
    if (sensitive.size() != n) throw ValidationError("evaluate: sensitive vector does not match the substrate");
    if (split.test_pos.empty() || split.test_neg.empty()) throw ValidationError("evaluate: split has no test pairs");

    Supervision sup;
    sup.positives = split.train_pos;
    sup.neg_ratio = opts.neg_ratio;
    TrainOptions to;
    to.arch = arch;
    to.epochs = opts.epochs;
    to.lr = opts.lr;
    to.weight_decay = opts.weight_decay;
    to.hidden = opts.hidden;
    to.embed = opts.embed;
    to.seed = seed;
    const TrainResult trained = train_predictor(sub.input, sup, to);
    const Tensor z = embed(trained.params, sub.input);

    const auto p_pos = link_prob(z, split.test_pos);
    const auto p_neg = link_prob(z, split.test_neg);
    std::vector<double> probs = p_pos;
    probs.insert(probs.end(), p_neg.begin(), p_neg.end());
    std::vector<Edge> pairs = split.test_pos;
    pairs.insert(pairs.end(), split.test_neg.begin(), split.test_neg.end());
    std::vector<int> labels(p_pos.size(), 1);
    labels.resize(probs.size(), 0);

    MetricsRecord r;
    r.graph_id = sub.graph_id;
    r.distill_architecture = sub.distill_architecture;
    r.architecture = to_string(arch);
    r.seed = seed;
    r.f1 = f1(probs, labels, opts.threshold);
    r.auc = auc(p_pos, p_neg);
    r.delta_dp = delta_dp(probs, pairs, sensitive);
    r.delta_eo = delta_eo(p_pos, split.test_pos, sensitive);
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (double v : {r.f1, r.auc, r.delta_dp, r.delta_eo}) {
        if (!std::isfinite(v)) throw RuntimeFailure("evaluate produced a non-finite metric");
    }
    return r;
}

std::vector<MetricsRecord> cross_arch_sweep(const TrainingSubstrate& sub, const EdgeSplit& split,
                                            std::span<const int> sensitive, std::span<const Architecture> archs,
                                            std::span<const std::uint64_t> seeds, const EvalOptions& opts,
                                            std::size_t threads) {
    if (archs.empty() || seeds.empty()) throw ValidationError("cross_arch_sweep: empty architecture or seed list");
    std::vector<std::pair<Architecture, std::uint64_t>> cells;
    for (auto a : archs) {
        for (auto s : seeds) cells.emplace_back(a, s);
    }
    std::vector<MetricsRecord> out(cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
            try {
                out[i] = evaluate(sub, split, sensitive, cells[i].first, cells[i].second, opts);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::clamp<std::size_t>(threads, 1, cells.size());
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return sort_key(a) < sort_key(b); });
    return out;
}

std::vector<ReportRow> tradeoff_report(std::span<const MetricsRecord> records) {
    if (records.empty()) throw ValidationError("tradeoff_report: no records");
    std::map<std::tuple<std::string, std::string, std::string>, std::vector<const MetricsRecord*>> groups;
    for (const auto& r : records) groups[{r.graph_id, r.distill_architecture, r.architecture}].push_back(&r);
    std::vector<ReportRow> rows;
    for (const auto& [key, members] : groups) {
        ReportRow row;
        std::tie(row.graph_id, row.distill_architecture, row.architecture) = key;
        row.runs = members.size();
        auto column = [&members](double MetricsRecord::*field) {
            std::vector<double> v;
            for (const auto* m : members) v.push_back(m->*field);
            return v;
        };
        mean_std(column(&MetricsRecord::f1), row.f1_mean, row.f1_std);
        mean_std(column(&MetricsRecord::auc), row.auc_mean, row.auc_std);
        mean_std(column(&MetricsRecord::delta_dp), row.dp_mean, row.dp_std);
        mean_std(column(&MetricsRecord::delta_eo), row.eo_mean, row.eo_std);
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_report_csv(std::ostream& out, std::span<const ReportRow> rows, int decimals) {
    out << "graph_id,distill_architecture,architecture,runs,f1_mean,f1_std,auc_mean,auc_std,dp_mean,dp_std,eo_mean,eo_std\n";
    for (const auto& r : rows) {
        out << r.graph_id << ',' << r.distill_architecture << ',' << r.architecture << ',' << r.runs;
        for (double v : {r.f1_mean, r.f1_std, r.auc_mean, r.auc_std, r.dp_mean, r.dp_std, r.eo_mean, r.eo_std}) {
            out << ',' << fixed(v, decimals);
        }
        out << '\n';
    }
}

void write_scatter_csv(std::ostream& out, std::span<const MetricsRecord> records, int decimals) {
    out << "delta_dp,auc,label\n";
    for (const auto& r : records) {
        out << fixed(r.delta_dp, decimals) << ',' << fixed(r.auc, decimals) << ',' << r.graph_id << '/'
            << r.distill_architecture << '/' << r.architecture << '/' << r.seed << '\n';
    }
}

std::string to_json_line(const MetricsRecord& r, bool with_runtime) {
    nlohmann::ordered_json j;
    j["graph_id"] = r.graph_id;
    j["distill_architecture"] = r.distill_architecture;
    j["architecture"] = r.architecture;
    j["seed"] = r.seed;
    j["f1"] = r.f1;
    j["auc"] = r.auc;
    j["delta_dp"] = r.delta_dp;
    j["delta_eo"] = r.delta_eo;
    if (with_runtime) j["runtime_s"] = r.runtime_s;
    return j.dump();
}

MetricsRecord from_json_line(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
        MetricsRecord r;
        r.graph_id = j.at("graph_id").get<std::string>();
        r.distill_architecture = j.value("distill_architecture", std::string("none"));
        r.architecture = j.at("architecture").get<std::string>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.f1 = j.at("f1").get<double>();
        r.auc = j.at("auc").get<double>();
        r.delta_dp = j.at("delta_dp").get<double>();
        r.delta_eo = j.at("delta_eo").get<double>();
        r.runtime_s = j.value("runtime_s", 0.0);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad metrics record: ") + e.what());
    }
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<MetricsRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(from_json_line(line));
        } catch (const ParseError& e) {
            throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void write_metrics(const std::filesystem::path& path, std::span<const MetricsRecord> records, bool with_runtime) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    for (const auto& r : records) out << to_json_line(r, with_runtime) << '\n';
}

}  // namespace fairlink
