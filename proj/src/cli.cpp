#include "fairlink/cli.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "fairlink/distill.hpp"
#include "fairlink/errors.hpp"
#include "fairlink/eval.hpp"
#include "fairlink/sbm.hpp"
#include "fairlink/split.hpp"

namespace fairlink::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kDistillKeys{"alpha",    "beta",         "gamma",        "t_total", "tau1",
                                            "tau2",     "restarts",     "inner_lr",     "outer_lr_x",
                                            "outer_lr_psi", "m_pairs",  "hidden",       "embed",   "psi_hidden",
                                            "neg_ratio"};

const std::map<std::string, std::vector<std::string>>& key_table() {
    static const std::map<std::string, std::vector<std::string>> table = [] {
        std::map<std::string, std::vector<std::string>> t;
        t["gen-sbm"] = {"n_nodes", "group_sizes", "p_intra", "p_inter", "feature_dim", "feature_signal"};
        t["split"] = {"graph", "train", "val", "test", "neg_ratio"};
        t["distill"] = {"graph", "split", "architecture", "export", "target_edges"};
        t["distill"].insert(t["distill"].end(), kDistillKeys.begin(), kDistillKeys.end());
        const std::vector<std::string> eval_common{"graph",  "split",  "artifact",     "graph_id",  "runs",
                                                   "epochs", "lr",     "weight_decay", "hidden",    "embed",
                                                   "neg_ratio", "threshold", "with_runtime"};
        t["eval"] = eval_common;
        t["eval"].push_back("architecture");
        t["sweep"] = eval_common;
        t["sweep"].push_back("architectures");
        t["sweep"].push_back("parallel");
        t["report"] = {"metrics", "decimals"};
        for (auto& [name, keys] : t) {
            keys.push_back("seed");
            keys.push_back("out");
        }
        return t;
    }();
    return table;
}

const std::map<std::string, std::string>& command_help() {
    static const std::map<std::string, std::string> help{
        {"gen-sbm", "Generate a two-or-more group stochastic block model graph"},
        {"split", "Split a graph's edges into train/val/test with negatives"},
        {"distill", "Learn a fairness-aware synthetic graph and export it"},
        {"eval", "Train and score one predictor architecture over several seeds"},
        {"sweep", "Cross-architecture evaluation of a graph or artifact"},
        {"report", "Aggregate metrics files into report.csv and scatter.csv"},
    };
    return help;
}

void check_known(const KeyValues& kv, const std::string& command) {
    const auto& keys = key_table().at(command);
    for (const auto& [key, value] : kv.entries()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw ValidationError(command + ": unknown config key '" + key + "'");
        }
    }
}

KeyValues only(const KeyValues& kv, const std::vector<std::string>& keys) {
    KeyValues out;
    for (const auto& k : keys) {
        if (kv.has(k)) out.set(k, kv.get_string(k));
    }
    return out;
}

fs::path output_dir(const KeyValues& kv) {
    if (!kv.has("out")) throw ValidationError("no output directory (set --out or 'out' in the config)");
    fs::path dir = kv.get_string("out");
    fs::create_directories(dir);
    return dir;
}

fs::path required_path(const KeyValues& kv, const std::string& key) {
    if (!kv.has(key)) throw ValidationError("missing required key '" + key + "'");
    fs::path p = kv.get_string(key);
    if (!fs::exists(p)) throw ValidationError(key + " path does not exist: " + p.string());
    return p;
}

bool parse_bool(const KeyValues& kv, const std::string& key, bool fallback) {
    if (!kv.has(key)) return fallback;
    const std::string v = kv.get_string(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ValidationError("config key '" + key + "': expected true or false, got \"" + v + "\"");
}

std::size_t non_negative(const KeyValues& kv, const std::string& key, std::int64_t fallback) {
    const std::int64_t v = kv.get_int(key, fallback);
    if (v < 0) throw ValidationError("config key '" + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
}

void write_resolved(const KeyValues& kv, const fs::path& dir) { kv.save(dir / "resolved.cfg"); }

// gen-sbm --------------------------------------------------------------------

void cmd_gen_sbm(KeyValues& kv, std::ostream& out) {
    KeyValues merged = SbmConfig{}.to_keys();
    const KeyValues given =
        only(kv, {"n_nodes", "group_sizes", "p_intra", "p_inter", "feature_dim", "feature_signal", "seed"});
    for (const auto& [k, v] : given.entries()) merged.set(k, v);
    const SbmConfig cfg = SbmConfig::from_keys(merged);
    cfg.validate();
    const fs::path dir = output_dir(kv);
    const Graph g = generate_sbm(cfg);
    save_graph(g, dir);
    KeyValues resolved = cfg.to_keys();
    resolved.set("out", kv.get_string("out"));
    write_resolved(resolved, dir);
    out << "gen-sbm: " << g.n_nodes() << " nodes, " << g.edges().size() << " edges -> " << dir.string() << '\n';
}

// split ----------------------------------------------------------------------

void cmd_split(KeyValues& kv, std::ostream& out) {
    const Graph g = load_graph_dir(required_path(kv, "graph"));
    SplitRatios ratios;
    ratios.train = kv.get_double("train", ratios.train);
    ratios.val = kv.get_double("val", ratios.val);
    ratios.test = kv.get_double("test", ratios.test);
    const double neg_ratio = kv.get_double("neg_ratio", 1.0);
    const std::uint64_t seed = kv.get_u64("seed", 7);
    const fs::path dir = output_dir(kv);
    const EdgeSplit split = split_edges(g, ratios, neg_ratio, seed);
    save_split(split, dir);

    KeyValues resolved;
    resolved.set("graph", kv.get_string("graph"));
    resolved.set("train", format_double(ratios.train));
    resolved.set("val", format_double(ratios.val));
    resolved.set("test", format_double(ratios.test));
    resolved.set("neg_ratio", format_double(neg_ratio));
    resolved.set("seed", std::to_string(seed));
    resolved.set("out", kv.get_string("out"));
    write_resolved(resolved, dir);
    out << "split: " << split.train_pos.size() << "/" << split.val_pos.size() << "/" << split.test_pos.size()
        << " positives -> " << dir.string() << '\n';
}

// distill --------------------------------------------------------------------

void cmd_distill(KeyValues& kv, std::ostream& out, std::ostream& err) {
    const Graph g = load_graph_dir(required_path(kv, "graph"));
    const EdgeSplit split = load_split(required_path(kv, "split"));
    const Architecture arch = parse_architecture(kv.get_string("architecture", "sage"));
    const ExportMode mode = parse_export_mode(kv.get_string("export", "weighted"));
    std::vector<std::string> cfg_keys = kDistillKeys;
    cfg_keys.push_back("seed");
    const DistillConfig cfg = DistillConfig::from_keys(only(kv, cfg_keys));
    cfg.validate();

    std::optional<std::size_t> target;
    if (mode == ExportMode::sparsified) {
        target = non_negative(kv, "target_edges", static_cast<std::int64_t>(g.edges().size()));
    } else if (kv.has("target_edges")) {
        throw ValidationError("target_edges applies only to export = sparsified");
    }
    const fs::path dir = output_dir(kv);

    std::size_t last_restart = static_cast<std::size_t>(-1);
    auto progress = [&](const EpochRecord& r) {
        if (r.restart != last_restart) {
            last_restart = r.restart;
            err << "distill: restart " << r.restart + 1 << "/" << cfg.restarts << '\n';
        }
    };
    const DistillResult result = distill(g, split, arch, cfg, progress);

    SyntheticArtifact art = export_synthetic(result.graph, mode, target);
    art.meta.set("architecture", to_string(arch));
    art.meta.set("source_checksum", std::to_string(g.checksum()));
    const KeyValues cfg_keys_resolved = cfg.to_keys();
    for (const auto& [k, v] : cfg_keys_resolved.entries()) art.meta.set("distill." + k, v);
    save_artifact(art, dir);

    std::ofstream hist(dir / "history.csv", std::ios::binary | std::ios::trunc);
    if (!hist) throw RuntimeFailure("cannot write " + (dir / "history.csv").string());
    hist << "restart,epoch,phase,util,fair\n";
    for (const auto& r : result.history) {
        hist << r.restart << ',' << r.epoch << ',' << (r.x_phase ? "x" : "psi") << ',' << format_double(r.util) << ','
             << format_double(r.fair) << '\n';
    }

    KeyValues resolved = cfg.to_keys();
    resolved.set("graph", kv.get_string("graph"));
    resolved.set("split", kv.get_string("split"));
    resolved.set("architecture", to_string(arch));
    resolved.set("export", to_string(mode));
    if (target) resolved.set("target_edges", std::to_string(*target));
    resolved.set("out", kv.get_string("out"));
    write_resolved(resolved, dir);
    out << "distill: " << to_string(mode) << " artifact with " << art.features.rows() << " nodes -> " << dir.string()
        << '\n';
}

// eval / sweep ---------------------------------------------------------------

void cmd_evaluate(KeyValues& kv, bool sweep, std::ostream& out) {
    const Graph g = load_graph_dir(required_path(kv, "graph"));
    const EdgeSplit split = load_split(required_path(kv, "split"));

    TrainingSubstrate sub;
    if (kv.has("artifact")) {
        const SyntheticArtifact art = load_artifact(required_path(kv, "artifact"));
        if (art.sensitive != g.sensitive()) throw ValidationError("artifact does not match the graph's sensitive groups");
        sub = artifact_substrate(art, kv.get_string("graph_id", "fairlink"));
    } else {
        sub = original_substrate(g, split, kv.get_string("graph_id", "original"));
    }

    EvalOptions opts;
    opts.epochs = non_negative(kv, "epochs", static_cast<std::int64_t>(opts.epochs));
    opts.lr = kv.get_double("lr", opts.lr);
    opts.weight_decay = kv.get_double("weight_decay", opts.weight_decay);
    opts.hidden = non_negative(kv, "hidden", static_cast<std::int64_t>(opts.hidden));
    opts.embed = non_negative(kv, "embed", static_cast<std::int64_t>(opts.embed));
    opts.neg_ratio = kv.get_double("neg_ratio", opts.neg_ratio);
    opts.threshold = kv.get_double("threshold", opts.threshold);

    const std::uint64_t root = kv.get_u64("seed", 7);
    const std::size_t runs = non_negative(kv, "runs", 10);
    if (runs == 0) throw ValidationError("runs must be >= 1");
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < runs; ++i) seeds.push_back(root + i);

    std::vector<std::string> arch_names;
    if (sweep) {
        arch_names = kv.has("architectures") ? kv.get_string_list("architectures")
                                             : std::vector<std::string>{"sage", "gcn", "mlp"};
    } else {
        arch_names = {kv.get_string("architecture", "sage")};
    }
    if (arch_names.empty()) throw ValidationError("no architectures given");
    std::vector<Architecture> archs;
    for (const auto& name : arch_names) archs.push_back(parse_architecture(name));

    const std::size_t threads = sweep ? non_negative(kv, "parallel", 1) : 1;
    if (threads == 0) throw ValidationError("parallel must be >= 1");
    const bool with_runtime = parse_bool(kv, "with_runtime", false);

    const fs::path dir = output_dir(kv);
    const auto records = cross_arch_sweep(sub, split, g.sensitive(), archs, seeds, opts, threads);
    write_metrics(dir / "metrics.jsonl", records, with_runtime);

    KeyValues resolved;
    resolved.set("graph", kv.get_string("graph"));
    resolved.set("split", kv.get_string("split"));
    if (kv.has("artifact")) resolved.set("artifact", kv.get_string("artifact"));
    resolved.set("graph_id", sub.graph_id);
    resolved.set("runs", std::to_string(runs));
    resolved.set("seed", std::to_string(root));
    resolved.set("epochs", std::to_string(opts.epochs));
    resolved.set("lr", format_double(opts.lr));
    resolved.set("weight_decay", format_double(opts.weight_decay));
    resolved.set("hidden", std::to_string(opts.hidden));
    resolved.set("embed", std::to_string(opts.embed));
    resolved.set("neg_ratio", format_double(opts.neg_ratio));
    resolved.set("threshold", format_double(opts.threshold));
    resolved.set("with_runtime", with_runtime ? "true" : "false");
    if (sweep) {
        std::string joined;
        for (const auto& n : arch_names) joined += (joined.empty() ? "" : ",") + n;
        resolved.set("architectures", joined);
        resolved.set("parallel", std::to_string(threads));
    } else {
        resolved.set("architecture", arch_names.front());
    }
    resolved.set("out", kv.get_string("out"));
    write_resolved(resolved, dir);
    out << (sweep ? "sweep: " : "eval: ") << records.size() << " records -> " << (dir / "metrics.jsonl").string()
        << '\n';
}

// report ---------------------------------------------------------------------

void cmd_report(KeyValues& kv, std::ostream& out) {
    if (!kv.has("metrics")) throw ValidationError("missing required key 'metrics'");
    const auto files = kv.get_string_list("metrics");
    if (files.empty()) throw ValidationError("metrics lists no files");
    const std::int64_t decimals = kv.get_int("decimals", 4);
    if (decimals < 0 || decimals > 17) throw ValidationError("decimals must be in [0, 17]");

    std::vector<MetricsRecord> records;
    for (const auto& f : files) {
        if (!fs::exists(f)) throw ValidationError("metrics path does not exist: " + f);
        auto part = read_metrics(f);
        records.insert(records.end(), part.begin(), part.end());
    }
    if (records.empty()) throw ValidationError("metrics files hold no records");
    const fs::path dir = output_dir(kv);
    const auto rows = tradeoff_report(records);
    {
        std::ofstream f(dir / "report.csv", std::ios::binary | std::ios::trunc);
        if (!f) throw RuntimeFailure("cannot write " + (dir / "report.csv").string());
        write_report_csv(f, rows, static_cast<int>(decimals));
    }
    {
        std::ofstream f(dir / "scatter.csv", std::ios::binary | std::ios::trunc);
        if (!f) throw RuntimeFailure("cannot write " + (dir / "scatter.csv").string());
        write_scatter_csv(f, records, static_cast<int>(decimals));
    }
    KeyValues resolved = only(kv, {"metrics", "seed"});
    resolved.set("decimals", std::to_string(decimals));
    resolved.set("out", kv.get_string("out"));
    write_resolved(resolved, dir);
    out << "report: " << rows.size() << " rows from " << records.size() << " records -> " << dir.string() << '\n';
}

const char* prefix(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::parse: return "E_PARSE";
        case ErrorKind::validation: return "E_VALIDATE";
        case ErrorKind::runtime: return "E_RUNTIME";
    }
    return "E_RUNTIME";
}

}  // namespace

const std::vector<std::string>& known_keys(const std::string& command) {
    const auto& table = key_table();
    auto it = table.find(command);
    if (it == table.end()) throw ValidationError("unknown command '" + command + "'");
    return it->second;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"FairLink: fairness-aware synthetic graphs for link prediction"};
    app.name(args.empty() ? "fairlink" : fs::path(args.front()).filename().string());
    app.require_subcommand(1);

    struct Sub {
        CLI::App* app = nullptr;
        std::string config;
        std::map<std::string, std::string> flags;
    };
    std::map<std::string, Sub> subs;
    for (const auto& [name, keys] : key_table()) {
        Sub& s = subs[name];
        s.app = app.add_subcommand(name, command_help().at(name));
        s.app->add_option("--config", s.config, "key = value config file");
        for (const auto& key : keys) s.app->add_option("--" + key, s.flags[key], "overrides '" + key + "'");
    }

    try {
        std::vector<std::string> reversed(args.begin() + (args.empty() ? 0 : 1), args.end());
        std::reverse(reversed.begin(), reversed.end());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "E_PARSE: " << e.what() << '\n';
        return 1;
    }

    try {
        std::string command;
        for (auto& [name, s] : subs) {
            if (s.app->parsed()) command = name;
        }
        Sub& s = subs.at(command);
        KeyValues kv = s.config.empty() ? KeyValues{} : KeyValues::load(s.config);
        check_known(kv, command);
        for (const auto& [key, value] : s.flags) {
            if (s.app->count("--" + key) > 0) kv.set(key, value);
        }

        if (command == "gen-sbm") {
            cmd_gen_sbm(kv, out);
        } else if (command == "split") {
            cmd_split(kv, out);
        } else if (command == "distill") {
            cmd_distill(kv, out, err);
        } else if (command == "eval") {
            cmd_evaluate(kv, false, out);
        } else if (command == "sweep") {
            cmd_evaluate(kv, true, out);
        } else {
            cmd_report(kv, out);
        }
        return 0;
    } catch (const Error& e) {
        err << prefix(e.kind()) << ": " << e.what() << '\n';
        return e.kind() == ErrorKind::runtime ? 2 : 1;
    } catch (const fs::filesystem_error& e) {
        err << "E_RUNTIME: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "E_RUNTIME: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace fairlink::cli
