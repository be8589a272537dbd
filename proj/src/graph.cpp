#include "fairlink/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fairlink/errors.hpp"

namespace fairlink {

namespace {

std::string location(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write " + path.string());
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
    s = trim(s);
    if (s.empty()) return false;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split_fields(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace

Graph::Graph(std::size_t n_nodes, std::vector<Edge> edges, Tensor features, std::vector<int> sensitive)
    : n_nodes_(n_nodes), features_(std::move(features)), sensitive_(std::move(sensitive)) {
    if (n_nodes_ == 0) throw ValidationError("graph must have at least one node");
    if (features_.rows() != n_nodes_) {
        throw ValidationError("feature matrix has " + std::to_string(features_.rows()) + " rows for " +
                              std::to_string(n_nodes_) + " nodes");
    }
    if (features_.cols() == 0) throw ValidationError("feature matrix has no columns");
    if (!features_.all_finite()) throw ValidationError("feature matrix contains non-finite values");
    if (sensitive_.size() != n_nodes_) {
        throw ValidationError("sensitive vector has " + std::to_string(sensitive_.size()) + " entries for " +
                              std::to_string(n_nodes_) + " nodes");
    }

    for (auto& e : edges) {
        if (e.u == e.v) throw ValidationError("self-loop on node " + std::to_string(e.u));
        if (e.u >= n_nodes_ || e.v >= n_nodes_) {
            throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                                  ") references a node >= " + std::to_string(n_nodes_));
        }
        e = canonical(e.u, e.v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);

    int max_id = -1;
    for (int s : sensitive_) {
        if (s < 0) throw ValidationError("negative sensitive id " + std::to_string(s));
        max_id = std::max(max_id, s);
    }
    group_count_ = static_cast<std::size_t>(max_id + 1);
    std::vector<bool> used(group_count_, false);
    for (int s : sensitive_) used[static_cast<std::size_t>(s)] = true;
    for (std::size_t k = 0; k < group_count_; ++k) {
        if (!used[k]) throw ValidationError("sensitive group " + std::to_string(k) + " has no nodes");
    }
}

bool Graph::has_edge(std::size_t a, std::size_t b) const {
    if (a == b) return false;
    return std::binary_search(edges_.begin(), edges_.end(), canonical(a, b));
}

std::vector<std::size_t> Graph::group_sizes() const {
    std::vector<std::size_t> sizes(group_count_, 0);
    for (int s : sensitive_) ++sizes[static_cast<std::size_t>(s)];
    return sizes;
}

int Graph::protected_group() const {
    const auto sizes = group_sizes();
    return static_cast<int>(std::min_element(sizes.begin(), sizes.end()) - sizes.begin());
}

std::uint64_t Graph::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](std::string_view s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
    };
    feed(std::to_string(n_nodes_) + "\n");
    for (const auto& e : edges_) feed(std::to_string(e.u) + "\t" + std::to_string(e.v) + "\n");
    for (double v : features_.values()) feed(format_double(v) + ",");
    for (int s : sensitive_) feed(std::to_string(s) + "\n");
    return h;
}

Tensor dense_adjacency(std::size_t n_nodes, const std::vector<Edge>& edges) {
    Tensor a(n_nodes, n_nodes);
    for (const auto& e : edges) {
        a(e.u, e.v) = 1.0;
        a(e.v, e.u) = 1.0;
    }
    return a;
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<Edge> read_edge_file(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<Edge> edges;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        const std::size_t sep = s.find_first_of("\t ");
        std::size_t u = 0, v = 0;
        if (sep == std::string_view::npos || !parse_number(s.substr(0, sep), u) ||
            !parse_number(s.substr(sep + 1), v)) {
            throw ParseError(location(path, lineno) + ": expected \"u<TAB>v\", got \"" + std::string(s) + "\"");
        }
        if (u == v) throw ValidationError(location(path, lineno) + ": self-loop on node " + std::to_string(u));
        edges.push_back({u, v});
    }
    return edges;
}

void write_edge_file(const std::filesystem::path& path, const std::vector<Edge>& edges) {
    auto out = open_out(path);
    for (const auto& e : edges) out << e.u << '\t' << e.v << '\n';
}

Tensor read_matrix_csv(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<double> data;
    std::size_t cols = 0, rows = 0;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = trim(line);
        if (s.empty()) continue;
        const auto fields = split_fields(s, ',');
        if (rows == 0) cols = fields.size();
        if (fields.size() != cols) {
            throw ParseError(location(path, lineno) + ": expected " + std::to_string(cols) + " columns, got " +
                             std::to_string(fields.size()));
        }
        for (auto f : fields) {
            double v = 0.0;
            if (!parse_number(f, v)) {
                throw ParseError(location(path, lineno) + ": not a number: \"" + std::string(trim(f)) + "\"");
            }
            if (!std::isfinite(v)) throw ValidationError(location(path, lineno) + ": non-finite value");
            data.push_back(v);
        }
        ++rows;
    }
    return Tensor(rows, cols, std::move(data));
}

void write_matrix_csv(const std::filesystem::path& path, const Tensor& m) {
    auto out = open_out(path);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_double(m(i, j));
        }
        out << '\n';
    }
}

std::vector<int> read_int_lines(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::vector<int> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view s = trim(line);
        if (s.empty()) continue;
        int v = 0;
        if (!parse_number(s, v)) throw ParseError(location(path, lineno) + ": not an integer: \"" + std::string(s) + "\"");
        out.push_back(v);
    }
    return out;
}

Graph load_graph(const std::filesystem::path& edge_path, const std::filesystem::path& feature_path,
                 const std::filesystem::path& sensitive_path) {
    auto edges = read_edge_file(edge_path);
    Tensor features = read_matrix_csv(feature_path);
    auto sensitive = read_int_lines(sensitive_path);
    const std::size_t n = features.rows();
    return Graph(n, std::move(edges), std::move(features), std::move(sensitive));
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_edge_file(dir / "edges.tsv", g.edges());
    write_matrix_csv(dir / "features.csv", g.features());
    auto out = open_out(dir / "sensitive.csv");
    for (int s : g.sensitive()) out << s << '\n';
}

Graph load_graph_dir(const std::filesystem::path& dir) {
    return load_graph(dir / "edges.tsv", dir / "features.csv", dir / "sensitive.csv");
}

}  // namespace fairlink
