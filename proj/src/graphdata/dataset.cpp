#include "gcot/graphdata/dataset.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

#include "json.hpp"

#include "gcot/error.hpp"

namespace gcot::graph {

namespace fs = std::filesystem;
using nlohmann::json;

const char* task_name(TaskKind kind) { return kind == TaskKind::node ? "node" : "graph"; }

TaskKind parse_task(const std::string& name) {
  if (name == "node") return TaskKind::node;
  if (name == "graph") return TaskKind::graph;
  throw ConfigError("task must be \"node\" or \"graph\", got \"" + name + "\"");
}

std::size_t GraphCollection::num_nodes() const {
  std::size_t n = 0;
  for (const auto& g : graphs) n += g.num_nodes();
  return n;
}

std::size_t GraphCollection::num_edges() const {
  std::size_t n = 0;
  for (const auto& g : graphs) n += g.edges.size();
  return n;
}

std::vector<std::size_t> GraphCollection::node_offsets() const {
  std::vector<std::size_t> off{0};
  for (const auto& g : graphs) off.push_back(off.back() + g.num_nodes());
  return off;
}

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("missing file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Tab-separated rows of a headerless file, with the file name and line
// number carried for diagnostics.
class TsvReader {
 public:
  TsvReader(const fs::path& p) : path_(p), text_(read_file(p)) {}

  bool next() {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string::npos) end = text_.size();
      std::string_view line(text_.data() + pos_, end - pos_);
      pos_ = end + 1;
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (line.empty()) continue;
      fields_.clear();
      std::size_t start = 0;
      while (true) {
        const std::size_t tab = line.find('\t', start);
        fields_.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
        if (tab == std::string_view::npos) break;
        start = tab + 1;
      }
      return true;
    }
    return false;
  }

  std::size_t size() const { return fields_.size(); }

  long long integer(std::size_t i) const {
    long long v = 0;
    auto f = fields_.at(i);
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) fail("non-integer field '" + std::string(f) + "'");
    return v;
  }

  double decimal(std::size_t i) const {
    double v = 0;
    auto f = fields_.at(i);
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size()) fail("non-numeric feature '" + std::string(f) + "'");
    return v;
  }

  void expect_fields(std::size_t n) const {
    if (fields_.size() != n) {
      fail("expected " + std::to_string(n) + " fields, found " + std::to_string(fields_.size()));
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(path_.string() + ":" + std::to_string(line_no_) + ": " + what);
  }

 private:
  fs::path path_;
  std::string text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
  std::vector<std::string_view> fields_;
};

template <typename T>
T meta_field(const json& j, const char* key, const fs::path& p) {
  if (!j.contains(key)) throw DataError(p.string() + ": missing key \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw DataError(p.string() + ": key \"" + key + "\" has the wrong type");
  }
}

void count_check(const fs::path& p, const char* what, std::size_t found, std::size_t expected) {
  if (found != expected) {
    throw DataError(p.string() + ": " + std::to_string(found) + " " + what + ", meta.json says " +
                    std::to_string(expected));
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

GraphCollection load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("dataset directory " + dir.string() + " does not exist");
  const fs::path meta_path = dir / "meta.json";
  json meta;
  try {
    meta = json::parse(read_file(meta_path));
  } catch (const json::parse_error& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }

  GraphCollection c;
  c.meta.name = meta_field<std::string>(meta, "name", meta_path);
  c.meta.feature_dim = meta_field<std::size_t>(meta, "feature_dim", meta_path);
  c.meta.node_classes = meta_field<int>(meta, "node_classes", meta_path);
  c.meta.graph_classes = meta_field<int>(meta, "graph_classes", meta_path);
  try {
    c.meta.task = parse_task(meta_field<std::string>(meta, "task", meta_path));
  } catch (const ConfigError& e) {
    throw DataError(meta_path.string() + ": " + e.what());
  }
  if (meta.contains("edge_convention")) c.meta.edge_convention = meta_field<std::string>(meta, "edge_convention", meta_path);
  if (meta.contains("class_names")) c.meta.class_names = meta_field<std::vector<std::string>>(meta, "class_names", meta_path);
  const auto num_nodes = meta_field<std::size_t>(meta, "num_nodes", meta_path);
  const auto num_graphs = meta_field<std::size_t>(meta, "num_graphs", meta_path);
  if (num_nodes == 0 || num_graphs == 0 || c.meta.feature_dim == 0) {
    throw DataError(meta_path.string() + ": num_nodes, num_graphs and feature_dim must be positive");
  }

  // nodes.tsv: graph membership and node labels.
  const fs::path nodes_path = dir / "nodes.tsv";
  std::vector<std::size_t> graph_of;
  std::vector<int> node_label;
  std::vector<std::size_t> offsets{0};
  {
    TsvReader r(nodes_path);
    while (r.next()) {
      r.expect_fields(3);
      const auto id = r.integer(0), gid = r.integer(1), label = r.integer(2);
      if (id != static_cast<long long>(graph_of.size())) r.fail("node ids must run 0..N-1 in file order");
      const auto current = static_cast<long long>(offsets.size()) - 1;
      if (gid == current + 1 && !graph_of.empty()) {
        offsets.push_back(graph_of.size());
      } else if (gid != current) {
        r.fail("graph id " + std::to_string(gid) + " breaks contiguous graph order");
      }
      if (label < -1 || label >= c.meta.node_classes) {
        r.fail("node label " + std::to_string(label) + " outside -1.." + std::to_string(c.meta.node_classes - 1));
      }
      graph_of.push_back(static_cast<std::size_t>(gid));
      node_label.push_back(static_cast<int>(label));
    }
    offsets.push_back(graph_of.size());
    count_check(nodes_path, "nodes", graph_of.size(), num_nodes);
    count_check(nodes_path, "graphs", offsets.size() - 1, num_graphs);
  }

  c.graphs.resize(num_graphs);
  for (std::size_t g = 0; g < num_graphs; ++g) {
    c.graphs[g].features = Tensor(offsets[g + 1] - offsets[g], c.meta.feature_dim);
    if (c.meta.node_classes > 0) {
      c.graphs[g].node_labels.assign(node_label.begin() + static_cast<std::ptrdiff_t>(offsets[g]),
                                     node_label.begin() + static_cast<std::ptrdiff_t>(offsets[g + 1]));
    }
  }

  {
    const fs::path p = dir / "features.tsv";
    TsvReader r(p);
    std::size_t n = 0;
    while (r.next()) {
      r.expect_fields(c.meta.feature_dim + 1);
      if (r.integer(0) != static_cast<long long>(n)) r.fail("feature rows must follow node ids 0..N-1");
      if (n >= num_nodes) r.fail("more feature rows than nodes");
      const std::size_t g = graph_of[n];
      auto row = c.graphs[g].features.row(n - offsets[g]);
      for (std::size_t k = 0; k < c.meta.feature_dim; ++k) row[k] = r.decimal(k + 1);
      ++n;
    }
    count_check(p, "feature rows", n, num_nodes);
  }

  {
    const fs::path p = dir / "edges.tsv";
    TsvReader r(p);
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> seen(num_graphs);
    while (r.next()) {
      r.expect_fields(2);
      const auto u = r.integer(0), v = r.integer(1);
      for (long long x : {u, v}) {
        if (x < 0 || x >= static_cast<long long>(num_nodes)) {
          r.fail("edge references node " + std::to_string(x) + ", absent from nodes.tsv");
        }
      }
      if (u == v) r.fail("self-loop on node " + std::to_string(u));
      const std::size_t g = graph_of[static_cast<std::size_t>(u)];
      if (graph_of[static_cast<std::size_t>(v)] != g) r.fail("edge crosses graphs");
      auto a = static_cast<std::size_t>(std::min(u, v)) - offsets[g];
      auto b = static_cast<std::size_t>(std::max(u, v)) - offsets[g];
      if (!seen[g].insert({a, b}).second) r.fail("duplicate edge " + std::to_string(u) + "-" + std::to_string(v));
      c.graphs[g].edges.emplace_back(a, b);
    }
    if (meta.contains("num_edges")) {
      count_check(p, "edges", c.num_edges(), meta_field<std::size_t>(meta, "num_edges", meta_path));
    }
  }

  const fs::path graphs_path = dir / "graphs.tsv";
  if (num_graphs > 1 || fs::exists(graphs_path)) {
    TsvReader r(graphs_path);
    std::size_t n = 0;
    while (r.next()) {
      r.expect_fields(2);
      if (r.integer(0) != static_cast<long long>(n)) r.fail("graph ids must run 0..G-1 in file order");
      if (n >= num_graphs) r.fail("more graph rows than graphs");
      const auto label = r.integer(1);
      if (label < -1 || label >= c.meta.graph_classes) {
        r.fail("graph label " + std::to_string(label) + " outside -1.." + std::to_string(c.meta.graph_classes - 1));
      }
      if (label >= 0) c.graphs[n].graph_label = static_cast<int>(label);
      ++n;
    }
    count_check(graphs_path, "graph rows", n, num_graphs);
  }

  validate(c);
  return c;
}

void validate(const GraphCollection& c) {
  if (c.graphs.empty()) throw DataError(c.meta.name + ": collection has no graphs");
  for (std::size_t g = 0; g < c.graphs.size(); ++g) {
    const auto& rec = c.graphs[g];
    const std::string where = c.meta.name + " graph " + std::to_string(g);
    if (rec.num_nodes() == 0) throw DataError(where + ": no nodes");
    if (rec.features.cols() != c.meta.feature_dim) throw DataError(where + ": feature dimension mismatch");
    if (!rec.features.all_finite()) throw DataError(where + ": non-finite feature");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (auto [u, v] : rec.edges) {
      if (u >= v || v >= rec.num_nodes()) throw DataError(where + ": edge must satisfy u < v < n");
      if (!seen.insert({u, v}).second) throw DataError(where + ": duplicate edge");
    }
    if (!rec.node_labels.empty()) {
      if (rec.node_labels.size() != rec.num_nodes()) throw DataError(where + ": node label count mismatch");
      for (int l : rec.node_labels)
        if (l < -1 || l >= c.meta.node_classes) throw DataError(where + ": node label out of range");
    }
    if (rec.graph_label && (*rec.graph_label < 0 || *rec.graph_label >= c.meta.graph_classes)) {
      throw DataError(where + ": graph label out of range");
    }
    if (c.graphs.size() > 1 && c.meta.graph_classes > 0 && !rec.graph_label) {
      throw DataError(where + ": multi-graph datasets need a label on every graph");
    }
  }
}

void write_dataset(const GraphCollection& c, const fs::path& dir) {
  validate(c);
  fs::create_directories(dir);
  const auto offsets = c.node_offsets();
  json meta = {{"name", c.meta.name},
               {"num_nodes", c.num_nodes()},
               {"num_graphs", c.graphs.size()},
               {"num_edges", c.num_edges()},
               {"feature_dim", c.meta.feature_dim},
               {"node_classes", c.meta.node_classes},
               {"graph_classes", c.meta.graph_classes},
               {"task", task_name(c.meta.task)},
               {"edge_convention", c.meta.edge_convention},
               {"class_names", c.meta.class_names}};
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  open("meta.json") << meta.dump(2) << "\n";
  auto nodes = open("nodes.tsv");
  auto feats = open("features.tsv");
  auto edges = open("edges.tsv");
  for (std::size_t g = 0; g < c.graphs.size(); ++g) {
    const auto& rec = c.graphs[g];
    for (std::size_t i = 0; i < rec.num_nodes(); ++i) {
      const std::size_t id = offsets[g] + i;
      nodes << id << '\t' << g << '\t' << (rec.node_labels.empty() ? -1 : rec.node_labels[i]) << '\n';
      feats << id;
      for (double v : rec.features.row(i)) feats << '\t' << format_double(v);
      feats << '\n';
    }
    for (auto [u, v] : rec.edges) edges << offsets[g] + u << '\t' << offsets[g] + v << '\n';
  }
  auto graphs = open("graphs.tsv");
  for (std::size_t g = 0; g < c.graphs.size(); ++g) {
    graphs << g << '\t' << c.graphs[g].graph_label.value_or(-1) << '\n';
  }
}

}  // namespace gcot::graph
