// Copyright 2026 The AGCN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// File formats.
//
//   edges     one undirected edge per line: two non-negative integers
//             separated by whitespace and/or a comma. Blank lines and lines
//             starting with '#' are ignored. Self-loops are dropped.
//   features  CSV, one row of reals per node; N is the row count.
//   labels    one non-negative integer per line.
//
//   params.bin
//     bytes 0..7   magic "AGCNPRM1"
//     bytes 8..15  header length L, uint64 little-endian
//     next L bytes UTF-8 JSON: {"dims": {...}, "tensors": [{"name", "rows",
//                  "cols"}, ...]}
//     then every tensor in header order, row-major, IEEE-754 float64
//     little-endian, no padding.

#pragma once

#include "agcn/analysis.hpp"
#include "agcn/clustering.hpp"
#include "agcn/common.hpp"
#include "agcn/graph.hpp"
#include "agcn/model.hpp"
#include "agcn/training.hpp"

#include <json.hpp>

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace agcn {

using json = nlohmann::ordered_json;

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline bool skippable(std::string_view line) {
  const auto t = trim(line);
  return t.empty() || t.front() == '#';
}

/// Splits on commas and/or whitespace.
inline std::vector<std::string_view> tokens(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  auto sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (i < line.size()) {
    while (i < line.size() && sep(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !sep(line[i])) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <class T>
bool parse_number(std::string_view tok, T& out) {
  const auto* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw ParseError(p.string(), 0, "cannot open file");
  return in;
}

}  // namespace detail

inline Matrix read_features_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    std::vector<double> row;
    for (auto tok : detail::tokens(line)) {
      double v = 0.0;
      if (!detail::parse_number(tok, v))
        throw ParseError(path.string(), lineno, "not a real number: '" + std::string(tok) + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path.string(), lineno,
                       "expected " + std::to_string(rows.front().size()) + " columns, got " +
                           std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  const Index cols = rows.empty() ? 0 : static_cast<Index>(rows.front().size());
  Matrix x(static_cast<Index>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (Index c = 0; c < cols; ++c) x(static_cast<Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return x;
}

inline std::vector<int> read_labels(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<int> labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const auto t = detail::trim(line);
    int v = 0;
    if (!detail::parse_number(t, v) || v < 0)
      throw ParseError(path.string(), lineno, "not a non-negative integer label: '" + std::string(t) + "'");
    labels.push_back(v);
  }
  return labels;
}

/// Reads an edge file, checking endpoints against `n_nodes`.
inline std::vector<Edge> read_edges(const std::filesystem::path& path, Index n_nodes) {
  auto in = detail::open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::skippable(line)) continue;
    const auto toks = detail::tokens(line);
    if (toks.size() != 2)
      throw ParseError(path.string(), lineno, "expected two node indices, got " + std::to_string(toks.size()) + " fields");
    Index ends[2];
    for (int e = 0; e < 2; ++e) {
      if (!detail::parse_number(toks[static_cast<std::size_t>(e)], ends[e]) || ends[e] < 0)
        throw ParseError(path.string(), lineno, "not a node index: '" + std::string(toks[static_cast<std::size_t>(e)]) + "'");
      if (ends[e] >= n_nodes)
        throw ParseError(path.string(), lineno,
                         "node index " + std::to_string(ends[e]) + " out of range (N = " +
                             std::to_string(n_nodes) + ")");
    }
    edges.emplace_back(ends[0], ends[1]);
  }
  return edges;
}

/// Loads edge list + features (+ labels). N is the feature row count.
inline Graph load_graph(const std::filesystem::path& edge_path,
                        const std::filesystem::path& feature_path,
                        const std::optional<std::filesystem::path>& label_path = std::nullopt) {
  Matrix x = read_features_csv(feature_path);
  const Index n = x.rows();
  auto edges = read_edges(edge_path, n);
  std::optional<std::vector<int>> labels;
  if (label_path) {
    labels = read_labels(*label_path);
    if (static_cast<Index>(labels->size()) != n)
      throw DimensionError("label file has " + std::to_string(labels->size()) +
                           " rows but feature file has " + std::to_string(n));
  }
  return Graph::from_edges(n, edges, std::move(x), std::move(labels));
}

inline std::string format_real(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

/// Writes `<prefix>.edges`, `<prefix>.csv` and (if labeled) `<prefix>.lab`.
/// Reals use the shortest round-trip representation.
inline void write_graph(const Graph& g, const std::filesystem::path& prefix) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  {
    std::ofstream out(prefix.string() + ".edges", std::ios::binary);
    for (const auto& [u, v] : g.edge_list()) out << u << ' ' << v << '\n';
  }
  {
    std::ofstream out(prefix.string() + ".csv", std::ios::binary);
    const Matrix& x = g.features();
    for (Index i = 0; i < x.rows(); ++i) {
      for (Index j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_real(x(i, j));
      out << '\n';
    }
  }
  if (g.has_labels()) {
    std::ofstream out(prefix.string() + ".lab", std::ios::binary);
    for (int l : g.labels()) out << l << '\n';
  }
}

// ---------------------------------------------------------------------------
// Model parameters

inline json dims_to_json(const ModelDims& d) {
  return {{"d_in", d.d_in},       {"d_model", d.d_model}, {"d_q", d.d_q},
          {"d_v", d.d_v},         {"heads", d.heads},     {"layers", d.layers},
          {"d_out", d.d_out},
          {"residual", d.residual == ResidualSource::input ? "input" : "hidden"},
          {"layer_norm", d.layer_norm}};
}

inline ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.d_in = j.at("d_in").get<Index>();
  d.d_model = j.at("d_model").get<Index>();
  d.d_q = j.at("d_q").get<Index>();
  d.d_v = j.at("d_v").get<Index>();
  d.heads = j.at("heads").get<Index>();
  d.layers = j.at("layers").get<Index>();
  d.d_out = j.at("d_out").get<Index>();
  const auto res = j.at("residual").get<std::string>();
  if (res != "input" && res != "hidden") throw ParseError("params", 0, "bad residual mode " + res);
  d.residual = res == "input" ? ResidualSource::input : ResidualSource::hidden;
  d.layer_norm = j.at("layer_norm").get<bool>();
  d.validate();
  return d;
}

inline constexpr char kParamsMagic[8] = {'A', 'G', 'C', 'N', 'P', 'R', 'M', '1'};

namespace detail {

inline void put_u64_le(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

inline std::uint64_t get_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
  return v;
}

}  // namespace detail

inline std::string serialize_params(const ModelParams& p) {
  json header;
  header["dims"] = dims_to_json(p.dims);
  header["tensors"] = json::array();
  ModelParams::for_each_tensor(p, [&](const std::string& name, const Matrix& m) {
    header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  const std::string h = header.dump();
  std::string out(kParamsMagic, 8);
  detail::put_u64_le(out, h.size());
  out += h;
  ModelParams::for_each_tensor(p, [&](const std::string&, const Matrix& m) {
    for (Index i = 0; i < m.size(); ++i)
      detail::put_u64_le(out, std::bit_cast<std::uint64_t>(m.data()[i]));
  });
  return out;
}

inline ModelParams deserialize_params(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kParamsMagic, 8) != 0)
    throw ParseError("params", 0, "bad magic");
  const std::uint64_t hlen = detail::get_u64_le(p + 8);
  if (16 + hlen > bytes.size()) throw ParseError("params", 0, "truncated header");
  json header;
  ModelDims dims;
  try {
    header = json::parse(bytes.substr(16, hlen));
    dims = dims_from_json(header.at("dims"));
  } catch (const json::exception& e) {
    throw ParseError("params", 0, std::string("bad header: ") + e.what());
  }
  ModelParams params = init_params(dims, 0);
  std::size_t cursor = 16 + hlen;
  std::size_t t = 0;
  const auto& tensors = header.at("tensors");
  ModelParams::for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    if (t >= tensors.size()) throw ParseError("params", 0, "missing tensor " + name);
    const auto& meta = tensors[t++];
    if (meta.at("name").get<std::string>() != name || meta.at("rows").get<Index>() != m.rows() ||
        meta.at("cols").get<Index>() != m.cols())
      throw ParseError("params", 0, "tensor layout mismatch at " + name);
    const std::size_t need = static_cast<std::size_t>(m.size()) * 8;
    if (cursor + need > bytes.size()) throw ParseError("params", 0, "truncated tensor " + name);
    for (Index i = 0; i < m.size(); ++i)
      m.data()[i] = std::bit_cast<double>(detail::get_u64_le(p + cursor + static_cast<std::size_t>(i) * 8));
    cursor += need;
  });
  if (t != tensors.size() || cursor != bytes.size()) throw ParseError("params", 0, "trailing data");
  return params;
}

inline void save_params(const ModelParams& p, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = serialize_params(p);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

inline ModelParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_params(ss.str());
}

// ---------------------------------------------------------------------------
// Reports

inline void write_history_csv(const std::vector<EpochLoss>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "epoch,L_pos,L_neg,L_total\n";
  for (const auto& h : history)
    out << h.epoch << ',' << format_real(h.pos) << ',' << format_real(h.neg) << ','
        << format_real(h.total) << '\n';
}

inline std::vector<EpochLoss> read_history_csv(const std::filesystem::path& path) {
  auto in = detail::open_input(path);
  std::vector<EpochLoss> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (++lineno == 1 || detail::skippable(line)) continue;
    const auto toks = detail::tokens(line);
    EpochLoss e;
    if (toks.size() != 4 || !detail::parse_number(toks[0], e.epoch) ||
        !detail::parse_number(toks[1], e.pos) || !detail::parse_number(toks[2], e.neg) ||
        !detail::parse_number(toks[3], e.total))
      throw ParseError(path.string(), lineno, "malformed history row");
    out.push_back(e);
  }
  return out;
}

inline json to_json(const PathHistogram& h) {
  json j = json::object();
  for (const auto& [d, c] : h.by_distance) j[std::to_string(d)] = c;
  j["∞"] = h.unreachable;
  return j;
}

inline json to_json(const ClusterResult& r) {
  json j;
  j["acc"] = r.acc;
  j["nmi"] = r.nmi;
  j["chosen_seed"] = r.chosen_seed;
  j["seed_records"] = json::array();
  for (const auto& s : r.seed_records)
    j["seed_records"].push_back({{"seed", s.seed}, {"inertia", s.inertia}, {"acc", s.acc}, {"nmi", s.nmi}});
  j["labels"] = r.labels;
  return j;
}

inline json to_json(const RRatioReport& r) {
  json j;
  j["k_min"] = r.k_min;
  j["k_max"] = r.k_max;
  j["headline_mode"] = "pair-mean";
  j["misclustered_counts"] = json::array();
  for (const auto& s : r.misclustered_sets) j["misclustered_counts"].push_back(s.size());
  j["entries"] = json::array();
  for (const auto& e : r.entries) {
    json row{{"cluster", e.cluster}, {"k", e.k}, {"misclustered", e.misclustered}};
    row["pair_mean"] = e.pair_mean ? json(*e.pair_mean) : json(nullptr);
    row["literal"] = e.literal ? json(*e.literal) : json(nullptr);
    if (!e.notice.empty()) row["notice"] = e.notice;
    j["entries"].push_back(std::move(row));
  }
  return j;
}

inline void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << '\n';
  if (!out) throw Error("cannot write " + path.string());
}

/// FNV-1a over the adjacency structure, feature bytes and labels.
inline std::uint64_t graph_content_hash(const Graph& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(g.n_nodes()));
  for (const auto& [u, v] : g.edge_list()) {
    mix(static_cast<std::uint64_t>(u));
    mix(static_cast<std::uint64_t>(v));
  }
  const Matrix& x = g.features();
  mix(static_cast<std::uint64_t>(x.cols()));
  for (Index i = 0; i < x.size(); ++i) mix(std::bit_cast<std::uint64_t>(x.data()[i]));
  if (g.has_labels())
    for (int l : g.labels()) mix(static_cast<std::uint64_t>(l));
  return h;
}

inline json fingerprint(const Graph& g) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(graph_content_hash(g)));
  return {{"nodes", g.n_nodes()}, {"edges", g.n_edges()}, {"features", g.feature_dim()},
          {"content_hash", std::string(hex)}};
}

inline json config_to_json(const TrainingConfig& c) {
  return {{"k", c.k},
          {"lambda", c.lambda},
          {"gamma", c.gamma},
          {"epochs", c.epochs},
          {"layers", c.layers},
          {"heads", c.heads},
          {"dq", c.d_q},
          {"dv", c.d_v},
          {"dmodel", c.d_model},
          {"dout", c.d_out},
          {"lr", c.learning_rate},
          {"pair_cap", c.pair_cap},
          {"seed", c.seed},
          {"residual", c.residual == ResidualSource::input ? "input" : "hidden"},
          {"layer_norm", c.layer_norm},
          {"mode", c.mode == AttentionMode::structure ? "structure" : "vanilla"},
          {"lneg", c.use_lneg},
          {"max_neighbors", c.max_neighbors}};
}

/// Applies any keys present in `j` on top of `c`. Keys match config_to_json.
inline TrainingConfig config_from_json(const json& j, TrainingConfig c = {}) {
  static const std::vector<std::string> known = {
      "k", "lambda", "gamma", "epochs", "layers", "heads", "dq", "dv", "dmodel", "dout", "lr",
      "pair_cap", "seed", "residual", "layer_norm", "mode", "lneg", "max_neighbors"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    try {
      field = j.at(key).get<std::decay_t<decltype(field)>>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  };
  get("k", c.k);
  get("lambda", c.lambda);
  get("gamma", c.gamma);
  get("epochs", c.epochs);
  get("layers", c.layers);
  get("heads", c.heads);
  get("dq", c.d_q);
  get("dv", c.d_v);
  get("dmodel", c.d_model);
  get("dout", c.d_out);
  get("lr", c.learning_rate);
  get("pair_cap", c.pair_cap);
  get("seed", c.seed);
  get("layer_norm", c.layer_norm);
  get("lneg", c.use_lneg);
  get("max_neighbors", c.max_neighbors);
  if (j.contains("residual")) {
    std::string s;
    get("residual", s);
    if (s != "input" && s != "hidden") throw ConfigError("residual must be input|hidden");
    c.residual = s == "input" ? ResidualSource::input : ResidualSource::hidden;
  }
  if (j.contains("mode")) {
    std::string s;
    get("mode", s);
    if (s != "structure" && s != "vanilla") throw ConfigError("mode must be structure|vanilla");
    c.mode = s == "structure" ? AttentionMode::structure : AttentionMode::vanilla;
  }
  return c;
}

}  // namespace agcn
