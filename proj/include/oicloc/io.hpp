// Copyright (C) 2026 The oicloc Authors
// SPDX-License-Identifier: Apache-2.0
//
// File formats: CSV sequences, video manifests, prediction lines,
// checkpoints and evaluation reports.

#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "oicloc/cas.hpp"
#include "oicloc/error.hpp"
#include "oicloc/eval.hpp"
#include "oicloc/pipeline.hpp"
#include "oicloc/regressor.hpp"
#include "oicloc/selection.hpp"

namespace oicloc {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Numbers and text

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty())
    throw InputError(where + ": not a number: '" + std::string(s) + "'");
  return v;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed: " + path.string());
}

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::vector<std::string_view> csv_lines(const std::string& text) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const std::size_t nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!line.empty()) lines.push_back(line);
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  return lines;
}

// Reads `snippet,<name>_1,...,<name>_N` into an N x T matrix. Snippet
// indices must run 1..T in order.
inline MatrixD read_snippet_matrix(const fs::path& path, std::string_view column_prefix) {
  const std::string text = read_text(path);
  const auto lines = csv_lines(text);
  const std::string where = path.string();
  if (lines.empty()) throw InputError(where + ": empty file");
  const auto header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "snippet")
    throw InputError(where + ": header must start with 'snippet'");
  const std::size_t N = header.size() - 1;
  for (std::size_t i = 1; i <= N; ++i) {
    const std::string want = std::string(column_prefix) + "_" + std::to_string(i);
    if (header[i] != want) throw InputError(where + ": expected column '" + want + "'");
  }
  const std::size_t T = lines.size() - 1;
  if (T == 0) throw InputError(where + ": no snippet rows");
  MatrixD m(N, T);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const std::string at = where + ":" + std::to_string(r + 1);
    const auto cells = split_csv_line(lines[r]);
    if (cells.size() != N + 1) throw InputError(at + ": expected " + std::to_string(N + 1) + " fields");
    const double idx = parse_double(cells[0], at);
    if (idx != static_cast<double>(r)) throw InputError(at + ": snippet index out of sequence");
    for (std::size_t i = 0; i < N; ++i) m(i, r - 1) = parse_double(cells[i + 1], at);
  }
  return m;
}

inline std::string snippet_matrix_csv(const MatrixD& m, std::string_view column_prefix) {
  std::string s = "snippet";
  for (std::size_t i = 1; i <= m.rows(); ++i) s += "," + std::string(column_prefix) + "_" + std::to_string(i);
  s += "\n";
  for (std::size_t t = 0; t < m.cols(); ++t) {
    s += std::to_string(t + 1);
    for (std::size_t i = 0; i < m.rows(); ++i) s += "," + format_double(m(i, t));
    s += "\n";
  }
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-video sequences

inline Cas read_cas_csv(const fs::path& path) {
  MatrixD m = detail::read_snippet_matrix(path, "class");
  try {
    return Cas(std::move(m));
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

inline void write_cas_csv(const fs::path& path, const Cas& cas) {
  write_text(path, detail::snippet_matrix_csv(cas.activations(), "class"));
}

/// Raw classification scores; same layout as a CAS file, values unbounded.
inline ClassScores read_scores_csv(const fs::path& path) {
  return {detail::read_snippet_matrix(path, "class")};
}

inline MatrixD read_features_csv(const fs::path& path) {
  return detail::read_snippet_matrix(path, "feat");
}

inline void write_features_csv(const fs::path& path, const MatrixD& feat) {
  write_text(path, detail::snippet_matrix_csv(feat, "feat"));
}

/// Single column with header `attention`, one row per snippet.
inline AttentionSeq read_attention_csv(const fs::path& path) {
  const std::string text = read_text(path);
  const auto lines = detail::csv_lines(text);
  if (lines.empty() || lines[0] != "attention")
    throw InputError(path.string() + ": header must be 'attention'");
  AttentionSeq a;
  for (std::size_t r = 1; r < lines.size(); ++r)
    a.att.push_back(parse_double(lines[r], path.string() + ":" + std::to_string(r + 1)));
  return a;
}

// ---------------------------------------------------------------------------
// Manifests
//
// [{ "video_id", "cas_path" | ("scores_path", "att_path"), "labels", "fps",
//    "gt": [{"class", "start_s", "end_s"}], "feat_path" }]
// Relative paths resolve against the manifest's directory.

inline std::vector<VideoRecord> load_manifest(const fs::path& path,
                                              std::optional<double> att_threshold = std::nullopt) {
  const nlohmann::json j = read_json(path);
  const std::string where = path.string();
  if (!j.is_array()) throw InputError(where + ": manifest must be a JSON array");
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    const fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  static const std::set<std::string> known{"video_id", "cas_path", "scores_path", "att_path",
                                           "labels",   "fps",      "gt",          "feat_path"};
  std::vector<VideoRecord> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    const std::string at = where + "[" + std::to_string(i) + "]";
    if (!e.is_object()) throw InputError(at + ": entry must be an object");
    for (const auto& [key, value] : e.items())
      if (!known.count(key)) throw InputError(at + ": unknown key '" + key + "'");
    try {
      VideoRecord v;
      v.video_id = e.at("video_id").get<std::string>();
      if (!seen.insert(v.video_id).second) throw InputError("duplicate video_id '" + v.video_id + "'");
      if (e.contains("cas_path")) {
        v.cas = read_cas_csv(resolve(e.at("cas_path").get<std::string>()));
      } else if (e.contains("scores_path") && e.contains("att_path")) {
        const ClassScores sc = read_scores_csv(resolve(e.at("scores_path").get<std::string>()));
        const AttentionSeq att = read_attention_csv(resolve(e.at("att_path").get<std::string>()));
        v.cas = gate_attention(sc, att, att_threshold.value_or(-std::numeric_limits<double>::infinity()));
      } else {
        throw InputError("needs cas_path or scores_path + att_path");
      }
      for (int k : e.at("labels").get<std::vector<int>>()) v.labels.insert(k);
      v.fps = e.at("fps").get<double>();
      if (e.contains("gt")) {
        for (const auto& g : e.at("gt"))
          v.gt.push_back({g.at("class").get<int>(), g.at("start_s").get<double>(), g.at("end_s").get<double>()});
      }
      if (e.contains("feat_path")) v.features = read_features_csv(resolve(e.at("feat_path").get<std::string>()));
      v.validate();
      out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& ex) {
      throw InputError(at + ": " + ex.what());
    } catch (const InputError& ex) {
      throw InputError(at + ": " + ex.what());
    }
  }
  return out;
}

/// Writes each video's CAS (and features, when present) next to the manifest
/// under cas/ and feat/, then the manifest itself.
inline void save_manifest(const fs::path& path, const std::vector<VideoRecord>& videos) {
  const fs::path base = path.parent_path();
  nlohmann::json j = nlohmann::json::array();
  for (const auto& v : videos) {
    const std::string cas_rel = "cas/" + v.video_id + ".csv";
    write_cas_csv(base / cas_rel, v.cas);
    nlohmann::json e = {{"video_id", v.video_id},
                        {"cas_path", cas_rel},
                        {"labels", std::vector<int>(v.labels.begin(), v.labels.end())},
                        {"fps", v.fps}};
    nlohmann::json gt = nlohmann::json::array();
    for (const auto& g : v.gt) gt.push_back({{"class", g.cls}, {"start_s", g.start_s}, {"end_s", g.end_s}});
    e["gt"] = gt;
    if (!v.features.empty()) {
      const std::string feat_rel = "feat/" + v.video_id + ".csv";
      write_features_csv(base / feat_rel, v.features);
      e["feat_path"] = feat_rel;
    }
    j.push_back(e);
  }
  write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Predictions: one JSON object per line, best score first.

inline std::string prediction_line(const Prediction& p) {
  const nlohmann::json j = {{"video_id", p.video_id}, {"class", p.cls},   {"start_s", p.start_s},
                            {"end_s", p.end_s},       {"score", p.score}};
  return j.dump();
}

inline void write_predictions(std::ostream& out, std::vector<Prediction> preds) {
  sort_for_eval(preds);
  for (const auto& p : preds) out << prediction_line(p) << '\n';
}

inline void write_predictions(const fs::path& path, const std::vector<Prediction>& preds) {
  std::ostringstream ss;
  write_predictions(ss, preds);
  write_text(path, ss.str());
}

inline std::vector<Prediction> read_predictions(std::istream& in, const std::string& name = "<stream>") {
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Prediction p;
      p.video_id = j.at("video_id").get<std::string>();
      p.cls = j.at("class").get<int>();
      p.start_s = j.at("start_s").get<double>();
      p.end_s = j.at("end_s").get<double>();
      p.score = j.at("score").get<double>();
      p.loss = 1.0 - p.score;
      if (!(p.start_s <= p.end_s)) throw InputError("start_s exceeds end_s");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(name + ": " + e.what(), lineno);
    } catch (const InputError& e) {
      throw ParseError(name + ": " + e.what(), lineno);
    }
  }
  return out;
}

inline std::vector<Prediction> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_predictions(in, path.string());
}

// ---------------------------------------------------------------------------
// Checkpoints

constexpr int kCheckpointVersion = 1;

inline nlohmann::json network_config_json(const NetworkConfig& n) {
  return {{"feature_dim", n.feature_dim}, {"hidden", n.hidden},   {"hidden_layers", n.hidden_layers},
          {"num_anchors", n.num_anchors}, {"bn_eps", n.bn_eps}, {"bn_momentum", n.bn_momentum}};
}

inline NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig n;
  n.feature_dim = j.at("feature_dim").get<int>();
  n.hidden = j.at("hidden").get<int>();
  n.hidden_layers = j.at("hidden_layers").get<int>();
  n.num_anchors = j.at("num_anchors").get<int>();
  n.bn_eps = j.at("bn_eps").get<double>();
  n.bn_momentum = j.at("bn_momentum").get<double>();
  n.validate();
  return n;
}

namespace detail {

inline nlohmann::json tensors_json(const std::vector<Tensor>& ts) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& t : ts) a.push_back({{"name", t.name}, {"shape", t.shape}, {"values", t.values}});
  return a;
}

inline void load_tensors(const nlohmann::json& a, std::vector<Tensor>& into, const std::string& what) {
  if (!a.is_array() || a.size() != into.size())
    throw InputError("checkpoint: " + what + " count does not match the network");
  for (std::size_t i = 0; i < into.size(); ++i) {
    const auto& e = a[i];
    if (e.at("name").get<std::string>() != into[i].name)
      throw InputError("checkpoint: expected " + what + " '" + into[i].name + "'");
    if (e.at("shape").get<std::vector<std::size_t>>() != into[i].shape)
      throw InputError("checkpoint: shape mismatch for '" + into[i].name + "'");
    auto values = e.at("values").get<std::vector<double>>();
    if (values.size() != into[i].values.size())
      throw InputError("checkpoint: value count mismatch for '" + into[i].name + "'");
    into[i].values = std::move(values);
  }
}

}  // namespace detail

inline std::string checkpoint_json(const TrainState& s) {
  nlohmann::json j = {{"format", "oicloc-checkpoint"},
                      {"version", kCheckpointVersion},
                      {"network", network_config_json(s.net.config())},
                      {"iteration", s.opt.iteration()},
                      {"params", detail::tensors_json(s.net.params())},
                      {"buffers", detail::tensors_json(s.net.buffers())},
                      {"velocity", s.opt.velocity()}};
  return j.dump() + "\n";
}

inline void save_checkpoint(const fs::path& path, const TrainState& s) { write_text(path, checkpoint_json(s)); }

/// Restores network, running statistics, iteration and momentum buffers.
/// The optimizer hyper-parameters come from `sgd`.
inline TrainState load_checkpoint(const fs::path& path, const SgdConfig& sgd) {
  const nlohmann::json j = read_json(path);
  try {
    if (j.at("format").get<std::string>() != "oicloc-checkpoint")
      throw InputError("not an oicloc checkpoint");
    if (j.at("version").get<int>() != kCheckpointVersion)
      throw InputError("unsupported checkpoint version");
    TrainState s{NetworkB(network_config_from_json(j.at("network"))), SgdOptimizer(sgd)};
    detail::load_tensors(j.at("params"), s.net.mutable_params(), "parameter");
    detail::load_tensors(j.at("buffers"), s.net.mutable_buffers(), "buffer");
    auto vel = j.at("velocity").get<ParamGrads>();
    if (!vel.empty()) {
      if (vel.size() != s.net.params().size()) throw InputError("checkpoint: velocity count mismatch");
      for (std::size_t i = 0; i < vel.size(); ++i)
        if (vel[i].size() != s.net.params()[i].values.size())
          throw InputError("checkpoint: velocity size mismatch");
    }
    s.opt.restore(j.at("iteration").get<long>(), std::move(vel));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Evaluation reports

inline std::string threshold_key(double th) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(2) << th;
  return ss.str();
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j = nlohmann::json::object();
  nlohmann::json rows = nlohmann::json::object();
  for (const auto& row : r.rows) {
    nlohmann::json e = nlohmann::json::object();
    for (const auto& [k, ap] : row.ap) e[std::to_string(k)] = ap;
    e["mAP"] = row.map;
    rows[threshold_key(row.threshold)] = e;
  }
  j["thresholds"] = rows;
  j["avg_mAP"] = r.avg_map;
  return j;
}

/// One row per class plus a final mAP row; one column per IoU threshold and
/// a trailing average.
inline std::string report_csv(const EvalReport& r) {
  std::string s = "class";
  for (const auto& row : r.rows) s += "," + threshold_key(row.threshold);
  s += ",avg\n";
  std::set<ClassId> classes;
  for (const auto& row : r.rows)
    for (const auto& [k, ap] : row.ap) classes.insert(k);
  for (ClassId k : classes) {
    s += std::to_string(k);
    double sum = 0.0;
    for (const auto& row : r.rows) {
      const double ap = row.ap.at(k);
      sum += ap;
      s += "," + format_double(ap);
    }
    s += "," + format_double(r.rows.empty() ? 0.0 : sum / static_cast<double>(r.rows.size())) + "\n";
  }
  s += "mAP";
  for (const auto& row : r.rows) s += "," + format_double(row.map);
  s += "," + format_double(r.avg_map) + "\n";
  return s;
}

}  // namespace oicloc
