// JSON scenario configs, CSV traces and JSON summaries/reports.
#pragma once

#include <charconv>
#include <fstream>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smio/linalg.hpp"
#include "smio/modeguard.hpp"
#include "smio/sim.hpp"

namespace smio {

using json = nlohmann::json;

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCode::kConfig, what) {}
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& path,
                           std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) {
    throw ConfigError(path + ": expected an object");
  }
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) {
      std::string list;
      for (const auto& a : ok) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(path + "/" + it.key() + ": unknown key (allowed: " +
                        list + ")");
    }
  }
}

inline double to_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  return v.get<double>();
}

inline int to_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return v.get<int>();
}

inline Vector to_vector(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
  Vector out(static_cast<Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    out(static_cast<Index>(i)) = to_number(v[i], path + "/" + std::to_string(i));
  }
  return out;
}

// Row-major nested arrays. `rows`/`cols` pin shapes for empty matrices.
inline Matrix to_matrix(const json& v, const std::string& path, Index rows,
                        Index cols) {
  if (!v.is_array()) throw ConfigError(path + ": expected nested arrays");
  if (v.empty()) {
    if (rows > 0 && cols > 0) throw ConfigError(path + ": matrix is empty");
    return Matrix::Zero(std::max<Index>(rows, 0), std::max<Index>(cols, 0));
  }
  const auto r = static_cast<Index>(v.size());
  Index c = -1;
  Matrix out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string rp = path + "/" + std::to_string(i);
    if (!v[i].is_array()) throw ConfigError(rp + ": expected a row array");
    if (c < 0) {
      c = static_cast<Index>(v[i].size());
      out.resize(r, c);
    } else if (static_cast<Index>(v[i].size()) != c) {
      throw ConfigError(rp + ": row has " + std::to_string(v[i].size()) +
                        " entries, expected " + std::to_string(c));
    }
    for (std::size_t j = 0; j < v[i].size(); ++j) {
      out(static_cast<Index>(i), static_cast<Index>(j)) =
          to_number(v[i][j], rp + "/" + std::to_string(j));
    }
  }
  return out;
}

inline std::vector<int> to_int_list(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an integer array");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(to_int(v[i], path + "/" + std::to_string(i)));
  }
  return out;
}

inline std::vector<Vector> to_sequence(const json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array of vectors");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.push_back(to_vector(v[i], path + "/" + std::to_string(i)));
  }
  return out;
}

inline std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Parses a scenario document. Every key is checked; unknown keys fail.
inline ScenarioConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("JSON syntax error at " + detail::locate(text, e.byte) +
                      ": " + e.what());
  }
  using detail::reject_unknown;
  reject_unknown(doc, "", {"model", "modes", "scenario", "tuning", "analysis"});
  if (!doc.contains("model")) throw ConfigError("/model: missing");
  const json& jm = doc["model"];
  reject_unknown(jm, "/model",
                 {"A", "B", "C", "D", "G", "H", "eta_w", "eta_v", "delta_x0"});
  for (const char* key : {"A", "C", "eta_w", "eta_v", "delta_x0"}) {
    if (!jm.contains(key)) {
      throw ConfigError(std::string("/model/") + key + ": missing");
    }
  }
  ScenarioConfig cfg;
  SystemModel& M = cfg.model;
  M.A = detail::to_matrix(jm["A"], "/model/A", -1, -1);
  M.C = detail::to_matrix(jm["C"], "/model/C", -1, -1);
  const Index n = M.A.rows();
  const Index l = M.C.rows();
  M.B = jm.contains("B") ? detail::to_matrix(jm["B"], "/model/B", n, 0)
                         : Matrix::Zero(n, 0);
  const Index m = M.B.cols();
  M.D = jm.contains("D") ? detail::to_matrix(jm["D"], "/model/D", l, m)
                         : Matrix::Zero(l, m);
  M.G = jm.contains("G") ? detail::to_matrix(jm["G"], "/model/G", n, 0)
                         : Matrix::Zero(n, 0);
  M.H = jm.contains("H") ? detail::to_matrix(jm["H"], "/model/H", l, 0)
                         : Matrix::Zero(l, 0);
  M.eta_w = detail::to_number(jm["eta_w"], "/model/eta_w");
  M.eta_v = detail::to_number(jm["eta_v"], "/model/eta_v");
  M.delta_x0 = detail::to_number(jm["delta_x0"], "/model/delta_x0");
  const auto problems = validate(M);
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) {
      msg += (msg.empty() ? "" : "; ") + ("/model/" + p.field + ": " + p.message);
    }
    throw ConfigError(msg);
  }

  if (!doc.contains("modes")) throw ConfigError("/modes: missing");
  const json& jmodes = doc["modes"];
  reject_unknown(jmodes, "/modes", {"rho", "explicit"});
  if (!jmodes.contains("rho")) throw ConfigError("/modes/rho: missing");
  cfg.rho = detail::to_int(jmodes["rho"], "/modes/rho");
  if (jmodes.contains("explicit")) {
    const json& list = jmodes["explicit"];
    if (!list.is_array()) throw ConfigError("/modes/explicit: expected array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string p = "/modes/explicit/" + std::to_string(i);
      reject_unknown(list[i], p, {"actuators", "sensors"});
      std::vector<int> acts, sens;
      if (list[i].contains("actuators")) {
        acts = detail::to_int_list(list[i]["actuators"], p + "/actuators");
      }
      if (list[i].contains("sensors")) {
        sens = detail::to_int_list(list[i]["sensors"], p + "/sensors");
      }
      cfg.explicit_modes.emplace_back(acts, sens);
    }
  }

  if (doc.contains("scenario")) {
    const json& js = doc["scenario"];
    reject_unknown(js, "/scenario",
                   {"true_mode", "horizon", "seed", "x0", "xhat0",
                    "known_input", "attack", "noise"});
    if (js.contains("true_mode")) {
      cfg.true_mode = detail::to_int(js["true_mode"], "/scenario/true_mode");
    }
    if (js.contains("horizon")) {
      cfg.horizon = detail::to_int(js["horizon"], "/scenario/horizon");
      if (cfg.horizon < 1) throw ConfigError("/scenario/horizon: must be >= 1");
    }
    if (js.contains("seed")) {
      if (!js["seed"].is_number_unsigned()) {
        throw ConfigError("/scenario/seed: expected a nonnegative integer");
      }
      cfg.noise_seed = js["seed"].get<std::uint64_t>();
    }
    if (js.contains("x0")) {
      cfg.x0 = detail::to_vector(js["x0"], "/scenario/x0");
      if (cfg.x0->size() != n) throw ConfigError("/scenario/x0: wrong length");
    }
    if (js.contains("xhat0")) {
      cfg.xhat0 = detail::to_vector(js["xhat0"], "/scenario/xhat0");
      if (cfg.xhat0->size() != n) {
        throw ConfigError("/scenario/xhat0: wrong length");
      }
    }
    if (js.contains("known_input")) {
      cfg.known_input =
          detail::to_sequence(js["known_input"], "/scenario/known_input");
      for (const auto& u : cfg.known_input) {
        if (u.size() != m) {
          throw ConfigError("/scenario/known_input: entries must have length " +
                            std::to_string(m));
        }
      }
    }
    if (js.contains("attack")) {
      const json& ja = js["attack"];
      reject_unknown(ja, "/scenario/attack",
                     {"amplitude", "bias", "frequency", "values"});
      if (ja.contains("amplitude")) {
        cfg.attack.amplitude =
            detail::to_number(ja["amplitude"], "/scenario/attack/amplitude");
      }
      if (ja.contains("bias")) {
        cfg.attack.bias = detail::to_number(ja["bias"], "/scenario/attack/bias");
      }
      if (ja.contains("frequency")) {
        cfg.attack.frequency =
            detail::to_number(ja["frequency"], "/scenario/attack/frequency");
      }
      if (ja.contains("values")) {
        cfg.attack.values =
            detail::to_sequence(ja["values"], "/scenario/attack/values");
        for (const auto& d : cfg.attack.values) {
          if (d.size() != cfg.rho) {
            throw ConfigError(
                "/scenario/attack/values: entries must have length rho = " +
                std::to_string(cfg.rho));
          }
        }
      }
    }
    if (js.contains("noise")) {
      if (!js["noise"].is_string()) {
        throw ConfigError("/scenario/noise: expected \"ball\" or \"sphere\"");
      }
      const auto shape = js["noise"].get<std::string>();
      if (shape == "ball") {
        cfg.noise_shape = NoiseShape::kBall;
      } else if (shape == "sphere") {
        cfg.noise_shape = NoiseShape::kSphere;
      } else {
        throw ConfigError("/scenario/noise: expected \"ball\" or \"sphere\"");
      }
    }
  }

  if (doc.contains("tuning")) {
    const json& jt = doc["tuning"];
    reject_unknown(jt, "/tuning",
                   {"inf_cutoff", "enum_budget", "threads", "ltilde_override"});
    if (jt.contains("inf_cutoff")) {
      cfg.k_inf_cutoff = detail::to_int(jt["inf_cutoff"], "/tuning/inf_cutoff");
    }
    if (jt.contains("enum_budget")) {
      cfg.enum_budget = detail::to_int(jt["enum_budget"], "/tuning/enum_budget");
      if (cfg.enum_budget < 0 || cfg.enum_budget > 30) {
        throw ConfigError("/tuning/enum_budget: must lie in 0..30");
      }
    }
    if (jt.contains("threads")) {
      cfg.threads = detail::to_int(jt["threads"], "/tuning/threads");
    }
    if (jt.contains("ltilde_override")) {
      const json& jo = jt["ltilde_override"];
      if (!jo.is_object()) {
        throw ConfigError("/tuning/ltilde_override: expected an object");
      }
      for (auto it = jo.begin(); it != jo.end(); ++it) {
        int id = 0;
        const auto& key = it.key();
        auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
        if (ec != std::errc() || ptr != key.data() + key.size()) {
          throw ConfigError("/tuning/ltilde_override/" + key +
                            ": key must be a mode id");
        }
        cfg.ltilde_override[id] = detail::to_matrix(
            it.value(), "/tuning/ltilde_override/" + key, n, 0);
      }
    }
  }

  if (doc.contains("analysis")) {
    const json& jan = doc["analysis"];
    reject_unknown(jan, "/analysis", {"R_x", "R_y"});
    if (jan.contains("R_x")) cfg.R_x = detail::to_number(jan["R_x"], "/analysis/R_x");
    if (jan.contains("R_y")) cfg.R_y = detail::to_number(jan["R_y"], "/analysis/R_y");
  }
  return cfg;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_config(text);
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

/// RFC-4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string join_ids(const std::vector<int>& ids, char sep = ';') {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(ids[i]);
  }
  return out;
}

inline std::vector<std::string> trace_header(Index n, Index rho) {
  std::vector<std::string> h = {"k",        "row_type",  "mode_id",
                                "r_norm",   "delta_inf", "delta_tri",
                                "delta_hat", "eliminated"};
  for (Index i = 1; i <= n; ++i) h.push_back("xhat_" + std::to_string(i));
  h.push_back("delta_x");
  for (Index i = 1; i <= rho; ++i) h.push_back("dhat_" + std::to_string(i));
  h.push_back("delta_d");
  h.push_back("active_count");
  h.push_back("active_modes");
  for (Index i = 1; i <= n; ++i) h.push_back("x_true_" + std::to_string(i));
  for (Index i = 1; i <= rho; ++i) h.push_back("d_true_" + std::to_string(i));
  return h;
}

/// One row per (k, mode) plus one "fused" row per k. Eliminated modes keep
/// emitting their frozen estimates with empty residual fields.
inline void write_trace_csv(std::ostream& os, const RunTrace& trace) {
  const Index n = trace.n;
  const Index rho = trace.rho;
  auto emit = [&os](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) os << ',';
      os << csv_field(fields[i]);
    }
    os << "\r\n";
  };
  emit(trace_header(n, rho));
  auto vec_fields = [](std::vector<std::string>& f, const Vector& v, Index len) {
    for (Index i = 0; i < len; ++i) {
      f.push_back(i < v.size() ? format_double(v(i)) : "");
    }
  };
  for (const auto& step : trace.steps) {
    const auto ks = static_cast<std::size_t>(step.k);
    const Vector& xt = trace.plant.x[ks];
    const Vector& dt = trace.plant.d[ks - 1];
    const std::string count = std::to_string(step.active.size());
    const std::string ids = join_ids(step.active);
    for (std::size_t i = 0; i < step.modes.size(); ++i) {
      const auto& mr = step.modes[i];
      if (!trace.status[i].designed) continue;
      std::vector<std::string> f = {std::to_string(step.k), "mode",
                                    std::to_string(mr.mode_id)};
      if (mr.stepped) {
        f.push_back(format_double(mr.res.r_norm));
        f.push_back(mr.res.delta_inf ? format_double(*mr.res.delta_inf) : "");
        f.push_back(format_double(mr.res.delta_tri));
        f.push_back(format_double(mr.res.delta_hat));
        f.push_back(mr.res.eliminated ? "1" : "0");
      } else {
        f.insert(f.end(), {"", "", "", "", "1"});
      }
      vec_fields(f, mr.xhat, n);
      f.push_back(format_double(mr.delta_x));
      vec_fields(f, mr.dhat, rho);
      f.push_back(mr.dhat.size() > 0 ? format_double(mr.delta_d) : "");
      f.push_back(count);
      f.push_back(ids);
      vec_fields(f, xt, n);
      vec_fields(f, dt, rho);
      emit(f);
    }
    std::vector<std::string> f = {std::to_string(step.k), "fused", "", "", "",
                                  "",                     "",      ""};
    for (Index i = 0; i < n; ++i) f.push_back("");
    f.push_back("");
    for (Index i = 0; i < rho; ++i) f.push_back("");
    f.push_back("");
    f.push_back(count);
    f.push_back(ids);
    vec_fields(f, xt, n);
    vec_fields(f, dt, rho);
    emit(f);
  }
}

inline std::string trace_csv(const RunTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, trace);
  return os.str();
}

inline json summary_json(const RunTrace& trace, const RunSummary& s) {
  json j;
  j["true_mode"] = trace.true_mode;
  j["steps"] = s.steps;
  j["final_active"] = s.final_active;
  j["eliminated_count"] = s.eliminated_count;
  j["true_mode_survived"] = s.true_mode_survived;
  j["containment_violations"] = s.containment_violations;
  j["soundness_violations"] = s.soundness_violations;
  j["all_modes_eliminated"] = s.fault_all_eliminated;
  json modes = json::array();
  for (const auto& st : trace.status) {
    json m;
    m["id"] = st.id;
    m["label"] = st.label;
    m["strongly_detectable"] = st.strongly_detectable;
    m["designed"] = st.designed;
    if (!st.diagnostic.empty()) m["diagnostic"] = st.diagnostic;
    m["first_elimination"] =
        st.eliminated_at ? json(*st.eliminated_at) : json(nullptr);
    modes.push_back(m);
  }
  j["modes"] = modes;
  return j;
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline json report_json(const DetectabilityReport& rep) {
  json j;
  j["R_x"] = rep.R_x ? json(*rep.R_x) : json(nullptr);
  j["R_y"] = rep.R_y ? json(*rep.R_y) : json(nullptr);
  j["condition_i_all_pairs"] = rep.condition_i_all;
  j["condition_ii_all_pairs"] = rep.condition_ii_all;
  j["certified"] = rep.certified;
  json pairs = json::array();
  for (const auto& p : rep.pairs) {
    json r;
    r["q"] = p.q;
    r["q_other"] = p.q_other;
    r["dimension_matched"] = p.dimension_matched;
    r["subspace_distance"] = p.subspace_distance;
    r["condition_ii"] = p.condition_ii;
    auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
    r["sigma_min"] = opt(p.sigma_min);
    r["R_z"] = opt(p.R_z);
    r["threshold_ratio"] = opt(p.threshold_ratio);
    r["condition_i"] = opt(p.condition_i);
    if (p.dimension_matched) r["W"] = matrix_json(p.W);
    if (!p.note.empty()) r["note"] = p.note;
    pairs.push_back(r);
  }
  j["pairs"] = pairs;
  return j;
}

}  // namespace smio
