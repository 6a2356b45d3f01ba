#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "uplift/error.hpp"
#include "uplift/hash.hpp"

namespace uplift {

namespace fs = std::filesystem;

// Local experiment store. Layout:
//   <root>/index.json
//   <root>/<experiment>/<run_id>/meta.json
//   <root>/<experiment>/<run_id>/metrics/<name>.log   ("step value" lines)
//   <root>/<experiment>/<run_id>/artifacts/...

enum class RunStatus { running, finished, failed };

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::running: return "running";
    case RunStatus::finished: return "finished";
    case RunStatus::failed: return "failed";
  }
  return "failed";
}

inline RunStatus parse_status(std::string_view s) {
  if (s == "running") return RunStatus::running;
  if (s == "finished") return RunStatus::finished;
  return RunStatus::failed;
}

struct MetricPoint {
  std::int64_t step = 0;
  double value = 0.0;
  friend bool operator==(const MetricPoint&, const MetricPoint&) = default;
};

struct ArtifactRef {
  std::string path;  // relative to the run directory
  std::string sha256;
  friend bool operator==(const ArtifactRef&, const ArtifactRef&) = default;
};

struct RunRecord {
  std::string run_id;
  std::string experiment;
  std::int64_t start_ms = 0;
  std::optional<std::int64_t> end_ms;
  std::map<std::string, std::string> params;
  std::map<std::string, std::string> tags;
  std::map<std::string, std::vector<MetricPoint>> metrics;
  std::vector<ArtifactRef> artifacts;
  RunStatus status = RunStatus::running;
  bool complete = true;  // false when meta.json is missing or unreadable

  std::optional<double> metric(const std::string& name) const {
    const auto it = metrics.find(name);
    if (it == metrics.end() || it->second.empty()) return std::nullopt;
    return it->second.back().value;
  }

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline nlohmann::json summary_json(const RunRecord& r) {
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [name, series] : r.metrics)
    if (!series.empty()) m[name] = series.back().value;
  nlohmann::json arts = nlohmann::json::array();
  for (const auto& a : r.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
  return {{"run_id", r.run_id},
          {"experiment", r.experiment},
          {"status", r.complete ? to_string(r.status) : "incomplete"},
          {"start_ms", r.start_ms},
          {"end_ms", r.end_ms ? nlohmann::json(*r.end_ms) : nlohmann::json(nullptr)},
          {"params", r.params},
          {"tags", r.tags},
          {"metrics", m},
          {"artifacts", arts}};
}

// ---------------------------------------------------------------- filter ---
//
//   filter  := clause ("and" clause)*
//   clause  := key op value
//   key     := name | "metrics." name | "params." name | "tags." name
//   op      := "<" | "<=" | ">" | ">=" | "=" | "==" | "!="
//   value   := number | 'quoted' | "quoted" | bare word
//
// Bare names refer to metrics (latest logged value) and compare numerically.
// Params and tags compare as strings and accept only "=", "==" and "!=".
// A run without the referenced metric or key never matches.

struct FilterClause {
  enum class Scope { metric, param, tag } scope = Scope::metric;
  std::string key;
  std::string op;
  std::string value;
  double number = 0.0;
};

inline std::vector<FilterClause> parse_filter(std::string_view text) {
  std::vector<FilterClause> out;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
  };
  auto fail = [&](const std::string& why) -> FilterParseError {
    return FilterParseError("filter: " + why + " at offset " + std::to_string(i) + " in '" + std::string(text) + "'");
  };
  auto is_name_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  };
  skip_ws();
  if (i == text.size()) return out;
  while (true) {
    skip_ws();
    const std::size_t k0 = i;
    while (i < text.size() && is_name_char(text[i])) ++i;
    if (i == k0) throw fail("expected a key");
    FilterClause c;
    std::string key(text.substr(k0, i - k0));
    if (key.rfind("metrics.", 0) == 0) {
      key.erase(0, 8);
    } else if (key.rfind("params.", 0) == 0) {
      c.scope = FilterClause::Scope::param;
      key.erase(0, 7);
    } else if (key.rfind("tags.", 0) == 0) {
      c.scope = FilterClause::Scope::tag;
      key.erase(0, 5);
    }
    if (key.empty()) throw fail("empty key");
    c.key = key;

    skip_ws();
    static constexpr std::string_view ops[] = {"<=", ">=", "==", "!=", "<", ">", "="};
    for (auto op : ops) {
      if (text.substr(i, op.size()) == op) {
        c.op = op == "==" ? "=" : std::string(op);
        i += op.size();
        break;
      }
    }
    if (c.op.empty()) throw fail("expected a comparison operator");

    skip_ws();
    if (i == text.size()) throw fail("expected a value");
    if (text[i] == '\'' || text[i] == '"') {
      const char q = text[i++];
      const std::size_t v0 = i;
      while (i < text.size() && text[i] != q) ++i;
      if (i == text.size()) throw fail("unterminated string");
      c.value = std::string(text.substr(v0, i - v0));
      ++i;
    } else {
      const std::size_t v0 = i;
      while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      c.value = std::string(text.substr(v0, i - v0));
    }

    if (c.scope == FilterClause::Scope::metric) {
      const auto* b = c.value.data();
      const auto [ptr, ec] = std::from_chars(b, b + c.value.size(), c.number);
      if (ec != std::errc{} || ptr != b + c.value.size()) throw fail("metric comparison needs a number");
    } else if (c.op != "=" && c.op != "!=") {
      throw fail("params and tags support only = and !=");
    }
    out.push_back(std::move(c));

    skip_ws();
    if (i == text.size()) break;
    const std::size_t w0 = i;
    while (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) ++i;
    std::string word(text.substr(w0, i - w0));
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (word != "and") {
      i = w0;
      throw fail("expected 'and'");
    }
  }
  return out;
}

inline bool matches(const RunRecord& r, const std::vector<FilterClause>& clauses) {
  for (const auto& c : clauses) {
    if (c.scope == FilterClause::Scope::metric) {
      const auto v = r.metric(c.key);
      if (!v) return false;
      const double x = *v, y = c.number;
      const bool ok = c.op == "<"    ? x < y
                      : c.op == "<=" ? x <= y
                      : c.op == ">"  ? x > y
                      : c.op == ">=" ? x >= y
                      : c.op == "="  ? x == y
                                     : x != y;
      if (!ok) return false;
    } else {
      const auto& m = c.scope == FilterClause::Scope::param ? r.params : r.tags;
      const auto it = m.find(c.key);
      if (it == m.end()) return false;
      if ((it->second == c.value) != (c.op == "=")) return false;
    }
  }
  return true;
}

// ----------------------------------------------------------------- store ---

inline void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

inline void check_name(const std::string& name, const char* what) {
  const bool ok = !name.empty() && name != "." && name != ".." &&
                  std::all_of(name.begin(), name.end(), [](char c) {
                    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
                  });
  if (!ok) throw ConfigError(std::string("invalid ") + what + " name '" + name + "'");
}

class RunStore {
 public:
  explicit RunStore(fs::path root) : root_(std::move(root)) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) throw Error("cannot create run store at '" + root_.string() + "'");
  }

  const fs::path& root() const noexcept { return root_; }

  fs::path run_dir(const RunRecord& r) const { return root_ / r.experiment / r.run_id; }

  RunRecord start_run(const std::string& experiment, std::map<std::string, std::string> params = {},
                      std::map<std::string, std::string> tags = {}) {
    check_name(experiment, "experiment");
    RunRecord r;
    r.experiment = experiment;
    r.params = std::move(params);
    r.tags = std::move(tags);
    r.start_ms = now_ms();
    fs::create_directories(root_ / experiment);
    for (int attempt = 0;; ++attempt) {
      r.run_id = new_run_id();
      std::error_code ec;
      if (fs::create_directory(root_ / experiment / r.run_id, ec)) break;
      if (attempt > 16) throw Error("cannot allocate a run directory under '" + root_.string() + "'");
    }
    fs::create_directories(run_dir(r) / "metrics");
    fs::create_directories(run_dir(r) / "artifacts");
    write_meta(r);
    update_index(r);
    return r;
  }

  void log_metric(RunRecord& r, const std::string& name, double value, std::int64_t step = 0) {
    require_running(r);
    check_name(name, "metric");
    const fs::path path = run_dir(r) / "metrics" / (name + ".log");
    std::ofstream out(path, std::ios::app);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%lld %.17g\n", static_cast<long long>(step), value);
    out << buf;
    out.flush();
    if (!out) throw Error("cannot append to '" + path.string() + "'");
    r.metrics[name].push_back({step, value});
  }

  void set_tag(RunRecord& r, const std::string& key, const std::string& value) {
    require_running(r);
    r.tags[key] = value;
    write_meta(r);
  }

  /// Copies `file` into the run's artifact folder and records its hash.
  ArtifactRef log_artifact(RunRecord& r, const fs::path& file, std::string name = {}) {
    require_running(r);
    if (name.empty()) name = file.filename().string();
    check_name(name, "artifact");
    const fs::path dest = run_dir(r) / "artifacts" / name;
    std::error_code ec;
    fs::copy_file(file, dest, fs::copy_options::overwrite_existing, ec);
    if (ec) throw Error("cannot copy artifact '" + file.string() + "': " + ec.message());
    return record_artifact(r, name, sha256_file(dest));
  }

  ArtifactRef log_artifact_text(RunRecord& r, const std::string& name, const std::string& content) {
    require_running(r);
    check_name(name, "artifact");
    write_atomic(run_dir(r) / "artifacts" / name, content);
    return record_artifact(r, name, sha256_hex(content));
  }

  void finish_run(RunRecord& r, RunStatus status = RunStatus::finished) {
    require_running(r);
    if (status == RunStatus::running) throw ConfigError("finish_run needs a terminal status");
    r.status = status;
    r.end_ms = std::max(now_ms(), r.start_ms);
    write_meta(r);
    update_index(r);
  }

  /// Reads one run from disk. Metrics come from the append-only logs.
  RunRecord load_run(const std::string& experiment, const std::string& run_id) const {
    RunRecord r;
    r.experiment = experiment;
    r.run_id = run_id;
    const fs::path dir = root_ / experiment / run_id;
    if (!fs::is_directory(dir)) throw Error("no run '" + run_id + "' in experiment '" + experiment + "'");
    try {
      const auto meta = nlohmann::json::parse(read_file(dir / "meta.json"));
      r.start_ms = meta.at("start_ms").get<std::int64_t>();
      if (!meta.at("end_ms").is_null()) r.end_ms = meta.at("end_ms").get<std::int64_t>();
      r.params = meta.at("params").get<std::map<std::string, std::string>>();
      r.tags = meta.at("tags").get<std::map<std::string, std::string>>();
      for (const auto& a : meta.at("artifacts")) r.artifacts.push_back({a.at("path"), a.at("sha256")});
      r.status = parse_status(meta.at("status").get<std::string>());
    } catch (const std::exception&) {
      r.complete = false;
      r.status = RunStatus::failed;
    }
    if (fs::is_directory(dir / "metrics")) {
      std::vector<fs::path> logs;
      for (const auto& e : fs::directory_iterator(dir / "metrics"))
        if (e.path().extension() == ".log") logs.push_back(e.path());
      std::sort(logs.begin(), logs.end());
      for (const auto& p : logs) {
        auto& series = r.metrics[p.stem().string()];
        std::ifstream in(p);
        long long step = 0;
        double value = 0.0;
        while (in >> step >> value) series.push_back({step, value});
      }
    }
    return r;
  }

  /// Full directory scan, sorted by start time then run id.
  std::vector<RunRecord> scan(const std::string& experiment = {}) const {
    std::vector<RunRecord> out;
    for (const auto& exp : list_dirs(root_)) {
      if (!experiment.empty() && exp != experiment) continue;
      for (const auto& id : list_dirs(root_ / exp)) out.push_back(load_run(exp, id));
    }
    sort_runs(out);
    return out;
  }

  std::vector<RunRecord> query_runs(const std::string& experiment = {}, std::string_view filter = {}) const {
    const auto clauses = parse_filter(filter);
    auto runs = scan(experiment);
    std::erase_if(runs, [&](const RunRecord& r) { return !matches(r, clauses); });
    return runs;
  }

  std::optional<RunRecord> find_run(const std::string& run_id) const {
    for (const auto& exp : list_dirs(root_))
      if (fs::is_directory(root_ / exp / run_id)) return load_run(exp, run_id);
    return std::nullopt;
  }

  /// Artifacts whose file is missing or whose hash no longer matches.
  std::vector<ArtifactRef> verify_artifacts(const RunRecord& r) const {
    std::vector<ArtifactRef> bad;
    for (const auto& a : r.artifacts) {
      const fs::path p = run_dir(r) / a.path;
      if (!fs::is_regular_file(p) || sha256_file(p) != a.sha256) bad.push_back(a);
    }
    return bad;
  }

  fs::path index_path() const { return root_ / "index.json"; }

  nlohmann::json read_index() const {
    if (!fs::exists(index_path())) return nlohmann::json::object({{"runs", nlohmann::json::array()}});
    return nlohmann::json::parse(read_file(index_path()));
  }

  /// Rewrites index.json from a directory scan.
  nlohmann::json rebuild_index() const {
    std::lock_guard lock(index_mutex());
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : scan()) runs.push_back(index_entry(r));
    nlohmann::json idx = {{"runs", runs}};
    write_atomic(index_path(), idx.dump(2));
    return idx;
  }

 private:
  static std::int64_t now_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }

  static std::string new_run_id() {
    static std::mutex m;
    static std::mt19937_64 gen{std::random_device{}()};
    std::lock_guard lock(m);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(gen()));
    return buf;
  }

  static std::mutex& index_mutex() {
    static std::mutex m;
    return m;
  }

  static std::vector<std::string> list_dirs(const fs::path& dir) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_directory()) out.push_back(e.path().filename().string());
    std::sort(out.begin(), out.end());
    return out;
  }

  static void sort_runs(std::vector<RunRecord>& runs) {
    std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
      if (a.start_ms != b.start_ms) return a.start_ms < b.start_ms;
      return a.run_id < b.run_id;
    });
  }

  static nlohmann::json index_entry(const RunRecord& r) {
    return {{"run_id", r.run_id},
            {"experiment", r.experiment},
            {"status", r.complete ? to_string(r.status) : "incomplete"},
            {"start_ms", r.start_ms}};
  }

  void require_running(const RunRecord& r) const {
    if (r.status != RunStatus::running)
      throw ImmutabilityError("run " + r.run_id + " is " + to_string(r.status) + " and cannot be modified");
    const fs::path meta = run_dir(r) / "meta.json";
    if (fs::exists(meta)) {
      const auto j = nlohmann::json::parse(read_file(meta));
      if (j.value("status", "") != "running")
        throw ImmutabilityError("run " + r.run_id + " is " + j.value("status", "") + " on disk");
    }
  }

  ArtifactRef record_artifact(RunRecord& r, const std::string& name, std::string hash) {
    ArtifactRef ref{"artifacts/" + name, std::move(hash)};
    std::erase_if(r.artifacts, [&](const ArtifactRef& a) { return a.path == ref.path; });
    r.artifacts.push_back(ref);
    write_meta(r);
    return ref;
  }

  void write_meta(const RunRecord& r) const {
    nlohmann::json arts = nlohmann::json::array();
    for (const auto& a : r.artifacts) arts.push_back({{"path", a.path}, {"sha256", a.sha256}});
    const nlohmann::json meta = {{"run_id", r.run_id},
                                 {"experiment", r.experiment},
                                 {"status", to_string(r.status)},
                                 {"start_ms", r.start_ms},
                                 {"end_ms", r.end_ms ? nlohmann::json(*r.end_ms) : nlohmann::json(nullptr)},
                                 {"params", r.params},
                                 {"tags", r.tags},
                                 {"artifacts", arts}};
    write_atomic(run_dir(r) / "meta.json", meta.dump(2));
  }

  void update_index(const RunRecord& r) const {
    std::lock_guard lock(index_mutex());
    nlohmann::json idx = nlohmann::json::object({{"runs", nlohmann::json::array()}});
    try {
      if (fs::exists(index_path())) idx = nlohmann::json::parse(read_file(index_path()));
    } catch (const std::exception&) {
      // A corrupt index is rebuilt lazily; fall through with an empty one.
    }
    auto& runs = idx["runs"];
    for (auto it = runs.begin(); it != runs.end(); ++it) {
      if (it->value("run_id", "") == r.run_id) {
        runs.erase(it);
        break;
      }
    }
    runs.push_back(index_entry(r));
    std::vector<nlohmann::json> v(runs.begin(), runs.end());
    std::sort(v.begin(), v.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
      const auto sa = a.value("start_ms", std::int64_t{0}), sb = b.value("start_ms", std::int64_t{0});
      if (sa != sb) return sa < sb;
      return a.value("run_id", "") < b.value("run_id", "");
    });
    idx["runs"] = v;
    write_atomic(index_path(), idx.dump(2));
  }

  fs::path root_;
};

}  // namespace uplift
