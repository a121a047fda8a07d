#include "mixem/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace mixem {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string chart_name(Chart c) { return c == Chart::Natural ? "natural" : "omega"; }

Chart chart_from_name(const std::string& s) {
  if (s == "natural") return Chart::Natural;
  if (s == "omega") return Chart::Omega;
  throw IoError("unknown chart: " + s);
}

std::string mode_name(CovMode m) { return m == CovMode::Full ? "full" : "diagonal"; }

CovMode mode_from_name(const std::string& s) {
  if (s == "full") return CovMode::Full;
  if (s == "diagonal") return CovMode::Diagonal;
  throw IoError("unknown covariance mode: " + s);
}

// Line-oriented reader that tracks position for error messages.
class LineReader {
 public:
  LineReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  // Next non-empty, non-comment line; throws at end of input.
  std::string line() {
    std::string s;
    while (std::getline(in_, s)) {
      ++lineno_;
      if (!s.empty() && s.back() == '\r') s.pop_back();
      const auto first = s.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      if (s[first] == '#') continue;
      return s;
    }
    throw IoError(origin_ + ": unexpected end of input");
  }

  bool at_end() {
    while (in_.peek() != EOF) {
      std::string s;
      const auto pos = in_.tellg();
      if (!std::getline(in_, s)) return true;
      ++lineno_;
      if (!s.empty() && s.back() == '\r') s.pop_back();
      const auto first = s.find_first_not_of(" \t");
      if (first != std::string::npos && s[first] != '#') {
        in_.seekg(pos);
        --lineno_;
        return false;
      }
    }
    return true;
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw IoError(origin_ + ":" + std::to_string(lineno_) + ": " + message);
  }

  // "key rest-of-line" accessor: checks the key and returns the value part.
  std::string keyed(const std::string& key) {
    const std::string s = line();
    if (s == key) return "";
    if (s.rfind(key + " ", 0) != 0) fail("expected '" + key + "', got '" + s + "'");
    return s.substr(key.size() + 1);
  }

  void expect(const std::string& literal) {
    const std::string s = line();
    if (s != literal) fail("expected '" + literal + "', got '" + s + "'");
  }

  double number(const std::string& token) const {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      fail("not a number: '" + token + "'");
    }
    if (used != token.size()) fail("trailing characters in number: '" + token + "'");
    return v;
  }

  long integer(const std::string& token) const {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(token, &used);
    } catch (const std::exception&) {
      fail("not an integer: '" + token + "'");
    }
    if (used != token.size()) fail("trailing characters in integer: '" + token + "'");
    return v;
  }

  std::uint64_t unsigned_integer(const std::string& token, int base = 10) const {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      v = std::stoull(token, &used, base);
    } catch (const std::exception&) {
      fail("not an unsigned integer: '" + token + "'");
    }
    if (used != token.size()) fail("trailing characters in integer: '" + token + "'");
    return v;
  }

  std::vector<std::string> tokens(const std::string& s) const {
    std::istringstream iss(s);
    std::vector<std::string> out;
    std::string t;
    while (iss >> t) out.push_back(t);
    return out;
  }

  Vector numbers(const std::string& s, long expected) const {
    const auto toks = tokens(s);
    if (expected >= 0 && static_cast<long>(toks.size()) != expected) {
      fail("expected " + std::to_string(expected) + " values, got " +
           std::to_string(toks.size()));
    }
    Vector v(static_cast<long>(toks.size()));
    for (std::size_t i = 0; i < toks.size(); ++i) v[static_cast<long>(i)] = number(toks[i]);
    return v;
  }

 private:
  std::istream& in_;
  std::string origin_;
  long lineno_ = 0;
};

std::ofstream open_for_write(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_for_read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return in;
}

}  // namespace

// --- datasets ---------------------------------------------------------

Dataset read_dataset(const std::string& path) {
  std::ifstream in = open_for_read(path);
  LineReader reader(in, path);
  std::vector<Vector> rows;
  long width = -1;
  while (!reader.at_end()) {
    Vector row = reader.numbers(reader.line(), width);
    if (width < 0) width = row.size();
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");
  Dataset data;
  data.points.resize(static_cast<long>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i)
    data.points.row(static_cast<long>(i)) = rows[i].transpose();
  return data;
}

void write_dataset(const Dataset& data, const std::string& path, const std::string& comment) {
  std::ofstream out = open_for_write(path);
  if (!comment.empty()) {
    std::istringstream lines(comment);
    std::string l;
    while (std::getline(lines, l)) out << "# " << l << '\n';
  }
  for (long i = 0; i < data.points.rows(); ++i) {
    for (long p = 0; p < data.points.cols(); ++p) {
      if (p > 0) out << ' ';
      out << g17(data.points(i, p));
    }
    out << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// --- mixture parameters ----------------------------------------------

void write_params_stream(std::ostream& out, const GmmParams& params) {
  const int m = params.components();
  const int d = params.dim();
  out << "mixem-params 1\n";
  out << "mode " << mode_name(params.mode) << '\n';
  out << "components " << m << '\n';
  out << "dim " << d << '\n';
  out << "weights";
  for (int j = 0; j < m; ++j) out << ' ' << g17(params.weights[j]);
  out << '\n';
  for (int j = 0; j < m; ++j) {
    out << "mean " << j;
    for (int p = 0; p < d; ++p) out << ' ' << g17(params.means[j][p]);
    out << '\n';
    if (params.mode == CovMode::Full) {
      out << "cov " << j << '\n';
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          if (c > 0) out << ' ';
          out << g17(params.covariances[j](r, c));
        }
        out << '\n';
      }
    } else {
      out << "variances " << j;
      for (int p = 0; p < d; ++p) out << ' ' << g17(params.variances[j][p]);
      out << '\n';
    }
  }
  out << "end mixem-params\n";
}

GmmParams read_params_stream(std::istream& in) {
  LineReader reader(in, "params");
  reader.expect("mixem-params 1");
  GmmParams params;
  params.mode = mode_from_name(reader.keyed("mode"));
  const long m = reader.integer(reader.keyed("components"));
  const long d = reader.integer(reader.keyed("dim"));
  if (m <= 0 || d <= 0) reader.fail("components and dim must be positive");
  params.weights = reader.numbers(reader.keyed("weights"), m);
  params.means.resize(m);
  if (params.mode == CovMode::Full)
    params.covariances.resize(m);
  else
    params.variances.resize(m);
  for (long j = 0; j < m; ++j) {
    Vector mean_line = reader.numbers(reader.keyed("mean"), d + 1);
    if (static_cast<long>(mean_line[0]) != j) reader.fail("mean blocks out of order");
    params.means[j] = mean_line.tail(d);
    if (params.mode == CovMode::Full) {
      const long tag = reader.integer(reader.keyed("cov"));
      if (tag != j) reader.fail("cov blocks out of order");
      params.covariances[j].resize(d, d);
      for (long r = 0; r < d; ++r)
        params.covariances[j].row(r) = reader.numbers(reader.line(), d).transpose();
    } else {
      Vector var_line = reader.numbers(reader.keyed("variances"), d + 1);
      if (static_cast<long>(var_line[0]) != j) reader.fail("variance blocks out of order");
      params.variances[j] = var_line.tail(d);
    }
  }
  reader.expect("end mixem-params");
  return params;
}

GmmParams read_params(const std::string& path) {
  std::ifstream in = open_for_read(path);
  try {
    return read_params_stream(in);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void write_params(const GmmParams& params, const std::string& path) {
  std::ofstream out = open_for_write(path);
  write_params_stream(out, params);
  if (!out) throw IoError("write failed: " + path);
}

// --- run records -------------------------------------------------------

void write_run_record(const RunRecord& record, const std::string& path) {
  std::ofstream out = open_for_write(path);
  char hex[24];
  out << "mixem-run 1\n";
  out << "method " << record.method << '\n';
  out << "config " << record.config << '\n';
  out << "dataset " << record.dataset << '\n';
  out << "seed " << record.seed << '\n';
  out << "init-index " << record.init_index << '\n';
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(record.init_digest));
  out << "init-digest " << hex << '\n';
  out << "termination " << termination_name(record.termination) << '\n';
  if (!record.diagnostics.empty()) out << "diagnostics " << record.diagnostics << '\n';
  out << "invalid-iterate-seen " << (record.invalid_iterate_seen ? 1 : 0) << '\n';
  out << "final-objective " << g17(record.final_objective) << '\n';
  out << "final-gradient-norm " << g17(record.final_gradient_norm) << '\n';
  out << "em-equivalent-count " << record.ledger.em_equivalent_count << '\n';
  if (!record.restart_boundaries.empty()) {
    out << "restart-boundaries";
    for (long b : record.restart_boundaries) out << ' ' << b;
    out << '\n';
  }
  out << "accepted " << record.accepted_objectives.size() << '\n';
  for (double v : record.accepted_objectives) out << g17(v) << '\n';
  out << "trace " << record.ledger.objective_trace.size() << '\n';
  for (double v : record.ledger.objective_trace) out << g17(v) << '\n';
  out << "events " << record.ledger.events.size() << '\n';
  for (const LedgerEvent& e : record.ledger.events)
    out << e.at << ' ' << e.tag << ' ' << e.detail << '\n';
  out << "final-theta " << chart_name(record.final_theta.chart) << ' '
      << record.final_theta.values.size() << '\n';
  for (long i = 0; i < record.final_theta.values.size(); ++i)
    out << g17(record.final_theta.values[i]) << '\n';
  out << "params " << (record.has_params ? 1 : 0) << '\n';
  if (record.has_params) write_params_stream(out, record.final_params);
  out << "end mixem-run\n";
  if (!out) throw IoError("write failed: " + path);
}

RunRecord read_run_record(const std::string& path) {
  std::ifstream in = open_for_read(path);
  LineReader reader(in, path);
  reader.expect("mixem-run 1");
  RunRecord rec;
  rec.method = reader.keyed("method");
  rec.config = reader.keyed("config");
  rec.dataset = reader.keyed("dataset");
  rec.seed = reader.unsigned_integer(reader.keyed("seed"));
  rec.init_index = static_cast<int>(reader.integer(reader.keyed("init-index")));
  rec.init_digest = reader.unsigned_integer(reader.keyed("init-digest"), 16);
  rec.termination = [&] {
    const std::string name = reader.keyed("termination");
    try {
      return termination_from_name(name);
    } catch (const Error& e) {
      reader.fail(e.what());
    }
  }();

  // Optional diagnostics line, then the fixed tail of scalar fields.
  std::string s = reader.line();
  if (s.rfind("diagnostics ", 0) == 0) {
    rec.diagnostics = s.substr(12);
    s = reader.line();
  }
  auto keyed_value = [&](const std::string& line_text, const std::string& key) {
    if (line_text.rfind(key + " ", 0) != 0)
      reader.fail("expected '" + key + "', got '" + line_text + "'");
    return line_text.substr(key.size() + 1);
  };
  rec.invalid_iterate_seen = reader.integer(keyed_value(s, "invalid-iterate-seen")) != 0;
  rec.final_objective = reader.number(reader.keyed("final-objective"));
  rec.final_gradient_norm = reader.number(reader.keyed("final-gradient-norm"));
  rec.ledger.em_equivalent_count = reader.integer(reader.keyed("em-equivalent-count"));

  s = reader.line();
  if (s.rfind("restart-boundaries", 0) == 0) {
    for (const std::string& t : reader.tokens(s.substr(18)))
      rec.restart_boundaries.push_back(reader.integer(t));
    s = reader.line();
  }
  const long n_accepted = reader.integer(keyed_value(s, "accepted"));
  rec.accepted_objectives.reserve(n_accepted);
  for (long i = 0; i < n_accepted; ++i)
    rec.accepted_objectives.push_back(reader.number(reader.line()));
  const long n_trace = reader.integer(reader.keyed("trace"));
  rec.ledger.objective_trace.reserve(n_trace);
  for (long i = 0; i < n_trace; ++i)
    rec.ledger.objective_trace.push_back(reader.number(reader.line()));
  const long n_events = reader.integer(reader.keyed("events"));
  rec.ledger.events.reserve(n_events);
  for (long i = 0; i < n_events; ++i) {
    const std::string ev = reader.line();
    std::istringstream iss(ev);
    LedgerEvent e;
    std::string at_token;
    if (!(iss >> at_token >> e.tag)) reader.fail("malformed event: '" + ev + "'");
    e.at = reader.integer(at_token);
    std::getline(iss, e.detail);
    if (!e.detail.empty() && e.detail.front() == ' ') e.detail.erase(0, 1);
    rec.ledger.events.push_back(std::move(e));
  }
  {
    const auto toks = reader.tokens(reader.keyed("final-theta"));
    if (toks.size() != 2) reader.fail("final-theta wants a chart and a size");
    rec.final_theta.chart = chart_from_name(toks[0]);
    const long n = reader.integer(toks[1]);
    rec.final_theta.values.resize(n);
    for (long i = 0; i < n; ++i) rec.final_theta.values[i] = reader.number(reader.line());
  }
  rec.has_params = reader.integer(reader.keyed("params")) != 0;
  if (rec.has_params) {
    try {
      rec.final_params = read_params_stream(in);
    } catch (const IoError& e) {
      throw IoError(path + ": embedded params: " + e.what());
    }
  }
  reader.expect("end mixem-run");
  return rec;
}

std::vector<RunRecord> read_run_records_dir(const std::string& dir,
                                            std::vector<std::string>* errors) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("run-", 0) == 0 && name.size() > 4 &&
        name.compare(name.size() - 4, 4, ".txt") == 0) {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  out.reserve(files.size());
  for (const std::string& f : files) {
    try {
      out.push_back(read_run_record(f));
    } catch (const Error& e) {
      if (errors) errors->push_back(std::string(e.what()));
    }
  }
  return out;
}

// --- benchmark configuration -------------------------------------------

namespace {

// "key=value" tokens; values must not contain whitespace.
std::string field(LineReader& reader, const std::vector<std::string>& toks,
                  const std::string& key, bool required, const std::string& fallback = "") {
  for (std::size_t i = 1; i < toks.size(); ++i) {
    if (toks[i].rfind(key + "=", 0) == 0) return toks[i].substr(key.size() + 1);
  }
  if (required) reader.fail("missing field '" + key + "='");
  return fallback;
}

}  // namespace

void write_bench_config(const BenchConfig& config, const std::string& path) {
  std::ofstream out = open_for_write(path);
  out << "mixem-bench 1\n";
  out << "seed " << config.seed << '\n';
  out << "inits " << config.inits << '\n';
  out << "stop " << (config.stop.kind == StoppingRule::Kind::Absolute ? "absolute" : "scaled")
      << ' ' << g17(config.stop.threshold) << '\n';
  out << "max-iters " << config.max_iters << '\n';
  out << "objective " << (config.map ? "map" : "ml") << '\n';
  out << "jobs " << config.jobs << '\n';
  for (const DatasetSpec& ds : config.datasets) {
    out << "dataset name=" << ds.name;
    if (!ds.model.empty()) out << " model=" << ds.model;
    if (!ds.file.empty()) out << " file=" << ds.file;
    out << " n=" << ds.n << " fit=" << ds.fit_components << " mode=" << mode_name(ds.mode)
        << '\n';
  }
  for (const MethodSpec& m : config.methods) {
    out << "method label=" << m.label << " method=" << method_name(m.method)
        << " gamma=" << g17(m.gamma) << " hybrid=" << (m.hybrid ? 1 : 0)
        << " chart=" << chart_name(m.chart) << '\n';
  }
  out << "end mixem-bench\n";
  if (!out) throw IoError("write failed: " + path);
}

BenchConfig read_bench_config(const std::string& path) {
  std::ifstream in = open_for_read(path);
  LineReader reader(in, path);
  reader.expect("mixem-bench 1");
  BenchConfig config;
  config.seed = reader.unsigned_integer(reader.keyed("seed"));
  config.inits = static_cast<int>(reader.integer(reader.keyed("inits")));
  {
    const auto toks = reader.tokens(reader.keyed("stop"));
    if (toks.size() != 2) reader.fail("stop wants a kind and a threshold");
    if (toks[0] == "absolute")
      config.stop.kind = StoppingRule::Kind::Absolute;
    else if (toks[0] == "scaled")
      config.stop.kind = StoppingRule::Kind::Scaled;
    else
      reader.fail("unknown stop kind: " + toks[0]);
    config.stop.threshold = reader.number(toks[1]);
  }
  config.max_iters = reader.integer(reader.keyed("max-iters"));
  {
    const std::string obj = reader.keyed("objective");
    if (obj == "ml")
      config.map = false;
    else if (obj == "map")
      config.map = true;
    else
      reader.fail("unknown objective: " + obj);
  }
  config.jobs = static_cast<int>(reader.integer(reader.keyed("jobs")));
  for (std::string s = reader.line(); s != "end mixem-bench"; s = reader.line()) {
    const auto toks = reader.tokens(s);
    if (toks.empty()) continue;
    if (toks[0] == "dataset") {
      DatasetSpec ds;
      ds.name = field(reader, toks, "name", true);
      ds.model = field(reader, toks, "model", false);
      ds.file = field(reader, toks, "file", false);
      if (ds.model.empty() == ds.file.empty())
        reader.fail("dataset wants exactly one of model= or file=");
      ds.n = reader.integer(field(reader, toks, "n", true));
      ds.fit_components = static_cast<int>(reader.integer(field(reader, toks, "fit", true)));
      ds.mode = mode_from_name(field(reader, toks, "mode", true));
      config.datasets.push_back(std::move(ds));
    } else if (toks[0] == "method") {
      MethodSpec m;
      m.label = field(reader, toks, "label", true);
      try {
        m.method = method_from_name(field(reader, toks, "method", true));
      } catch (const Error& e) {
        reader.fail(e.what());
      }
      m.gamma = reader.number(field(reader, toks, "gamma", false, "1.5"));
      m.hybrid = reader.integer(field(reader, toks, "hybrid", false, "1")) != 0;
      m.chart = chart_from_name(field(reader, toks, "chart", false, "natural"));
      config.methods.push_back(std::move(m));
    } else {
      reader.fail("expected 'dataset', 'method', or 'end mixem-bench', got '" + toks[0] + "'");
    }
  }
  return config;
}

}  // namespace mixem
