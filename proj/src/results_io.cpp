#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ddiff/error.hpp"
#include "ddiff/experiment.hpp"

namespace ddiff {

namespace {

constexpr const char* kCsvHeader =
    "method,theta,steps,nfe,kl,ci_lo,ci_hi,positivity_frac,rejection_frac,wall_ms,seed";

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  require(!s.empty() && end == s.c_str() + s.size(), ErrorKind::data,
          "results: malformed number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  require(!s.empty() && end == s.c_str() + s.size(), ErrorKind::data,
          "results: malformed integer '" + s + "'");
  return v;
}

// JSON has no literal for non-finite numbers; they travel as strings.
std::string json_num(double v) { return std::isfinite(v) ? num(v) : "\"" + num(v) + "\""; }

double json_value(const nlohmann::json& j) {
  if (j.is_string()) return parse_num(j.get<std::string>());
  require(j.is_number(), ErrorKind::data, "results: expected a number in JSON");
  return j.get<double>();
}

std::string format_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << (r.theta ? num(*r.theta) : "") << ',' << r.steps << ','
       << num(r.nfe) << ',' << num(r.kl) << ',' << num(r.ci_lo) << ',' << num(r.ci_hi) << ','
       << num(r.positivity_frac) << ',' << num(r.rejection_frac) << ',' << num(r.wall_ms) << ','
       << r.seed << '\n';
  }
  return os.str();
}

// Numbers are written by hand so that every value carries 17 significant digits.
std::string format_json(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    os << (i ? ",\n " : "\n ") << "{\"method\": " << nlohmann::json(r.method).dump()
       << ", \"theta\": " << (r.theta ? json_num(*r.theta) : "null") << ", \"steps\": " << r.steps
       << ", \"nfe\": " << json_num(r.nfe) << ", \"kl\": " << json_num(r.kl)
       << ", \"ci_lo\": " << json_num(r.ci_lo) << ", \"ci_hi\": " << json_num(r.ci_hi)
       << ", \"positivity_frac\": " << json_num(r.positivity_frac)
       << ", \"rejection_frac\": " << json_num(r.rejection_frac)
       << ", \"wall_ms\": " << json_num(r.wall_ms) << ", \"seed\": " << r.seed << "}";
  }
  os << (rows.empty() ? "]\n" : "\n]\n");
  return os.str();
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)) && line == kCsvHeader, ErrorKind::data,
          "results: missing or unexpected CSV header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    require(f.size() == 11, ErrorKind::data, "results: CSV row must have 11 fields");
    ResultRow r;
    r.method = f[0];
    if (!f[1].empty()) r.theta = parse_num(f[1]);
    r.steps = static_cast<int>(parse_u64(f[2]));
    r.nfe = parse_num(f[3]);
    r.kl = parse_num(f[4]);
    r.ci_lo = parse_num(f[5]);
    r.ci_hi = parse_num(f[6]);
    r.positivity_frac = parse_num(f[7]);
    r.rejection_frac = parse_num(f[8]);
    r.wall_ms = parse_num(f[9]);
    r.seed = parse_u64(f[10]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResultRow> parse_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("results: invalid JSON: ") + e.what());
  }
  require(doc.is_array(), ErrorKind::data, "results: JSON document must be an array");
  std::vector<ResultRow> rows;
  try {
    for (const auto& j : doc) {
      ResultRow r;
      r.method = j.at("method").get<std::string>();
      if (!j.at("theta").is_null()) r.theta = json_value(j.at("theta"));
      r.steps = j.at("steps").get<int>();
      r.nfe = json_value(j.at("nfe"));
      r.kl = json_value(j.at("kl"));
      r.ci_lo = json_value(j.at("ci_lo"));
      r.ci_hi = json_value(j.at("ci_hi"));
      r.positivity_frac = json_value(j.at("positivity_frac"));
      r.rejection_frac = json_value(j.at("rejection_frac"));
      r.wall_ms = json_value(j.at("wall_ms"));
      r.seed = j.at("seed").get<std::uint64_t>();
      rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::data, std::string("results: malformed JSON row: ") + e.what());
  }
  return rows;
}

}  // namespace

std::string_view to_string(OutputFormat f) { return f == OutputFormat::csv ? "csv" : "json"; }

OutputFormat parse_format(std::string_view name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "json") return OutputFormat::json;
  fail(ErrorKind::config, "unknown output format '" + std::string(name) + "' (csv or json)");
}

std::string format_results(const std::vector<ResultRow>& rows, OutputFormat format) {
  return format == OutputFormat::csv ? format_csv(rows) : format_json(rows);
}

std::vector<ResultRow> parse_results(const std::string& text, OutputFormat format) {
  return format == OutputFormat::csv ? parse_csv(text) : parse_json(text);
}

void emit_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                  OutputFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  out << format_results(rows, format);
  out.flush();
  if (!out) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

}  // namespace ddiff
