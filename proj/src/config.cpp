#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <thread>

#include "ddiff/error.hpp"
#include "ddiff/experiment.hpp"

namespace ddiff {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  for (char c : value + ",") {
    if (c == ',') {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  return out;
}

double to_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorKind::config, key + ": expected a number, got '" + s + "'");
  return v;
}

// Integers may be written in floating form (1e6) as long as they are integral.
std::int64_t to_int(const std::string& key, const std::string& s) {
  const double v = to_double(key, s);
  if (v != std::floor(v) || std::abs(v) > 9.0e15)
    fail(ErrorKind::config, key + ": expected an integer, got '" + s + "'");
  return static_cast<std::int64_t>(v);
}

std::uint64_t to_seed(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    fail(ErrorKind::config, key + ": expected a nonnegative integer seed, got '" + s + "'");
  return v;
}

int to_small_int(const std::string& key, const std::string& s) {
  const auto v = to_int(key, s);
  if (v < -2147483647 || v > 2147483647) fail(ErrorKind::config, key + ": value out of range");
  return static_cast<int>(v);
}

}  // namespace

void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "method") {
    c.methods.clear();
    for (const auto& m : split_list(value)) {
      try {
        c.methods.push_back(parse_method(m));
      } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
      }
    }
    if (c.methods.empty()) fail(ErrorKind::config, "method: empty list");
  } else if (key == "theta") {
    c.thetas.clear();
    for (const auto& t : split_list(value)) c.thetas.push_back(to_double(key, t));
  } else if (key == "steps") {
    c.steps.clear();
    for (const auto& n : split_list(value)) c.steps.push_back(to_small_int(key, n));
  } else if (key == "samples") {
    c.samples = to_int(key, value);
  } else if (key == "seed") {
    c.seed = to_seed(key, value);
  } else if (key == "horizon") {
    c.horizon = to_double(key, value);
  } else if (key == "delta") {
    c.delta = to_double(key, value);
  } else if (key == "target-file") {
    c.target_file = value;
  } else if (key == "out") {
    c.out = value;
  } else if (key == "format") {
    c.format = parse_format(value);
  } else if (key == "workers") {
    c.workers = to_small_int(key, value);
  } else if (key == "bootstrap") {
    c.bootstrap = to_small_int(key, value);
  } else if (key == "ci-level") {
    c.ci_level = to_double(key, value);
  } else if (key == "min-fit-steps") {
    c.min_fit_steps = to_double(key, value);
  } else if (key == "p0-seed" || key == "target-seed") {
    c.target_seed = to_seed(key, value);
  } else if (key == "sites") {
    c.sites = to_small_int(key, value);
  } else if (key == "dims") {
    c.dims = to_small_int(key, value);
  } else if (key == "vocab") {
    c.vocab = to_small_int(key, value);
  } else {
    fail(ErrorKind::config, "unknown setting '" + key + "'");
  }
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config file '" + path.string() + "'");
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::config,
           path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

int default_workers() {
  if (const char* env = std::getenv("DDIFF_WORKERS"); env && *env) {
    const int n = to_small_int("DDIFF_WORKERS", env);
    if (n < 1) fail(ErrorKind::config, "DDIFF_WORKERS must be >= 1");
    return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace ddiff
