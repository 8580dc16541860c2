// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   acceptance --cli <path to ddiff>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ddiff/experiment.hpp"
#include "ddiff/grid.hpp"
#include "ddiff/oracle.hpp"
#include "ddiff/solvers.hpp"
#include "stats.hpp"

using namespace ddiff;

namespace {

// Pinned tolerances.
constexpr double kTrapOrderLo = 1.6, kTrapOrderHi = 2.4;
constexpr double kTauOrderLo = 0.7, kTauOrderHi = 1.3;
constexpr double kMinRSquared = 0.95;
constexpr double kAsymptoticMinSteps = 16.0;  // start of the fit window for criteria 1 and 2
constexpr int kOrderingMinSteps = 16;
constexpr double kExactFloorFactor = 5.0;
constexpr int kExactSeeds = 5;
constexpr double kPositivityMin = 0.90;
constexpr int kPositivityMinSteps = 32;
constexpr double kPositivitySlack = 1e-4;  // Monte Carlo noise allowance between neighbouring N
constexpr double kChiSquarePMin = 1e-3;
constexpr int kChiSquareDraws = 100'000;
constexpr double kMaskedFloorFactor = 3.0;
constexpr int kMaskedFinalSteps = 512;
constexpr int kMaskedCiSteps = 32;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (ok ? "" : "[x] ") << what << "; ";
  }
};

std::string fmt(double v, const char* spec = "%.4g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const ResultRow* find_row(const std::vector<ResultRow>& rows, const std::string& method, int n) {
  for (const auto& r : rows)
    if (r.method == method && r.steps == n) return &r;
  return nullptr;
}

bool disjoint(const ResultRow& a, const ResultRow& b) { return a.ci_hi < b.ci_lo || b.ci_hi < a.ci_lo; }

void report(int id, const Verdict& v, bool& all) {
  all = all && v.pass;
  std::string d = v.detail.str();
  if (d.size() >= 2) d.resize(d.size() - 2);
  std::cout << "criterion " << id << ": " << (v.pass ? "PASS" : "FAIL") << "  " << d << std::endl;
}

// Shared toy run: theta 1/2, M = 1e6, N = 4..128, all three methods.
ExperimentResult toy_run() {
  ExperimentConfig c = toy_converge_defaults();
  c.methods = {Method::tau_leaping, Method::theta_rk2, Method::theta_trapezoidal};
  c.thetas = {0.5};
  c.samples = 1'000'000;
  c.steps = {4, 8, 16, 32, 64, 128};
  return cmd_toy_converge(c);
}

Verdict criterion1(const ExperimentResult& r) {
  Verdict v;
  const auto fit = fit_rows(r.rows, "theta-trapezoidal", 0.5, r.noise_floor, kAsymptoticMinSteps);
  v.check(fit.has_value(), "trapezoidal fit window has >= 2 points");
  if (!fit) return v;
  const double order = fit->fit.order();
  v.check(order >= kTrapOrderLo && order <= kTrapOrderHi,
          "trapezoidal order " + fmt(order) + " in [1.6, 2.4]");
  v.check(fit->fit.r_squared >= kMinRSquared, "r2 " + fmt(fit->fit.r_squared) + " >= 0.95");
  v.detail << "window N=" << fit->window.front() << ".." << fit->window.back();
  v.detail << "; ";
  return v;
}

Verdict criterion2(const ExperimentResult& r) {
  Verdict v;
  const auto fit = fit_rows(r.rows, "tau-leaping", std::nullopt, r.noise_floor, kAsymptoticMinSteps);
  v.check(fit.has_value(), "tau-leaping fit window has >= 2 points");
  if (fit) {
    const double order = fit->fit.order();
    v.check(order >= kTauOrderLo && order <= kTauOrderHi,
            "tau-leaping order " + fmt(order) + " in [0.7, 1.3]");
  }
  for (const auto& t : r.rows) {
    if (t.method != "theta-trapezoidal" || t.steps < kOrderingMinSteps) continue;
    const auto* tau = find_row(r.rows, "tau-leaping", t.steps);
    v.check(tau && t.kl < tau->kl, "N=" + std::to_string(t.steps) + " trap " + fmt(t.kl) +
                                       " < tau " + fmt(tau ? tau->kl : 0.0));
  }
  return v;
}

Verdict criterion3(const ExperimentResult& r) {
  Verdict v;
  int largest = 0;
  for (const auto& t : r.rows) {
    if (t.method != "theta-trapezoidal") continue;
    largest = std::max(largest, t.steps);
    if (t.steps < kOrderingMinSteps) continue;
    const auto* rk = find_row(r.rows, "theta-rk2", t.steps);
    v.check(rk && t.kl <= rk->kl, "N=" + std::to_string(t.steps) + " trap " + fmt(t.kl) +
                                      " <= rk2 " + fmt(rk ? rk->kl : 0.0));
  }
  const auto trap_fit = fit_rows(r.rows, "theta-trapezoidal", 0.5, r.noise_floor, std::nullopt);
  const auto rk_fit = fit_rows(r.rows, "theta-rk2", 0.5, r.noise_floor, std::nullopt);
  v.check(trap_fit && rk_fit && rk_fit->fit.order() < trap_fit->fit.order(),
          "full-sweep order rk2 " + fmt(rk_fit ? rk_fit->fit.order() : 0.0) + " < trap " +
              fmt(trap_fit ? trap_fit->fit.order() : 0.0));
  const auto* t = find_row(r.rows, "theta-trapezoidal", largest);
  const auto* rk = find_row(r.rows, "theta-rk2", largest);
  v.check(t && rk && t->ci_hi < rk->ci_lo,
          "N=" + std::to_string(largest) + " CIs trap [" + fmt(t ? t->ci_lo : 0.0) + ", " +
              fmt(t ? t->ci_hi : 0.0) + "] below rk2 [" + fmt(rk ? rk->ci_lo : 0.0) + ", " +
              fmt(rk ? rk->ci_hi : 0.0) + "]");
  return v;
}

Verdict criterion4() {
  Verdict v;
  for (std::uint64_t seed = 1; seed <= kExactSeeds; ++seed) {
    ExperimentConfig c = exact_check_defaults();
    c.samples = 1'000'000;
    c.seed = seed;
    const auto r = cmd_exact_check(c);
    const double limit = kExactFloorFactor * r.noise_floor;
    v.check(r.rows.size() == 1 && r.rows[0].kl < limit,
            "seed " + std::to_string(seed) + " KL " + fmt(r.rows[0].kl) + " < " + fmt(limit));
  }
  return v;
}

Verdict criterion5(const ExperimentResult& r) {
  Verdict v;
  for (const char* m : {"theta-rk2", "theta-trapezoidal"}) {
    std::optional<double> previous;
    std::string trail;
    bool monotone = true, above = true;
    for (const auto& row : r.rows) {
      if (row.method != m) continue;
      if (previous && row.positivity_frac + kPositivitySlack < *previous) monotone = false;
      if (row.steps >= kPositivityMinSteps && !(row.positivity_frac > kPositivityMin)) above = false;
      trail += (trail.empty() ? "" : " ") + fmt(row.positivity_frac, "%.5f");
      previous = row.positivity_frac;
    }
    v.check(above, std::string(m) + " positivity > 0.90 for N >= 32");
    v.check(monotone, std::string(m) + " non-decreasing (" + trail + ")");
  }
  return v;
}

Verdict criterion6() {
  Verdict v;
  const StateSpaceSpec ring{1, 64, Topology::periodic};
  const double rate = 0.4;
  const int k = 3;
  const FunctionOracle oracle(
      ring,
      [rate](double, const State&, Intensity& out) {
        for (int nu = 1; nu <= k; ++nu) out.rates()(nu - 1) = rate;
      },
      rate * k);
  const auto grid = make_time_grid(1.0, 0.0, 2, 0.5);
  const double mean = rate * k * grid.step(0);
  const RandomStream root(2024);
  std::vector<std::int64_t> counts(kChiSquareDraws);
  StepWorkspace ws;
  for (int i = 0; i < kChiSquareDraws; ++i) {
    RandomStream rng = root.split(static_cast<std::uint64_t>(i));
    counts[i] = theta_trapezoidal_step(scalar_state(0), 0, grid, oracle,
                                       ClampPolicy::error_on_negative, rng, ws)
                    .telemetry.drawn_jumps;
  }
  const auto chi = test_stats::poisson_chi_square(counts, mean);
  v.check(chi.p_value > kChiSquarePMin, "Poisson(" + fmt(mean) + ") chi2 " + fmt(chi.statistic) +
                                            " dof " + std::to_string(chi.dof) + " p " +
                                            fmt(chi.p_value) + " > 0.001");
  return v;
}

Verdict criterion7() {
  Verdict v;
  ExperimentConfig c = masked_converge_defaults();
  c.dims = 3;
  c.vocab = 4;
  c.samples = 200'000;
  c.methods = {Method::tau_leaping, Method::theta_trapezoidal};
  c.steps = {16, 32, 64, kMaskedFinalSteps};
  const auto r = cmd_masked_converge(c);
  v.check(r.support == 64, "support " + std::to_string(r.support));
  const auto* fin = find_row(r.rows, "theta-trapezoidal", kMaskedFinalSteps);
  const double limit = kMaskedFloorFactor * r.noise_floor;
  v.check(fin && fin->kl < limit, "trap N=512 KL " + fmt(fin ? fin->kl : 0.0) + " < " + fmt(limit));
  for (int n : {16, 32, 64}) {
    const auto* t = find_row(r.rows, "theta-trapezoidal", n);
    const auto* tau = find_row(r.rows, "tau-leaping", n);
    v.check(t && tau && t->kl < tau->kl, "N=" + std::to_string(n) + " trap " +
                                             fmt(t ? t->kl : 0.0) + " < tau " +
                                             fmt(tau ? tau->kl : 0.0));
    if (n == kMaskedCiSteps)
      v.check(t && tau && disjoint(*t, *tau), "N=32 CIs do not overlap");
  }
  return v;
}

std::string strip_wall_ms(const std::string& csv) {
  // wall_ms is column 10 of 11.
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t p; (p = line.find(',', start)) != std::string::npos; start = p + 1)
      f.push_back(line.substr(start, p - start));
    f.push_back(line.substr(start));
    if (f.size() == 11) f[9].clear();
    for (std::size_t i = 0; i < f.size(); ++i) out += (i ? "," : "") + f[i];
    out += '\n';
  }
  return out;
}

std::optional<std::string> run_cli(const std::string& cli, const std::string& args,
                                   const std::filesystem::path& out) {
  const std::string cmd = cli + " " + args + " -q --out " + out.string() + " >/dev/null 2>&1";
  if (std::system(cmd.c_str()) != 0) return std::nullopt;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  std::filesystem::remove(out);
  return ss.str();
}

Verdict criterion8(const std::string& cli) {
  Verdict v;
  if (cli.empty()) {
    v.check(false, "no --cli path given");
    return v;
  }
  const auto tmp = std::filesystem::temp_directory_path();
  const std::vector<std::string> runs = {
      "toy-converge --samples 20000 --bootstrap 100 --steps 4,16,64 --seed 5",
      "masked-converge --samples 20000 --bootstrap 100 --steps 16,64 --seed 5",
      "exact-check --samples 20000 --bootstrap 100 --seed 5",
  };
  for (const auto& args : runs) {
    const auto a = run_cli(cli, args + " --workers 1", tmp / "ddiff_accept_w1.csv");
    const auto b = run_cli(cli, args + " --workers 4", tmp / "ddiff_accept_w4.csv");
    const std::string name = args.substr(0, args.find(' '));
    v.check(a && b && !a->empty() && strip_wall_ms(*a) == strip_wall_ms(*b),
            name + " identical at --workers 1 and 4");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli;
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

  bool all = true;
  try {
    const auto toy = toy_run();
    report(1, criterion1(toy), all);
    report(2, criterion2(toy), all);
    report(3, criterion3(toy), all);
    report(4, criterion4(), all);
    report(5, criterion5(toy), all);
    report(6, criterion6(), all);
    report(7, criterion7(), all);
    report(8, criterion8(cli), all);
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 2;
  }
  return all ? 0 : 1;
}
