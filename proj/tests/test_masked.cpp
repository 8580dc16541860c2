#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "ddiff/error.hpp"
#include "ddiff/masked.hpp"
#include "ddiff/matrix_exp.hpp"
#include "stats.hpp"

using namespace ddiff;

namespace {

std::shared_ptr<const TargetTable> shared(TargetTable t) {
  return std::make_shared<const TargetTable>(std::move(t));
}

// p(x) proportional to 1 + flat index.
TargetTable ramp_table(int dims, int vocab) {
  const auto n = static_cast<Eigen::Index>(std::pow(vocab, dims));
  Vector<double> p(n);
  for (Eigen::Index i = 0; i < n; ++i) p(i) = 1.0 + double(i);
  return TargetTable(dims, vocab, p / p.sum());
}

// Direct nested-loop conditional P(x_pos = v | unmasked part of seq).
std::vector<double> brute_conditional(const TargetTable& t, const TokenSequence& seq, int pos) {
  std::vector<double> out(t.vocab(), 0.0);
  double mass = 0.0;
  for (std::int64_t i = 0; i < t.entries(); ++i) {
    const TokenSequence x = t.sequence(i);
    bool match = true;
    for (int l = 0; l < t.dims(); ++l)
      if (seq(l) != t.vocab() && seq(l) != x(l)) match = false;
    if (!match) continue;
    mass += t.probs()(i);
    out[x(pos)] += t.probs()(i);
  }
  for (auto& v : out) v /= mass;
  return out;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("log-linear schedule values") {
  const NoiseSchedule sched{1e-3};
  CHECK(schedule_sigma(sched, 0.0) == doctest::Approx(1.0 - 1e-3));
  CHECK(schedule_sigma(sched, 1.0) == doctest::Approx(999.0));
  CHECK(schedule_sigma(sched, 0.37) == doctest::Approx(1.5847835398258166).epsilon(1e-14));
  CHECK(schedule_sigma_bar(sched, 0.0) == 0.0);
  CHECK(schedule_sigma_bar(sched, 1.0) == doctest::Approx(6.9077552789821371).epsilon(1e-14));
  CHECK_THROWS_AS(schedule_sigma(sched, -0.1), Error);
  CHECK_THROWS_AS(schedule_sigma_bar(sched, 1.01), Error);
  CHECK_THROWS_AS(schedule_sigma(NoiseSchedule{0.0}, 0.5), Error);
}

TEST_CASE("sigma_bar derivative equals sigma") {
  const NoiseSchedule sched{1e-3};
  const double h = 1e-5;
  for (double t : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
    const double fd = (schedule_sigma_bar(sched, t + h) - schedule_sigma_bar(sched, t - h)) / (2 * h);
    CHECK(std::abs(fd - schedule_sigma(sched, t)) < 1e-6 * std::max(1.0, schedule_sigma(sched, t)));
  }
}

TEST_CASE("masked score prefactor") {
  const NoiseSchedule sched{1e-3};
  // sigma_bar = log 2 at t = 0.5 / (1 - eps).
  CHECK(masked_score_prefactor(sched, 0.5 / (1.0 - 1e-3)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(masked_score_prefactor(sched, 1.0) == doctest::Approx(0.001001001001001001).epsilon(1e-12));
  CHECK_THROWS_AS(masked_score_prefactor(sched, 0.0), Error);
}

TEST_CASE("forward masking") {
  const NoiseSchedule sched{1e-3};
  TokenSequence x0(3);
  x0 << 0, 1, 2;
  RandomStream rng(3);
  CHECK(forward_mask_sample(x0, sched, 0.0, 4, rng) == x0);

  const double t = 0.4;
  const int trials = 100000;
  int masked = 0;
  for (int i = 0; i < trials; ++i) {
    const auto x = forward_mask_sample(x0, sched, t, 4, rng);
    for (int l = 0; l < 3; ++l) masked += is_mask(x, l, 4);
  }
  const double p = 1.0 - std::exp(-schedule_sigma_bar(sched, t));
  const double n = 3.0 * trials;
  CHECK(std::abs(masked / n - p) < 3.0 * std::sqrt(p * (1 - p) / n));

  TokenSequence bad = x0;
  bad(1) = 4;
  CHECK_THROWS_AS(forward_mask_sample(bad, sched, t, 4, rng), Error);
}

TEST_CASE("conditionals of simple targets") {
  const auto n = 16;
  const ConditionalOracle uniform(shared(TargetTable(2, 4, Vector<double>::Constant(n, 1.0 / n))));
  TokenSequence seq(2);
  seq << 4, 1;
  const auto c = uniform.conditional_probs(seq);
  for (int v = 0; v < 4; ++v) CHECK(c(0, v) == doctest::Approx(0.25));
  CHECK(c(1, 1) == 1.0);
  CHECK(c.row(1).sum() == 1.0);

  // Point mass at (1, 2); position 1 masked, position 0 observed as 1.
  Vector<double> pm = Vector<double>::Zero(n);
  pm(1 * 4 + 2) = 1.0;
  const ConditionalOracle point(shared(TargetTable(2, 4, pm)));
  seq << 1, 4;
  const auto cp = point.conditional_probs(seq);
  CHECK(cp(1, 2) == 1.0);
  CHECK(cp.row(1).sum() == 1.0);

  // Observed token 0 at position 0 has zero mass.
  seq << 0, 4;
  try {
    point.conditional_probs(seq);
    FAIL("expected unreachable-context error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::singular);
  }
}

TEST_CASE("conditionals match brute-force enumeration") {
  const auto table = TargetTable::random(3, 4, 21);
  const ConditionalOracle oracle(shared(table));
  const JumpSpace contexts(StateSpaceSpec{3, 5, Topology::bounded});
  for (std::int64_t c = 0; c < contexts.spec().cardinality(); ++c) {
    const TokenSequence seq = contexts.unflatten(c);
    const auto got = oracle.conditional_probs(seq);
    for (int l = 0; l < 3; ++l) {
      if (seq(l) != 4) continue;
      const auto ref = brute_conditional(table, seq, l);
      for (int v = 0; v < 4; ++v) CHECK(std::abs(got(l, v) - ref[v]) < 1e-14);
    }
  }
}

TEST_CASE("on-the-fly enumeration agrees with brute force") {
  // 7^6 * 6 * 6 contexts exceed the tabulation budget.
  const auto table = TargetTable::random(6, 6, 4);
  const ConditionalOracle oracle(shared(table));
  RandomStream rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    TokenSequence seq(6);
    for (int l = 0; l < 6; ++l) seq(l) = rng.uniform() < 0.5 ? 6 : int(rng.uniform() * 6);
    for (int l = 0; l < 6; ++l) {
      if (seq(l) != 6) continue;
      const auto ref = brute_conditional(table, seq, l);
      std::vector<double> got(6);
      oracle.conditional_row(seq, l, got.data());
      for (int v = 0; v < 6; ++v) CHECK(std::abs(got[v] - ref[v]) < 1e-13);
    }
  }
}

TEST_CASE("masked score scales the conditionals") {
  const ConditionalOracle oracle(shared(TargetTable::random(2, 3, 2)));
  const NoiseSchedule sched{1e-3};
  TokenSequence seq(2);
  seq << 3, 3;
  const auto sc = masked_score(oracle, sched, seq, 0.5 / (1.0 - 1e-3));
  const auto cond = conditional_probs(oracle, seq);
  CHECK((sc - cond).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("masked intensities against an expm reference") {
  // Reference values from tests/oracle/derive.py: d = 2, S = 2, p ~ 1 + index,
  // full-generator exponential at t = 0.6 (reverse time 0.4).
  const MaskedModel model(shared(ramp_table(2, 2)), NoiseSchedule{1e-3});
  const auto& space = model.jumps();
  State y(2);
  y << 2, 1;
  auto mu = model(0.4, y);
  CHECK(mu(space.index_of_pair(0, 0)) == doctest::Approx(0.55555555555555747).epsilon(1e-12));
  CHECK(mu(space.index_of_pair(0, 1)) == doctest::Approx(1.1111111111111149).epsilon(1e-12));
  CHECK(mu(space.index_of_pair(1, 0)) == 0.0);
  CHECK(mu(space.index_of_pair(1, 1)) == 0.0);
  y << 2, 2;
  mu = model(0.4, y);
  CHECK(mu(space.index_of_pair(0, 0)) == doctest::Approx(0.49999999999999917).epsilon(1e-12));
  CHECK(mu(space.index_of_pair(0, 1)) == doctest::Approx(1.166666666666665).epsilon(1e-12));
  CHECK(mu(space.index_of_pair(1, 0)) == doctest::Approx(0.66666666666666563).epsilon(1e-12));
  CHECK(mu(space.index_of_pair(1, 1)) == doctest::Approx(0.99999999999999833).epsilon(1e-12));
}

TEST_CASE("masked model equals the generic reverse intensity on the full chain") {
  const int d = 2, vocab = 3;
  const auto table = shared(TargetTable::random(d, vocab, 5));
  const MaskedModel model(table, NoiseSchedule{1e-3});
  const StateSpaceSpec spec{d, vocab + 1, Topology::bounded};
  const JumpSpace space(spec);
  const auto n = spec.cardinality();

  // Unit forward generator: each token -> MASK at rate 1; the schedule is a
  // time change, so p_t = exp(sigma_bar(t) G) p_0.
  Matrix<double> off = Matrix<double>::Zero(n, n);
  Vector<double> p0 = Vector<double>::Zero(n);
  for (std::int64_t x = 0; x < n; ++x) {
    const State s = space.unflatten(x);
    bool full = true;
    for (int l = 0; l < d; ++l) {
      if (s(l) == vocab) {
        full = false;
        continue;
      }
      State m = s;
      m(l) = vocab;
      off(space.flat_index(m), x) = 1.0;
    }
    if (full) p0(x) = table->probs()(table->index(s));
  }
  const auto unit = RateMatrix<double>::from_off_diagonal(off);
  const NoiseSchedule sched{1e-3};
  for (double t : {0.05, 0.3, 0.8, 1.0}) {
    const ProbabilityVector<double> start(p0);
    const auto pt = forward_marginal_general(start, unit, schedule_sigma_bar(sched, t));
    const RateMatrix<double> qt(unit.entries() * schedule_sigma(sched, t), 1e-9);
    for (std::int64_t x = 0; x < n; ++x) {
      if (pt(x) <= 1e-300) continue;
      const State y = space.unflatten(x);
      const auto ref = backward_intensity(spec, qt, score(pt, x), y);
      const auto got = model(1.0 - t, y);
      CHECK((ref.rates() - got.rates()).cwiseAbs().maxCoeff() <
            1e-8 * std::max(1.0, ref.rates().cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("masked model start, bound and finalize") {
  const auto table = shared(TargetTable::random(3, 4, 9));
  const MaskedModel model(table, NoiseSchedule{1e-3});
  RandomStream rng(1);
  const State y0 = model.initial_state(rng);
  for (int l = 0; l < 3; ++l) CHECK(y0(l) == 4);
  CHECK(model.horizon() == 1.0);

  for (double s : {0.0, 0.5, 0.9, 0.999}) {
    const double bound = model.intensity_bound(s, std::min(s + 0.05, 0.999));
    CHECK(total_intensity(model(s, y0)) <= bound);
  }
  CHECK_THROWS_AS(model(1.0, y0), Error);

  // Filling an all-mask sequence is an exact draw from the target.
  const int trials = 200000;
  std::vector<double> observed(64, 0.0), expected(64);
  const RandomStream root(77);
  for (int i = 0; i < trials; ++i) {
    RandomStream r = root.split(i);
    State y = y0;
    model.finalize(y, r);
    observed[model.sample_index(y)] += 1.0;
  }
  for (int i = 0; i < 64; ++i) expected[i] = trials * table->probs()(i);
  CHECK(test_stats::chi_square(observed, expected).p_value > 1e-3);
}

TEST_CASE("target table files") {
  const auto table = TargetTable::random(2, 3, 4);
  const auto path = temp_file("ddiff_table_roundtrip.txt");
  table.save(path);
  const auto back = TargetTable::load(path);
  CHECK(back.dims() == 2);
  CHECK(back.vocab() == 3);
  CHECK((back.probs() - table.probs()).cwiseAbs().maxCoeff() < 1e-16);

  const auto bad = temp_file("ddiff_table_bad.txt");
  {
    std::ofstream out(bad);
    out << "dims 1 vocab 3\n0 0.5\n1 0.2\n";  // sums to 0.7
  }
  CHECK_THROWS_AS(TargetTable::load(bad), Error);
  {
    std::ofstream out(bad);
    out << "# sparse table\ndims 1 vocab 3\n2 1.0\n";
  }
  const auto sparse = TargetTable::load(bad);
  CHECK(sparse.probs()(2) == 1.0);
  CHECK(sparse.probs()(0) == 0.0);
  {
    std::ofstream out(bad);
    out << "dims 1 vocab 3\n7 1.0\n";
  }
  CHECK_THROWS_AS(TargetTable::load(bad), Error);
  try {
    TargetTable::load(temp_file("ddiff_no_such_table.txt"));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::io);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(bad);
}
