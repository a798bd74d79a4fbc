#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "fd_check.hpp"
#include "sit/checkpoint.hpp"
#include "sit/common.hpp"
#include "sit/mlp.hpp"
#include "sit/optim.hpp"
#include "sit/tape.hpp"

using namespace sit;

// ---------------------------------------------------------------------------
// Random number generator
// ---------------------------------------------------------------------------

TEST_CASE("rng reproduces the reference sequence for a fixed seed") {
  // First outputs of the generator for seed 42, frozen from an independent
  // implementation of the same algorithm.
  Rng a(42);
  CHECK(a.next_u64() == 1546998764402558742ULL);
  CHECK(a.next_u64() == 6990951692964543102ULL);
  CHECK(a.next_u64() == 12544586762248559009ULL);

  Rng b(42);
  CHECK(b.uniform() == 0.08386297105988216);
  CHECK(b.uniform() == 0.3789802506626686);
  CHECK(b.uniform() == 0.6800434110281394);
}

TEST_CASE("rng streams are deterministic and seed-sensitive") {
  Rng a(7), b(7), c(8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t x = a.next_u64();
    all_equal = all_equal && (x == b.next_u64());
    any_diff = any_diff || (x != c.next_u64());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform stays in [0,1) with a sane mean") {
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 10000 == doctest::Approx(0.5).epsilon(0.02));
  Rng r2(4);
  for (int i = 0; i < 100; ++i) {
    const double u = r2.uniform(-2.0, 5.0);
    REQUIRE(u >= -2.0);
    REQUIRE(u < 5.0);
  }
}

TEST_CASE("uniform_int is unbiased across buckets") {
  // Chi-square goodness of fit over 10 buckets; 21.666 is the critical value
  // at the 1% level with 9 degrees of freedom.
  Rng rng(123);
  const int kDraws = 100000, kBuckets = 10;
  std::vector<int> counts(kBuckets, 0);
  for (int i = 0; i < kDraws; ++i) {
    const int v = rng.uniform_int(kBuckets);
    REQUIRE(v >= 0);
    REQUIRE(v < kBuckets);
    counts[static_cast<size_t>(v)] += 1;
  }
  const double expected = static_cast<double>(kDraws) / kBuckets;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  CHECK(chi2 < 21.666);
  CHECK_THROWS_AS(rng.uniform_int(0), std::invalid_argument);
}

TEST_CASE("stream_seed matches frozen reference values and separates names") {
  CHECK(stream_seed(42, "ardnem/member0/init") == 1838904345669112903ULL);
  CHECK(stream_seed(7, "a") == 18268711025061130002ULL);
  CHECK(stream_seed(7, "b") == 171259594798023318ULL);
  // Same name, different master seeds must differ too.
  CHECK(stream_seed(1, "x") != stream_seed(2, "x"));
}

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

TEST_CASE("format_real round-trips doubles exactly") {
  for (double x : {1.0 / 3.0, -1.625e-17, 2.9701, 0.0, 1e300, -7.000000000000001}) {
    CHECK(parse_real(format_real(x), "test") == x);
  }
  CHECK_THROWS_AS(parse_real("abc", "test"), ConfigError);
  CHECK_THROWS_AS(parse_real("1.5x", "test"), ConfigError);
}

TEST_CASE("summary statistics match hand-computed values") {
  const Vec xs = {1.0, 2.0, 3.0, 4.0};
  CHECK(mean_of(xs) == 2.5);
  CHECK(stddev_of(xs) == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
  CHECK(median_of(xs) == 2.5);
  CHECK(median_of({5.0, 1.0, 3.0}) == 3.0);
  CHECK_THROWS_AS(mean_of({}), std::invalid_argument);
  CHECK(all_finite({1.0, -2.0}));
  CHECK_FALSE(all_finite({1.0, std::nan("")}));
}

TEST_CASE("onehot places a single one and validates the index") {
  const Vec v = onehot(2, 4);
  CHECK(v == Vec{0.0, 0.0, 1.0, 0.0});
  CHECK_THROWS_AS(onehot(4, 4), std::invalid_argument);
  CHECK_THROWS_AS(onehot(-1, 4), std::invalid_argument);
}

TEST_CASE("matvec multiplies row-major matrices") {
  Matrix w(2, 3);
  w.data = {1, 2, 3, 4, 5, 6};
  const Vec y = matvec(w, {1, 0, -1}, "test");
  CHECK(y == Vec{-2.0, -2.0});
  CHECK_THROWS(matvec(w, {1, 0}, "test"));
}

// ---------------------------------------------------------------------------
// MLP construction
// ---------------------------------------------------------------------------

TEST_CASE("mlp initialization is bounded, deterministic, and seed-sensitive") {
  const int dims[] = {4, 8, 2};
  Rng r1(11), r2(11), r3(12);
  Mlp a = Mlp::make(dims, r1);
  Mlp b = Mlp::make(dims, r2);
  Mlp c = Mlp::make(dims, r3);
  CHECK(a.in_dim() == 4);
  CHECK(a.out_dim() == 2);
  REQUIRE(a.layers.size() == 2);

  bool any_nonzero = false, identical = true, differs = false;
  for (size_t l = 0; l < a.layers.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(a.layers[l].w.cols));
    for (size_t k = 0; k < a.layers[l].w.data.size(); ++k) {
      const double v = a.layers[l].w.data[k];
      REQUIRE(std::fabs(v) <= bound);
      any_nonzero = any_nonzero || v != 0.0;
      identical = identical && v == b.layers[l].w.data[k];
      differs = differs || v != c.layers[l].w.data[k];
    }
    for (double v : a.layers[l].b) REQUIRE(std::fabs(v) <= bound);
  }
  CHECK(any_nonzero);
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("mlp forward applies affine layers with relu between them") {
  const int dims[] = {2, 2, 1};
  Rng rng(0);
  Mlp net = Mlp::make(dims, rng);
  net.layers[0].w.data = {1.0, 2.0, -1.0, 0.0};
  net.layers[0].b = {0.5, -0.5};
  net.layers[1].w.data = {2.0, 3.0};
  net.layers[1].b = {0.25};
  // x = [2,-1]: W0 x + b0 = [0.5, -2.5]; relu -> [0.5, 0]; out = 2*0.5 + 0.25.
  const Vec y = net.forward({2.0, -1.0});
  REQUIRE(y.size() == 1);
  CHECK(y[0] == doctest::Approx(1.25).epsilon(1e-15));

  std::vector<ParamView> params;
  net.append_params("net", params);
  REQUIRE(params.size() == 4);
  CHECK(params[0].name == "net.w0");
  CHECK(params[3].name == "net.b1");
}

// ---------------------------------------------------------------------------
// Tape: values and gradients
// ---------------------------------------------------------------------------

TEST_CASE("softmax matches the frozen oracle and survives large inputs") {
  const Vec expect = {0.09003057317038046, 0.24472847105479764, 0.6652409557748218};
  const Vec got = stable_softmax({1.0, 2.0, 3.0});
  for (int i = 0; i < 3; ++i) CHECK(got[static_cast<size_t>(i)] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-15));

  // Shift invariance at magnitudes that would overflow a naive exp().
  const Vec shifted = stable_softmax({1001.0, 1002.0, 1003.0});
  for (int i = 0; i < 3; ++i)
    CHECK(shifted[static_cast<size_t>(i)] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-12));

  Tape tape;
  const int s = tape.softmax(tape.leaf({1.0, 2.0, 3.0}));
  for (int i = 0; i < 3; ++i)
    CHECK(tape.value(s)[static_cast<size_t>(i)] == doctest::Approx(expect[static_cast<size_t>(i)]).epsilon(1e-15));
  CHECK_THROWS_AS(stable_softmax({}), std::invalid_argument);
}

TEST_CASE("tape forward values match hand computation") {
  Tape tape;
  const int x = tape.leaf({2.0, -1.0});
  Matrix w(2, 2), gw(2, 2);
  w.data = {1.0, 2.0, -1.0, 0.0};
  Vec b = {0.5, -0.5}, gb(2, 0.0);
  std::vector<ParamView> params = {{"w", &w.data, &gw.data, 2, 2}, {"b", &b, &gb, 2, 1}};
  const int h = tape.affine(tape.param(params[0]), tape.param(params[1]), x);
  CHECK(tape.value(h) == Vec{0.5, -2.5});
  const int r = tape.relu(h);
  CHECK(tape.value(r) == Vec{0.5, 0.0});
  const int lk = tape.leaky_relu(h, 0.2);
  CHECK(tape.value(lk) == Vec{0.5, -0.5});
  const int ids[] = {r, lk};
  const int cat = tape.concat(ids);
  CHECK(tape.value(cat) == Vec{0.5, 0.0, 0.5, -0.5});
  CHECK(tape.scalar(tape.dot(r, lk)) == 0.25);
  CHECK(tape.scalar(tape.pick(cat, 3)) == -0.5);
  CHECK(tape.value(tape.add(r, lk)) == Vec{1.0, -0.5});
  CHECK(tape.value(tape.sub(r, lk)) == Vec{0.0, 0.5});
  CHECK(tape.value(tape.scale(lk, -2.0)) == Vec{-1.0, 1.0});
  CHECK(tape.value(tape.add_const(lk, 1.0)) == Vec{1.5, 0.5});
  CHECK(tape.value(tape.square(lk)) == Vec{0.25, 0.25});
  CHECK(tape.scalar(tape.mean_all(cat)) == 0.125);
  const int vecs[] = {r, lk};
  const int ws = tape.weighted_sum(tape.leaf({2.0, -1.0}), vecs);
  CHECK(tape.value(ws) == Vec{0.5, 0.5});
}

TEST_CASE("tape gradients agree with finite differences across every op") {
  Matrix w(2, 3), gw(2, 3);
  w.data = {0.3, -0.2, 0.5, 0.8, 0.1, -0.4};
  Vec b = {0.05, -0.15}, gb(2, 0.0);
  Vec u = {0.7, -0.3, 0.2}, gu(3, 0.0);
  std::vector<ParamView> params = {
      {"w", &w.data, &gw.data, 2, 3}, {"b", &b, &gb, 2, 1}, {"u", &u, &gu, 3, 1}};
  const Vec x = {0.3, -0.7, 0.9};

  auto build = [&](Tape& tape) {
    const int xn = tape.leaf(x);
    const int wn = tape.param(params[0]);
    const int bn = tape.param(params[1]);
    const int un = tape.param(params[2]);
    const int h = tape.affine(wn, bn, xn);        // 2
    const int mv = tape.matvec(wn, xn);           // 2, reuses w
    const int r = tape.relu(h);                   // 2
    const int neg = tape.sub(h, r);               // 2
    const int lk = tape.leaky_relu(neg, 0.2);     // 2
    const int sm = tape.softmax(tape.add(h, mv));  // 2
    const int ls = tape.log_softmax(h);           // 2
    const int vecs[] = {r, lk};
    const int ws = tape.weighted_sum(sm, vecs);   // 2
    const int d = tape.dot(un, xn);               // 1
    const int p = tape.pick(sm, 1);               // 1
    const int sq = tape.square(ls);               // 2
    const int sc = tape.scale(ws, 1.3);           // 2
    const int ac = tape.add_const(d, 0.5);        // 1
    const int parts[] = {sq, sc, ac, p, lk};
    return tape.mean_all(tape.concat(parts));
  };

  auto loss_value = [&]() {
    Tape tape;
    return tape.scalar(build(tape));
  };
  auto loss_grad = [&]() {
    Tape tape;
    const int loss = build(tape);
    tape.backward(loss);
    return tape.scalar(loss);
  };

  const sit_test::FdReport report = sit_test::fd_check(params, loss_value, loss_grad);
  CHECK(report.checked == 11);
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("gradients accumulate across tapes until cleared") {
  Vec p = {1.5}, g = {0.0};
  std::vector<ParamView> params = {{"p", &p, &g, 1, 1}};
  auto backprop = [&]() {
    Tape tape;
    tape.backward(tape.square(tape.param(params[0])));
  };
  backprop();
  const double once = g[0];
  CHECK(once == doctest::Approx(3.0).epsilon(1e-15));
  backprop();
  CHECK(g[0] == doctest::Approx(2.0 * once).epsilon(1e-15));
  zero_grads(params);
  CHECK(g[0] == 0.0);
}

TEST_CASE("tape rejects invalid backward calls") {
  Tape tape;
  CHECK_THROWS(tape.backward(0));  // empty tape
  const int v = tape.leaf({1.0, 2.0});
  CHECK_THROWS(tape.backward(v));  // non-scalar loss
  tape.reset();
  CHECK(tape.size() == 0);
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

TEST_CASE("rmsprop reproduces the frozen two-step reference") {
  Vec p = {1.0}, g = {1.0};
  std::vector<ParamView> params = {{"p", &p, &g, 1, 1}};
  RmsProp opt(1e-4);
  opt.step(params);
  CHECK(p[0] == 0.9990000001);
  g[0] = 1.0;
  opt.step(params);
  CHECK(p[0] == 0.9982911189452429);
}

TEST_CASE("rmsprop rejects non-finite gradients and changed param lists") {
  Vec p = {1.0}, g = {std::nan("")};
  std::vector<ParamView> params = {{"p", &p, &g, 1, 1}};
  RmsProp opt(1e-3);
  CHECK_THROWS_AS(opt.step(params), DivergenceError);

  g[0] = 0.5;
  RmsProp opt2(1e-3);
  opt2.step(params);
  Vec q = {2.0}, gq = {0.1};
  std::vector<ParamView> grown = {{"p", &p, &g, 1, 1}, {"q", &q, &gq, 1, 1}};
  CHECK_THROWS_AS(opt2.step(grown), std::logic_error);
}

TEST_CASE("gradient clipping rescales to the requested global norm") {
  Vec p = {0.0, 0.0}, g = {3.0, 4.0};
  std::vector<ParamView> params = {{"p", &p, &g, 2, 1}};
  CHECK(global_grad_norm(params) == doctest::Approx(5.0).epsilon(1e-15));
  const double pre = clip_grad_norm(params, 1.0);
  CHECK(pre == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(g[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.8).epsilon(1e-12));
  // Already within the bound: untouched.
  const double pre2 = clip_grad_norm(params, 10.0);
  CHECK(pre2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g[0] == doctest::Approx(0.6).epsilon(1e-12));
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path((std::filesystem::temp_directory_path() / name).string()) {}
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_CASE("checkpoints round-trip parameters exactly") {
  Matrix w(2, 2), gw(2, 2);
  w.data = {1.0 / 3.0, -2.5e-17, 3.0, 4.0};
  Vec b = {2.9701, -0.125}, gb(2, 0.0);
  std::vector<ParamView> params = {{"m.w", &w.data, &gw.data, 2, 2}, {"m.b", &b, &gb, 2, 1}};

  TempFile file("sit_test_ckpt.txt");
  nlohmann::json meta;
  meta["note"] = 7;
  save_checkpoint(file.path, "demo", meta, params);

  const CheckpointData ckpt = load_checkpoint(file.path);
  CHECK(ckpt.kind == "demo");
  CHECK(ckpt.meta.at("note").get<int>() == 7);

  Matrix w2(2, 2), gw2(2, 2);
  Vec b2(2, 0.0), gb2(2, 0.0);
  std::vector<ParamView> fresh = {{"m.w", &w2.data, &gw2.data, 2, 2}, {"m.b", &b2, &gb2, 2, 1}};
  assign_params(ckpt, fresh);
  CHECK(w2.data == w.data);
  CHECK(b2 == b);
}

TEST_CASE("checkpoint loading is strict about names and shapes") {
  Matrix w(2, 2), gw(2, 2);
  w.data = {1, 2, 3, 4};
  std::vector<ParamView> params = {{"m.w", &w.data, &gw.data, 2, 2}};
  TempFile file("sit_test_ckpt_strict.txt");
  save_checkpoint(file.path, "demo", nlohmann::json::object(), params);
  const CheckpointData ckpt = load_checkpoint(file.path);

  // Missing tensor in the file.
  Vec extra = {0.0}, gextra = {0.0};
  std::vector<ParamView> wants_more = {{"m.w", &w.data, &gw.data, 2, 2},
                                       {"m.v", &extra, &gextra, 1, 1}};
  CHECK_THROWS_AS(assign_params(ckpt, wants_more), ConfigError);

  // Tensor in the file that the model does not expect.
  std::vector<ParamView> wants_none = {};
  CHECK_THROWS_AS(assign_params(ckpt, wants_none), ConfigError);

  // Shape mismatch.
  Matrix w3(4, 1), gw3(4, 1);
  std::vector<ParamView> bad_shape = {{"m.w", &w3.data, &gw3.data, 4, 1}};
  CHECK_THROWS_AS(assign_params(ckpt, bad_shape), ConfigError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/sit.ckpt"), ConfigError);
}

TEST_CASE("corrupted checkpoint files fail with the offending location") {
  Matrix w(1, 2), gw(1, 2);
  w.data = {1, 2};
  std::vector<ParamView> params = {{"m.w", &w.data, &gw.data, 1, 2}};
  TempFile file("sit_test_ckpt_corrupt.txt");
  save_checkpoint(file.path, "demo", nlohmann::json::object(), params);

  std::ifstream in(file.path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();
  // Drop the terminator line.
  const size_t end_pos = content.rfind("end");
  REQUIRE(end_pos != std::string::npos);
  std::ofstream out(file.path);
  out << content.substr(0, end_pos);
  out.close();
  CHECK_THROWS_AS(load_checkpoint(file.path), ConfigError);
}
