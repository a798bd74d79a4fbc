#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fd_check.hpp"
#include "sit/ardnem.hpp"

using namespace sit;

namespace {

ArdnemHyper tiny_hyper() {
  ArdnemHyper h;
  h.hidden = 6;
  h.embed = 4;
  h.members = 3;
  h.epochs = 10;
  h.lr = 1e-3;
  h.log_interval = 5;
  return h;
}

JointDataset random_dataset(const EnvSpec& spec, int episodes, std::uint64_t seed) {
  DatasetComposition comp;
  comp.mixture = {{1.0, std::vector<SkillLevel>(static_cast<size_t>(spec.n_agents), SkillLevel::kRandom)}};
  comp.episodes = episodes;
  return generate_dataset(spec, comp, seed);
}

}  // namespace

TEST_CASE("hyperparameter validation rejects out-of-range settings") {
  ArdnemHyper h;
  h.validate();
  h.lr = 0.0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = ArdnemHyper{};
  h.members = 0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = ArdnemHyper{};
  h.holdout_fraction = 0.6;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h = ArdnemHyper{};
  h.embed = 0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
}

TEST_CASE("attention weights are a positive distribution over agents") {
  const EnvSpec spec = EnvSpec::spread_grid(3, 6, 5);
  Rng rng(21);
  const DecompositionMember member = DecompositionMember::make(spec, tiny_hyper(), rng);
  for (int k = 0; k < 200; ++k) {
    Vec state;
    for (int d = 0; d < spec.state_dim; ++d) state.push_back(rng.uniform());
    std::vector<Vec> obs;
    std::vector<int> actions;
    for (int i = 0; i < spec.n_agents; ++i) {
      Vec o;
      for (int d = 0; d < spec.obs_dim; ++d) o.push_back(rng.uniform() * 2 - 1);
      obs.push_back(std::move(o));
      actions.push_back(rng.uniform_int(spec.n_actions));
    }
    const Vec lambda = member.attention_weights(spec, state, obs, actions);
    REQUIRE(lambda.size() == 3);
    double sum = 0.0;
    for (double l : lambda) {
      CHECK(l > 0.0);
      sum += l;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(member.attention_weights(spec, Vec(12, 0.0), {}, {}), std::invalid_argument);
}

TEST_CASE("predicted total is the attention-weighted sum of per-agent rewards") {
  const EnvSpec spec = EnvSpec::matrix_game(3);
  Rng rng(22);
  ArdnemHyper hyper = tiny_hyper();
  const DecompositionMember member = DecompositionMember::make(spec, hyper, rng);
  const ResetResult rr = env_reset(spec, 0);
  const std::vector<int> actions = {2, 0, 1};

  const Vec lambda = member.attention_weights(spec, rr.state.state, rr.obs, actions);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i)
    expected += lambda[static_cast<size_t>(i)] *
                member.agent_reward(spec, rr.obs[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]);
  CHECK(member.predict_total(spec, rr.state.state, rr.obs, actions) ==
        doctest::Approx(expected).epsilon(1e-12));

  // With attention disabled every weight is fixed to one.
  hyper.use_attention = false;
  Rng rng2(22);
  const DecompositionMember plain = DecompositionMember::make(spec, hyper, rng2);
  double unweighted = 0.0;
  for (int i = 0; i < 3; ++i)
    unweighted += plain.agent_reward(spec, rr.obs[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]);
  CHECK(plain.predict_total(spec, rr.state.state, rr.obs, actions) ==
        doctest::Approx(unweighted).epsilon(1e-12));
}

TEST_CASE("ensemble decomposition reports the member mean and population spread") {
  const EnvSpec spec = EnvSpec::matrix_game(2);
  EnsembleRewardModel model;
  model.spec = spec;
  model.hyper = tiny_hyper();
  Rng rng(23);
  for (int m = 0; m < 3; ++m) model.members.push_back(DecompositionMember::make(spec, model.hyper, rng));

  const ResetResult rr = env_reset(spec, 0);
  const std::vector<int> actions = {1, 2};
  Vec r_hat, u_hat;
  model.decompose_step(rr.state.state, rr.obs, actions, &r_hat, &u_hat);
  REQUIRE(r_hat.size() == 2);
  REQUIRE(u_hat.size() == 2);

  for (int i = 0; i < 2; ++i) {
    Vec weighted;
    for (const DecompositionMember& m : model.members) {
      const Vec lambda = m.attention_weights(spec, rr.state.state, rr.obs, actions);
      weighted.push_back(lambda[static_cast<size_t>(i)] *
                         m.agent_reward(spec, rr.obs[static_cast<size_t>(i)], actions[static_cast<size_t>(i)]));
    }
    double mean = (weighted[0] + weighted[1] + weighted[2]) / 3.0;
    double var = 0.0;
    for (double w : weighted) var += (w - mean) * (w - mean);
    CHECK(r_hat[static_cast<size_t>(i)] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(u_hat[static_cast<size_t>(i)] == doctest::Approx(std::sqrt(var / 3.0)).epsilon(1e-12));
  }

  // The ensemble mean of totals matches the member average.
  double total = 0.0;
  for (const DecompositionMember& m : model.members)
    total += m.predict_total(spec, rr.state.state, rr.obs, actions);
  CHECK(model.predict_total_mean(rr.state.state, rr.obs, actions) ==
        doctest::Approx(total / 3.0).epsilon(1e-12));

  // A single-member ensemble has zero spread.
  EnsembleRewardModel solo;
  solo.spec = spec;
  solo.hyper = tiny_hyper();
  solo.members.push_back(model.members[0]);
  solo.decompose_step(rr.state.state, rr.obs, actions, &r_hat, &u_hat);
  CHECK(u_hat[0] == 0.0);
  CHECK(u_hat[1] == 0.0);
}

TEST_CASE("episode split reserves the trailing fraction for diagnostics") {
  const EnvSpec spec = EnvSpec::matrix_game(2);
  const JointDataset ds = random_dataset(spec, 20, 1);
  const std::vector<StepRef> train = training_refs(ds, 0.25);
  const std::vector<StepRef> hold = holdout_refs(ds, 0.25);
  CHECK(train.size() == 15);  // floor(20 * 0.25) = 5 held out, 1 step per episode
  CHECK(hold.size() == 5);
  for (const StepRef& r : train) CHECK(r.episode < 15);
  for (const StepRef& r : hold) CHECK(r.episode >= 15);

  const JointDataset one = random_dataset(spec, 1, 1);
  CHECK(training_refs(one, 0.4).size() == 1);  // floor rounds the holdout to zero
}

TEST_CASE("analytic gradients of the regression loss match finite differences") {
  const EnvSpec spec = EnvSpec::matrix_game(2);
  const JointDataset ds = random_dataset(spec, 8, 4);
  const std::vector<StepRef> refs = training_refs(ds, 0.0);

  ArdnemHyper hyper = tiny_hyper();
  for (const bool with_attention : {true, false}) {
    hyper.use_attention = with_attention;
    Rng rng(31);
    DecompositionMember member = DecompositionMember::make(spec, hyper, rng);
    std::vector<ParamView> params = member.params();
    const auto report = sit_test::fd_check(
        params, [&] { return member_mse(member, ds, refs); },
        [&] { return member_mse_grad(member, ds, refs); });
    CAPTURE(with_attention);
    CHECK(report.checked > 100);
    CHECK(report.max_rel_err < 1e-4);
  }

  // The reverse-mode value agrees with the plain forward evaluation.
  Rng rng(32);
  DecompositionMember member = DecompositionMember::make(spec, tiny_hyper(), rng);
  std::vector<ParamView> params = member.params();
  zero_grads(params);
  CHECK(member_mse_grad(member, ds, refs) ==
        doctest::Approx(member_mse(member, ds, refs)).epsilon(1e-12));
}

TEST_CASE("training fits the team reward and logs a decreasing loss curve") {
  const EnvSpec spec = EnvSpec::matrix_game(2);
  const JointDataset ds = random_dataset(spec, 60, 7);

  ArdnemHyper hyper;
  hyper.hidden = 16;
  hyper.embed = 8;
  hyper.members = 2;
  hyper.epochs = 600;
  hyper.lr = 1e-3;
  hyper.log_interval = 100;
  hyper.holdout_fraction = 0.1;

  const EnsembleRewardModel model = train_ardnem(ds, hyper, 5);
  REQUIRE(model.members.size() == 2);
  REQUIRE(model.logs.size() == 2);

  const std::vector<StepRef> train = training_refs(ds, hyper.holdout_fraction);
  for (int m = 0; m < 2; ++m) {
    // Fresh untrained member from the same initialization stream.
    Rng init(stream_seed(5, "ardnem/member" + std::to_string(m) + "/init"));
    const DecompositionMember fresh = DecompositionMember::make(spec, hyper, init);
    const double before = member_mse(fresh, ds, train);
    const double after = member_mse(model.members[static_cast<size_t>(m)], ds, train);
    CHECK(after < 0.5 * before);

    const auto& log = model.logs[static_cast<size_t>(m)];
    REQUIRE(log.size() == 7);  // epochs 0,100,...,500 plus the closing point
    CHECK(log.front().epoch == 0);
    CHECK(log.back().epoch == 600);
    CHECK(log.back().batch_loss < 0.5 * log.front().batch_loss);
    REQUIRE(log.front().probe_mean_weighted.size() == 2);
  }

  // Holdout error lands in the same regime as the training error.
  const std::vector<StepRef> hold = holdout_refs(ds, hyper.holdout_fraction);
  const double hold_mse = member_mse(model.members[0], ds, hold);
  CHECK(hold_mse < member_mse(model.members[0], ds, train) * 5 + 0.5);
}

TEST_CASE("training is deterministic in the seed and sensitive to it") {
  const EnvSpec spec = EnvSpec::matrix_game(2);
  const JointDataset ds = random_dataset(spec, 20, 2);
  ArdnemHyper hyper = tiny_hyper();
  hyper.epochs = 40;
  hyper.members = 2;

  const EnsembleRewardModel a = train_ardnem(ds, hyper, 9);
  const EnsembleRewardModel b = train_ardnem(ds, hyper, 9);
  const EnsembleRewardModel c = train_ardnem(ds, hyper, 10);

  const JointStep& st = ds.at(0, 0);
  CHECK(a.predict_total_mean(st.state, st.obs, st.actions) ==
        b.predict_total_mean(st.state, st.obs, st.actions));
  CHECK(a.predict_total_mean(st.state, st.obs, st.actions) !=
        c.predict_total_mean(st.state, st.obs, st.actions));
}

TEST_CASE("checkpoints restore the ensemble bit for bit") {
  const EnvSpec spec = EnvSpec::spread_grid(2, 6, 4);
  const JointDataset ds = random_dataset(spec, 10, 3);
  ArdnemHyper hyper = tiny_hyper();
  hyper.epochs = 20;
  const EnsembleRewardModel model = train_ardnem(ds, hyper, 1);

  const std::string path = "ardnem_test.ckpt";
  model.save(path);
  const EnsembleRewardModel loaded = EnsembleRewardModel::load(path, spec);
  CHECK(loaded.members.size() == model.members.size());
  CHECK(loaded.hyper.hidden == hyper.hidden);
  CHECK(loaded.hyper.use_attention == hyper.use_attention);

  const JointStep& st = ds.at(2, 1);
  CHECK(loaded.predict_total_mean(st.state, st.obs, st.actions) ==
        model.predict_total_mean(st.state, st.obs, st.actions));
  Vec r1, u1, r2, u2;
  model.decompose_step(st.state, st.obs, st.actions, &r1, &u1);
  loaded.decompose_step(st.state, st.obs, st.actions, &r2, &u2);
  CHECK(r1 == r2);
  CHECK(u1 == u2);

  // A checkpoint trained for one environment will not load for another.
  CHECK_THROWS_AS(EnsembleRewardModel::load(path, EnvSpec::matrix_game(2)), ConfigError);
  CHECK_THROWS_AS(EnsembleRewardModel::load("no_such.ckpt", spec), ConfigError);
  std::remove(path.c_str());
}
