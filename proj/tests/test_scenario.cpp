#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "qsched/scenario.hpp"

using namespace qsched;

namespace {

const std::filesystem::path kScenarios = std::filesystem::path(QSCHED_SOURCE_DIR) / "scenarios";

VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

std::string error_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.what();
  }
  return {};
}

} // namespace

TEST(Fixtures, Noiseless) {
  const Scenario s = load_scenario(kScenarios / "five-queue-noiseless.yaml");
  EXPECT_EQ(s.env.K, 5);
  EXPECT_EQ(s.env.horizon, 200000);
  EXPECT_EQ(s.env.arrival.rates, vec({0.25, 0.2, 0.15, 0.1, 0.05}));
  EXPECT_EQ(s.env.service.rates, vec({0.9, 0.85, 0.8, 0.59, 0.39}));
  EXPECT_EQ(s.env.service.kind, ProcessKind::Bernoulli);
  EXPECT_EQ(s.reps, 5);
  EXPECT_EQ(s.policies.front().name, "maxweight");
}

TEST(Fixtures, Ar1) {
  const Scenario s = load_scenario(kScenarios / "five-queue-ar1.yaml");
  EXPECT_EQ(s.env.service.kind, ProcessKind::Ar1Bernoulli);
  EXPECT_EQ(s.env.service.phi, 0.999);
  EXPECT_EQ(s.env.service.sd, 0.005);
  EXPECT_EQ(s.env.noise_seed, 2024u);
  bool has_gt = false;
  for (const auto& p : s.policies) has_gt = has_gt || p.name == "maxweight-gt";
  EXPECT_TRUE(has_gt);
}

TEST(Parse, Minimal) {
  const Scenario s = parse_scenario(R"(name: tiny
environment:
  K: 2
  arrival: {rates: [0.1, 0.2]}
  service: {rates: [0.5, 0.5]}
policies:
  - name: softmw
    delta: 0.5
horizon: 10
)");
  EXPECT_EQ(s.name, "tiny");
  EXPECT_EQ(s.env.horizon, 10);
  EXPECT_EQ(s.reps, 1);
  ASSERT_EQ(s.policies.size(), 1u);
  EXPECT_EQ(s.policies[0].delta, 0.5);
  EXPECT_EQ(s.policies[0].M, 1.0);
}

TEST(Parse, MissingK) {
  const std::string e = error_of(R"(name: x
environment:
  arrival: {rates: [0.1]}
  service: {rates: [0.5]}
policies: [{name: maxweight}]
horizon: 10
)");
  EXPECT_NE(e.find("K"), std::string::npos) << e;
}

TEST(Parse, UnknownKeyReportsLine) {
  const std::string e = error_of(R"(name: x
environment:
  K: 1
  arrival: {rates: [0.1]}
  service: {rates: [0.5]}
  bogus: 3
policies: [{name: maxweight}]
horizon: 10
)");
  EXPECT_NE(e.find("bogus"), std::string::npos) << e;
  EXPECT_NE(e.find("line 6"), std::string::npos) << e;
}

TEST(Parse, UnknownPolicy) {
  const std::string e = error_of(R"(name: x
environment:
  K: 1
  arrival: {rates: [0.1]}
  service: {rates: [0.5]}
policies: [{name: roundrobin}]
horizon: 10
)");
  EXPECT_NE(e.find("roundrobin"), std::string::npos) << e;
}

TEST(Parse, RejectsBadValues) {
  EXPECT_FALSE(error_of("name: x\nenvironment: {K: 2, arrival: {rates: [0.1]}, service: {rates: [0.5, 0.5]}}\n"
                        "policies: [{name: maxweight}]\nhorizon: 10\n")
                   .empty());
  EXPECT_FALSE(error_of("name: x\nenvironment: {K: 1, arrival: {rates: [0.1]}, service: {rates: [0.5]}}\n"
                        "policies: [{name: maxweight}]\nhorizon: -1\n")
                   .empty());
  EXPECT_FALSE(error_of("name: [unterminated\n").empty());
}

TEST(RoundTrip, Fixtures) {
  for (const char* f : {"five-queue-noiseless.yaml", "five-queue-ar1.yaml"}) {
    const Scenario s = load_scenario(kScenarios / f);
    EXPECT_EQ(parse_scenario(write_scenario(s)), s) << f;
  }
}

TEST(RoundTrip, EveryField) {
  Scenario s;
  s.name = "edge: case";
  s.env.K = 2;
  s.env.M = 3.0;
  s.env.horizon = 3;
  s.env.noise_seed = 77;
  s.env.noise_file = "noise.bin";
  s.env.arrival.kind = ProcessKind::Trace;
  s.env.arrival.trace.resize(3, 2);
  s.env.arrival.trace << 0.1, 0.2, 1.0 / 3.0, 0, 2.5, 1e-17;
  s.env.service.kind = ProcessKind::HeavyTailed;
  s.env.service.rates = vec({0.3, 0.7});
  s.env.service.alpha = 2.5;
  PolicyDescriptor a;
  a.name = "softmw-plus";
  a.label = "quote \" and # hash";
  a.M = 3.0;
  a.delta = 0.25;
  a.alpha = 15.0;
  PolicyDescriptor b;
  b.name = "ssmw-plus";
  b.M = 3.0;
  s.policies = {a, b};
  s.reps = 4;
  s.base_seed = 12345678901234ULL;
  s.output_dir = "some dir/x";
  s.stride = 5;
  s.common_random_numbers = true;
  const std::string text = write_scenario(s);
  EXPECT_EQ(parse_scenario(text), s) << text;
}

TEST(Validate, Scenario) {
  Scenario s = load_scenario(kScenarios / "five-queue-noiseless.yaml");
  s.reps = 0;
  EXPECT_THROW(validate(s), ScenarioError);
  s.reps = 1;
  s.policies.clear();
  EXPECT_THROW(validate(s), ScenarioError);
}
