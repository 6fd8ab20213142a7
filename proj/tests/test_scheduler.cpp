#include "doctest.h"

#include "oracles.hpp"
#include "support.hpp"
#include "upm/scheduler.hpp"

using namespace upm;
using namespace upm::scheduler;

namespace {

DeviceDescriptor dev(const std::string& name, Rational speed = Rational(1), const std::string& model = "kernelset-v1",
                     std::set<std::string> langs = {"kernelset-v1"}) {
  DeviceDescriptor d;
  d.name = name;
  d.device_class = DeviceClass::Multicore;
  d.model_id = model;
  d.languages = std::move(langs);
  d.speed_factor = speed;
  d.transport = transport::InProc{};
  return d;
}

JobSpec job(const std::string& id, Rational cost, const std::string& model = "echo",
            const std::string& lang = "kernelset-v1") {
  return JobSpec{id, model, lang, cost};
}

// Independent recomputation of the makespan.
Rational recompute(const Assignment& a, const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices) {
  std::map<std::string, Rational> load;
  for (const auto& j : jobs) {
    const auto& name = a.at(j.id);
    for (const auto& d : devices)
      if (d.name == name) load[name] = load[name] + j.cost / d.speed_factor;
  }
  Rational best(0);
  for (const auto& [n, l] : load) best = std::max(best, l);
  return best;
}

ErrorCode code_of(const std::function<void()>& fn, std::string* detail = nullptr) {
  try {
    fn();
  } catch (const Error& e) {
    if (detail) *detail = e.detail();
    return e.code();
  }
  FAIL("no error");
  return ErrorCode::BackendFailure;
}

}  // namespace

TEST_CASE("feasibility") {
  CHECK(feasible(job("a", 1), testing::echo_device()));
  CHECK_FALSE(feasible(job("a", 1, "echo", "cuda"), dev("d")));
  CHECK(feasible(job("a", 1, "sortu32"), dev("d")));
  CHECK_FALSE(feasible(job("a", 1, "sortu32"), dev("d", Rational(1), "echo")));
  CHECK_FALSE(feasible(job("a", 1, "coupling-app"), dev("d")));
  CHECK(feasible(job("a", 1, "coupling-app"), dev("d", Rational(1), "coupling-v1")));
}

TEST_CASE("worked examples") {
  const std::vector<JobSpec> jobs = {job("a", 4), job("b", 3), job("c", 2)};
  const std::vector<DeviceDescriptor> two = {dev("x"), dev("y")};
  CHECK(makespan(greedy_assign(jobs, two), jobs, two) == Rational(5));
  CHECK(makespan(optimal_assign(jobs, two), jobs, two) == Rational(5));
  CHECK(greedy_assign(jobs, two) == Assignment{{"a", "x"}, {"b", "y"}, {"c", "y"}});

  const std::vector<JobSpec> one = {job("only", 4)};
  const std::vector<DeviceDescriptor> fast = {dev("f", Rational(2))};
  CHECK(greedy_assign(one, fast) == Assignment{{"only", "f"}});
  CHECK(makespan(greedy_assign(one, fast), one, fast) == Rational(2));
  CHECK(optimal_assign(one, fast) == greedy_assign(one, fast));

  // speeds {1,2}, jobs [6,6]: both on the fast device gives 6, splitting gives 6 too
  const std::vector<JobSpec> sixes = {job("p", 6), job("q", 6)};
  const std::vector<DeviceDescriptor> mixed = {dev("fast", Rational(2)), dev("slow", Rational(1))};
  const auto best = oracle::brute_force(sixes, mixed);
  REQUIRE(best);
  CHECK(best->makespan == Rational(6));
  CHECK(optimal_assign(sixes, mixed) == best->assignment);
  CHECK(optimal_assign(sixes, mixed) == Assignment{{"p", "fast"}, {"q", "fast"}});

  CHECK(makespan({}, {}, {}) == Rational(0));
}

TEST_CASE("errors") {
  const std::vector<DeviceDescriptor> devs = {dev("x")};
  std::string why;
  CHECK(code_of([&] { greedy_assign({job("a", 1, "echo", "cuda")}, devs); }, &why) == ErrorCode::InfeasibleJob);
  CHECK(why == "a");
  CHECK(code_of([&] { optimal_assign({job("a", 1, "echo", "cuda")}, devs); }) == ErrorCode::InfeasibleJob);
  CHECK(code_of([&] { greedy_assign({job("a", 1), job("a", 2)}, devs); }) == ErrorCode::InvalidSpec);
  CHECK(code_of([&] { greedy_assign({job("a", 0)}, devs); }) == ErrorCode::InvalidSpec);

  std::vector<JobSpec> many;
  for (int i = 0; i < 13; ++i) many.push_back(job("j" + std::to_string(i), 1));
  CHECK(code_of([&] { optimal_assign(many, devs); }, &why) == ErrorCode::InvalidSpec);
  CHECK(why == "size");
  many.pop_back();
  CHECK(optimal_assign(many, devs).size() == 12);
  const std::vector<DeviceDescriptor> five = {dev("a"), dev("b"), dev("c"), dev("d"), dev("e")};
  CHECK(code_of([&] { optimal_assign({job("a", 1)}, five); }, &why) == ErrorCode::InvalidSpec);
  CHECK(why == "size");
  CHECK(greedy_assign(many, five).size() == 12);
}

TEST_CASE("optimal matches brute force; greedy bounds") {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 600; ++i) {
    const bool identical = i % 3 == 0;
    const auto in = testing::random_instance(rng, 6, 3, identical);
    const auto best = oracle::brute_force(in.jobs, in.devices);
    REQUIRE(best);
    const auto opt = optimal_assign(in.jobs, in.devices);
    const auto greedy = greedy_assign(in.jobs, in.devices);
    CHECK(opt == best->assignment);
    CHECK(makespan(opt, in.jobs, in.devices) == best->makespan);
    CHECK(recompute(opt, in.jobs, in.devices) == best->makespan);
    const auto g = makespan(greedy, in.jobs, in.devices);
    CHECK(g == recompute(greedy, in.jobs, in.devices));
    CHECK(g >= best->makespan);
    if (identical) CHECK(g <= Rational(2) * best->makespan);
    for (const auto& j : in.jobs) {
      CHECK(greedy.count(j.id) == 1);
      for (const auto& d : in.devices)
        if (d.name == greedy.at(j.id)) CHECK(feasible(j, d));
    }
  }
}

TEST_CASE("scaling costs leaves choices unchanged") {
  std::mt19937_64 rng(91);
  for (int i = 0; i < 300; ++i) {
    auto in = testing::random_instance(rng, 6, 3, i % 2 == 0);
    const auto g = greedy_assign(in.jobs, in.devices);
    const auto o = optimal_assign(in.jobs, in.devices);
    const Rational k(static_cast<std::int64_t>(rng() % 9 + 1), static_cast<std::int64_t>(rng() % 5 + 1));
    for (auto& j : in.jobs) j.cost = j.cost * k;
    CHECK(greedy_assign(in.jobs, in.devices) == g);
    CHECK(optimal_assign(in.jobs, in.devices) == o);
  }
}

TEST_CASE("device order does not matter") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    auto in = testing::random_instance(rng, 6, 3, false);
    const auto g = greedy_assign(in.jobs, in.devices);
    const auto o = optimal_assign(in.jobs, in.devices);
    std::shuffle(in.devices.begin(), in.devices.end(), rng);
    std::shuffle(in.jobs.begin(), in.jobs.end(), rng);
    CHECK(greedy_assign(in.jobs, in.devices) == g);
    CHECK(optimal_assign(in.jobs, in.devices) == o);
  }
}

TEST_CASE("jobs JSON and rendering") {
  const auto jobs = parse_jobs(
      R"([{"id":"j1","model_id":"echo","language":"kernelset-v1","cost":4},
          {"id":"j2","model_id":"sortu32","language":"kernelset-v1","cost":"3/2"},
          {"id":"j3","model_id":"echo","language":"kernelset-v1","cost":0.5}])");
  REQUIRE(jobs.size() == 3);
  CHECK(jobs[1].cost == Rational(3, 2));
  CHECK(jobs[2].cost == Rational(1, 2));
  const std::vector<DeviceDescriptor> devs = {dev("x"), dev("y", Rational(2))};
  const auto a = greedy_assign(jobs, devs);
  CHECK(format_assignment(a, jobs, devs) == "j1 → y\nj2 → x\nj3 → x\nmakespan=2\n");
  CHECK(code_of([&] { parse_jobs(R"([{"id":"j1","model_id":"echo","language":"x","cost":-1}])"); }) ==
        ErrorCode::InvalidSpec);
  CHECK(code_of([&] { parse_jobs(R"([{"id":"j1","model_id":"echo","language":"x"}, 3])"); }) ==
        ErrorCode::InvalidSpec);
  CHECK(code_of([&] { parse_jobs(R"({"id":"j1"})"); }) == ErrorCode::InvalidSpec);
}
