#include "upm/scheduler.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#include "upm/kernels.hpp"

namespace upm::scheduler {

using nlohmann::json;

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); }

void check_jobs(const std::vector<JobSpec>& jobs) {
  std::set<std::string> ids;
  for (const auto& j : jobs) {
    if (j.id.empty() || !ids.insert(j.id).second) bad("id " + j.id);
    if (j.cost <= Rational(0)) bad("cost " + j.id);
  }
}

// Devices in name order, with each job's feasible device indices.
struct Instance {
  std::vector<const DeviceDescriptor*> devices;
  std::vector<std::vector<std::size_t>> options;  // parallel to the job order given
};

Instance prepare(const std::vector<const JobSpec*>& jobs, const std::vector<DeviceDescriptor>& devices) {
  Instance in;
  for (const auto& d : devices) in.devices.push_back(&d);
  std::sort(in.devices.begin(), in.devices.end(), [](auto* a, auto* b) { return a->name < b->name; });
  for (const auto* j : jobs) {
    std::vector<std::size_t> opts;
    for (std::size_t i = 0; i < in.devices.size(); ++i)
      if (feasible(*j, *in.devices[i])) opts.push_back(i);
    if (opts.empty()) throw Error(ErrorCode::InfeasibleJob, j->id);
    in.options.push_back(std::move(opts));
  }
  return in;
}

}  // namespace

bool feasible(const JobSpec& j, const DeviceDescriptor& d) {
  return d.languages.count(j.language) != 0 && kernels::model_hosts(d.model_id, j.model_id);
}

Assignment greedy_assign(const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices) {
  check_jobs(jobs);
  std::vector<const JobSpec*> order;
  for (const auto& j : jobs) order.push_back(&j);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) {
    if (a->cost != b->cost) return a->cost > b->cost;
    return a->id < b->id;
  });
  const Instance in = prepare(order, devices);

  std::vector<Rational> load(in.devices.size(), Rational(0));
  Assignment out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::optional<std::size_t> best;
    Rational best_finish;
    for (std::size_t i : in.options[k]) {
      const Rational finish = load[i] + order[k]->cost / in.devices[i]->speed_factor;
      if (!best || finish < best_finish) {
        best = i;
        best_finish = finish;
      }
    }
    load[*best] = best_finish;
    out[order[k]->id] = in.devices[*best]->name;
  }
  return out;
}

Assignment optimal_assign(const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices) {
  if (jobs.size() > kMaxOptimalJobs || devices.size() > kMaxOptimalDevices) bad("size");
  check_jobs(jobs);
  std::vector<const JobSpec*> order;
  for (const auto& j : jobs) order.push_back(&j);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
  const Instance in = prepare(order, devices);

  std::vector<Rational> load(in.devices.size(), Rational(0));
  std::vector<std::size_t> current(order.size()), best;
  std::optional<Rational> best_span;

  // Depth-first in (job id, device name) order; only a strictly better
  // makespan replaces the incumbent, so the first optimum found is the
  // lexicographically smallest one.
  std::function<void(std::size_t, Rational)> dfs = [&](std::size_t k, Rational span) {
    if (best_span && span >= *best_span) return;
    if (k == order.size()) {
      best_span = span;
      best = current;
      return;
    }
    for (std::size_t i : in.options[k]) {
      const Rational add = order[k]->cost / in.devices[i]->speed_factor;
      load[i] = load[i] + add;
      current[k] = i;
      dfs(k + 1, std::max(span, load[i]));
      load[i] = load[i] - add;
    }
  };
  dfs(0, Rational(0));

  Assignment out;
  for (std::size_t k = 0; k < order.size(); ++k) out[order[k]->id] = in.devices[best[k]]->name;
  return out;
}

Rational makespan(const Assignment& a, const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices) {
  std::map<std::string, Rational> load;
  for (const auto& [job_id, device] : a) {
    auto j = std::find_if(jobs.begin(), jobs.end(), [&](const JobSpec& x) { return x.id == job_id; });
    auto d = std::find_if(devices.begin(), devices.end(), [&](const DeviceDescriptor& x) { return x.name == device; });
    if (j == jobs.end()) bad("job " + job_id);
    if (d == devices.end()) bad("device " + device);
    auto [it, fresh] = load.try_emplace(device, Rational(0));
    it->second = it->second + j->cost / d->speed_factor;
  }
  Rational span(0);
  for (const auto& [name, l] : load) span = std::max(span, l);
  return span;
}

std::vector<JobSpec> jobs_from_json(const json& j) {
  if (!j.is_array()) bad("jobs");
  std::vector<JobSpec> out;
  for (const auto& e : j) {
    if (!e.is_object()) bad("jobs");
    JobSpec s;
    bool have_id = false;
    for (auto f = e.begin(); f != e.end(); ++f) {
      const auto& k = f.key();
      if (k == "id" && f->is_string()) {
        s.id = f->get<std::string>();
        have_id = true;
      } else if (k == "model_id" && f->is_string()) {
        s.model_id = f->get<std::string>();
      } else if (k == "language" && f->is_string()) {
        s.language = f->get<std::string>();
      } else if (k == "cost") {
        try {
          if (f->is_number_integer()) s.cost = Rational(f->get<std::int64_t>());
          else if (f->is_number_float()) s.cost = Rational::from_double(f->get<double>());
          else if (f->is_string()) s.cost = Rational::parse(f->get<std::string>());
          else bad("cost");
        } catch (const Error&) {
          throw;
        } catch (const std::exception&) {
          bad("cost");
        }
      } else {
        bad("jobs." + k);
      }
    }
    if (!have_id) bad("id");
    out.push_back(std::move(s));
  }
  check_jobs(out);
  return out;
}

std::vector<JobSpec> parse_jobs(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) bad("json");
  return jobs_from_json(j);
}

std::string format_assignment(const Assignment& a, const std::vector<JobSpec>& jobs,
                              const std::vector<DeviceDescriptor>& devices) {
  std::ostringstream os;
  for (const auto& [job, device] : a) os << job << " → " << device << "\n";
  os << "makespan=" << makespan(a, jobs, devices).to_decimal() << "\n";
  return os.str();
}

}  // namespace upm::scheduler
