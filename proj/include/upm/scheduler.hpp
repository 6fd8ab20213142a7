#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "upm/core_model.hpp"
#include "upm/rational.hpp"

// Placing a batch of jobs onto installed devices to minimize makespan, where
// a device's load is the sum of cost / speed_factor over its jobs.
namespace upm::scheduler {

struct JobSpec {
  std::string id;
  std::string model_id;
  std::string language;
  Rational cost{1};
  friend bool operator==(const JobSpec&, const JobSpec&) = default;
};

using Assignment = std::map<std::string, std::string>;  // job id -> device name

inline constexpr std::size_t kMaxOptimalJobs = 12;
inline constexpr std::size_t kMaxOptimalDevices = 4;

bool feasible(const JobSpec& j, const DeviceDescriptor& d);

// LPT: jobs by cost descending (ties: id ascending), each onto the feasible
// device with the smallest completion time (ties: device name ascending).
// Throws INFEASIBLE_JOB(id), INVALID_SPEC.
Assignment greedy_assign(const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices);

// Exhaustive minimum. Among equal makespans the result is the smallest in
// lexicographic order of device names taken in job-id order.
// Throws INFEASIBLE_JOB(id), INVALID_SPEC("size") beyond 12 jobs or 4 devices.
Assignment optimal_assign(const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices);

Rational makespan(const Assignment& a, const std::vector<JobSpec>& jobs, const std::vector<DeviceDescriptor>& devices);

// [{"id":"j1","model_id":"echo","language":"kernelset-v1","cost":4}, ...]
// cost: positive number or rational string. Throws INVALID_SPEC.
std::vector<JobSpec> jobs_from_json(const nlohmann::json& j);
std::vector<JobSpec> parse_jobs(std::string_view text);

// "<job> → <device>" per job (by id), then "makespan=<decimal>".
std::string format_assignment(const Assignment& a, const std::vector<JobSpec>& jobs,
                              const std::vector<DeviceDescriptor>& devices);

}  // namespace upm::scheduler
