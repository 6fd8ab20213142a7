#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "upm/bytes.hpp"

// Resident code of the built-in "general printers". A kernel is a
// deterministic function of its payload, decomposed as
//
//   result = combine([partial(shard_0), ..., partial(shard_k-1)])
//
// over contiguous shards. Every backend (in-process, thread pool, rank
// cluster, plug-in) evaluates the same decomposition, which is what makes
// their outputs byte-identical.
namespace upm::kernels {

inline constexpr std::string_view kKernelSetV1 = "kernelset-v1";
inline constexpr std::string_view kCouplingSet = "coupling-v1";
inline constexpr std::string_view kCouplingApp = "coupling-app";

inline constexpr std::size_t kVecsumChunk = 4096;  // elements per summation chunk

class Kernel {
public:
  virtual ~Kernel() = default;

  virtual std::string_view name() const = 0;
  // Shard boundaries fall on multiples of this many bytes.
  virtual std::size_t unit_bytes() const { return 1; }
  // False for kernels that must see the whole payload in one shard.
  virtual bool splittable() const { return true; }
  // Whole-payload precondition check; throws Error(BACKEND_FAILURE, reason).
  virtual void validate(ByteView payload) const { (void)payload; }
  virtual Bytes partial(ByteView shard) const = 0;
  virtual Bytes combine(std::vector<Bytes> partials) const = 0;
};

const Kernel* find_kernel(std::string_view name);
// Adds or replaces a kernel by name (used for test kernels and plug-in hosts).
void register_kernel(std::shared_ptr<const Kernel> kernel);
std::vector<std::string> kernel_names();

// Members of a named kernel set, or nullopt if `set_name` is not a set.
std::optional<std::vector<std::string>> kernel_set(std::string_view set_name);

// True if a device whose model_id is `device_model` can run `model`:
// either the same id, or `model` is a member of the set named by `device_model`.
bool model_hosts(std::string_view device_model, std::string_view model);

// Equal contiguous shards in units of k.unit_bytes(); the last shard takes
// the remainder (including any trailing partial unit).
std::vector<ByteView> shard_payload(const Kernel& k, ByteView payload, std::size_t parts);

// Single shard, current thread. This is the reference evaluation.
Bytes run(const Kernel& k, ByteView payload);
// `workers` shards evaluated on `workers` threads, combined in shard order.
Bytes run_parallel(const Kernel& k, ByteView payload, std::size_t workers);

// Convenience wrappers around the built-ins.
Bytes echo(ByteView payload);
Bytes vecsum64(ByteView payload);
Bytes sortu32(ByteView payload);
Bytes wordcount(ByteView payload);

bool is_valid_utf8(ByteView s);
bool is_ascii_space(std::uint8_t c);

}  // namespace upm::kernels
