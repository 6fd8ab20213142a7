#include "upm/kernels.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <queue>
#include <shared_mutex>
#include <thread>

#include "upm/core_model.hpp"
#include "upm/simd/wordscan.hpp"

namespace upm::kernels {

namespace {

[[noreturn]] void precondition(const std::string& reason) { throw Error(ErrorCode::BackendFailure, reason); }

class EchoKernel final : public Kernel {
public:
  std::string_view name() const override { return "echo"; }
  Bytes partial(ByteView shard) const override { return Bytes(shard.begin(), shard.end()); }
  Bytes combine(std::vector<Bytes> partials) const override {
    if (partials.size() == 1) return std::move(partials.front());
    Bytes out;
    for (const auto& p : partials) out.insert(out.end(), p.begin(), p.end());
    return out;
  }
};

// Partial = the shard's chunk sums (LE f64 each); shards start on chunk
// boundaries, so the concatenated partials are exactly the chunk sums of the
// whole payload, which combine() adds in chunk order.
class Vecsum64Kernel final : public Kernel {
public:
  std::string_view name() const override { return "vecsum64"; }
  std::size_t unit_bytes() const override { return 8 * kVecsumChunk; }
  void validate(ByteView payload) const override {
    if (payload.size() % 8 != 0) precondition("payload length");
  }
  Bytes partial(ByteView shard) const override {
    ByteReader in(shard);
    ByteWriter out;
    while (in.remaining() > 0) {
      const std::size_t n = std::min(kVecsumChunk, in.remaining() / 8);
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += in.f64();
      out.f64(sum);
    }
    return std::move(out).take();
  }
  Bytes combine(std::vector<Bytes> partials) const override {
    double total = 0.0;
    for (const auto& p : partials) {
      ByteReader in(p);
      while (in.remaining() > 0) total += in.f64();
    }
    return std::move(ByteWriter().f64(total)).take();
  }
};

class Sortu32Kernel final : public Kernel {
public:
  std::string_view name() const override { return "sortu32"; }
  std::size_t unit_bytes() const override { return 4; }
  void validate(ByteView payload) const override {
    if (payload.size() % 4 != 0) precondition("payload length");
  }
  Bytes partial(ByteView shard) const override {
    std::vector<std::uint32_t> v(shard.size() / 4);
    ByteReader in(shard);
    for (auto& x : v) x = in.u32();
    std::sort(v.begin(), v.end());
    ByteWriter out(shard.size());
    for (auto x : v) out.u32(x);
    return std::move(out).take();
  }
  // k-way merge of sorted runs
  Bytes combine(std::vector<Bytes> partials) const override {
    if (partials.size() == 1) return std::move(partials.front());
    using Head = std::pair<std::uint32_t, std::size_t>;  // value, run index
    std::priority_queue<Head, std::vector<Head>, std::greater<>> heap;
    std::vector<ByteReader> runs;
    std::size_t total = 0;
    for (const auto& p : partials) {
      runs.emplace_back(p);
      total += p.size();
    }
    for (std::size_t r = 0; r < runs.size(); ++r)
      if (runs[r].remaining() >= 4) heap.emplace(runs[r].u32(), r);
    ByteWriter out(total);
    while (!heap.empty()) {
      auto [v, r] = heap.top();
      heap.pop();
      out.u32(v);
      if (runs[r].remaining() >= 4) heap.emplace(runs[r].u32(), r);
    }
    return std::move(out).take();
  }
};

// Partial = [word starts u64][first byte is word u8][last byte is word u8][non-empty u8]
class WordcountKernel final : public Kernel {
public:
  std::string_view name() const override { return "wordcount"; }
  void validate(ByteView payload) const override {
    if (!is_valid_utf8(payload)) precondition("utf-8");
  }
  Bytes partial(ByteView shard) const override {
    ByteWriter out(11);
    out.u64(simd::count_word_starts(shard, false));
    out.u8(!shard.empty() && !is_ascii_space(shard.front()));
    out.u8(!shard.empty() && !is_ascii_space(shard.back()));
    out.u8(!shard.empty());
    return std::move(out).take();
  }
  Bytes combine(std::vector<Bytes> partials) const override {
    std::uint64_t words = 0;
    bool prev_ends_in_word = false;
    for (const auto& p : partials) {
      ByteReader in(p);
      const auto starts = in.u64();
      const bool first_word = in.u8() != 0;
      const bool last_word = in.u8() != 0;
      const bool non_empty = in.u8() != 0;
      if (!non_empty) continue;
      words += starts;
      // a word straddling the boundary was counted as a start in both shards
      if (prev_ends_in_word && first_word) --words;
      prev_ends_in_word = last_word;
    }
    return std::move(ByteWriter().u64(words)).take();
  }
};

struct KernelTable {
  std::shared_mutex mu;
  std::map<std::string, std::shared_ptr<const Kernel>, std::less<>> by_name;

  KernelTable() {
    for (std::shared_ptr<const Kernel> k : {std::shared_ptr<const Kernel>(std::make_shared<EchoKernel>()),
                                            std::shared_ptr<const Kernel>(std::make_shared<Vecsum64Kernel>()),
                                            std::shared_ptr<const Kernel>(std::make_shared<Sortu32Kernel>()),
                                            std::shared_ptr<const Kernel>(std::make_shared<WordcountKernel>())})
      by_name.emplace(std::string(k->name()), k);
  }
};

KernelTable& table() {
  static KernelTable t;
  return t;
}

}  // namespace

const Kernel* find_kernel(std::string_view name) {
  auto& t = table();
  std::shared_lock lock(t.mu);
  auto it = t.by_name.find(name);
  // entries are never erased, only replaced; registered kernels live for the process
  return it == t.by_name.end() ? nullptr : it->second.get();
}

void register_kernel(std::shared_ptr<const Kernel> kernel) {
  auto& t = table();
  std::unique_lock lock(t.mu);
  static std::vector<std::shared_ptr<const Kernel>> retired;
  auto [it, inserted] = t.by_name.try_emplace(std::string(kernel->name()), kernel);
  if (!inserted) {
    retired.push_back(it->second);
    it->second = std::move(kernel);
  }
}

std::vector<std::string> kernel_names() {
  auto& t = table();
  std::shared_lock lock(t.mu);
  std::vector<std::string> out;
  for (const auto& [name, k] : t.by_name) out.push_back(name);
  return out;
}

std::optional<std::vector<std::string>> kernel_set(std::string_view set_name) {
  if (set_name == kKernelSetV1) return std::vector<std::string>{"echo", "vecsum64", "sortu32", "wordcount"};
  if (set_name == kCouplingSet)
    return std::vector<std::string>{std::string(kCouplingApp), "echo", "vecsum64", "sortu32", "wordcount"};
  return std::nullopt;
}

bool model_hosts(std::string_view device_model, std::string_view model) {
  if (device_model == model) return true;
  auto members = kernel_set(device_model);
  return members && std::find(members->begin(), members->end(), model) != members->end();
}

std::vector<ByteView> shard_payload(const Kernel& k, ByteView payload, std::size_t parts) {
  parts = std::max<std::size_t>(parts, 1);
  if (!k.splittable()) parts = 1;
  const std::size_t unit = k.unit_bytes();
  const std::size_t units = payload.size() / unit;
  const std::size_t per = units / parts;
  std::vector<ByteView> shards;
  shards.reserve(parts);
  for (std::size_t i = 0; i < parts; ++i) {
    const std::size_t begin = i * per * unit;
    const std::size_t end = i + 1 == parts ? payload.size() : (i + 1) * per * unit;
    shards.push_back(payload.subspan(begin, end - begin));
  }
  return shards;
}

Bytes run(const Kernel& k, ByteView payload) {
  k.validate(payload);
  std::vector<Bytes> partials;
  partials.push_back(k.partial(payload));
  return k.combine(std::move(partials));
}

Bytes run_parallel(const Kernel& k, ByteView payload, std::size_t workers) {
  k.validate(payload);
  const auto shards = shard_payload(k, payload, workers);
  std::vector<Bytes> partials(shards.size());
  std::vector<std::exception_ptr> errors(shards.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 1; i < shards.size(); ++i)
      threads.emplace_back([&, i] {
        try {
          partials[i] = k.partial(shards[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    try {
      partials[0] = k.partial(shards[0]);
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return k.combine(std::move(partials));
}

Bytes echo(ByteView payload) { return run(*find_kernel("echo"), payload); }
Bytes vecsum64(ByteView payload) { return run(*find_kernel("vecsum64"), payload); }
Bytes sortu32(ByteView payload) { return run(*find_kernel("sortu32"), payload); }
Bytes wordcount(ByteView payload) { return run(*find_kernel("wordcount"), payload); }

bool is_ascii_space(std::uint8_t c) { return c == 0x20 || (c >= 0x09 && c <= 0x0D); }

bool is_valid_utf8(ByteView s) {
  std::size_t i = 0;
  const std::size_t n = s.size();
  while (i < n) {
    const std::uint8_t c = s[i];
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t j = 1; j < len; ++j) {
      if ((s[i + j] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (s[i + j] & 0x3F);
    }
    static constexpr std::uint32_t kMinForLength[5] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMinForLength[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

}  // namespace upm::kernels
