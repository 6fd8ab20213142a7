#include <string>

#include "upm/backends.hpp"
#include "upm/core_model.hpp"
#include "upm/coupling_app.hpp"
#include "upm/kernels.hpp"
#include "upm/minimp.hpp"

namespace upm {

namespace {

using namespace cluster_tags;

Bytes encode_error(std::uint64_t job, const Error& e) {
  ByteWriter w;
  w.u64(job).u8(1).u8(static_cast<std::uint8_t>(e.code())).str16(e.detail().substr(0, 0xFFFF));
  return std::move(w).take();
}

// SPMD evaluation driven by rank 0: scatter shards, compute the local one,
// gather partials in rank order, combine. Returns nullopt if the cluster
// went away mid-job.
std::optional<Bytes> spmd_run(mp::Endpoint& ep, std::uint64_t job, std::string_view model, ByteView payload) {
  const kernels::Kernel* k = kernels::find_kernel(model);
  if (k == nullptr) throw Error(ErrorCode::BackendFailure, "model");
  k->validate(payload);
  const auto shards = kernels::shard_payload(*k, payload, static_cast<std::size_t>(ep.size()));
  for (int r = 1; r < ep.size(); ++r) {
    ByteWriter w(shards[r].size() + 16 + model.size());
    w.u8('K').u64(job).str16(model).raw(shards[r]);
    ep.send(r, kShard, w.bytes());
  }
  std::vector<Bytes> partials(shards.size());
  std::optional<Error> first_error;
  try {
    partials[0] = k->partial(shards[0]);
  } catch (const Error& e) {
    first_error = e;
  }
  for (int r = 1; r < ep.size(); ++r) {
    auto reply = ep.recv(r, kPartial);
    if (!reply) return std::nullopt;
    ByteReader in(*reply);
    if (in.u8() != 0) {
      const auto code = static_cast<ErrorCode>(in.u8());
      if (!first_error) first_error = Error(code, "rank " + std::to_string(r) + ": " + in.str16());
      continue;
    }
    auto rest = in.rest();
    partials[r].assign(rest.begin(), rest.end());
  }
  if (first_error) throw *first_error;
  return k->combine(std::move(partials));
}

void run_rank_zero(mp::Endpoint& ep) {
  bool cluster_lost = false;
  coupling::AppHost apps([&](std::string_view kernel, ByteView input) {
    auto out = spmd_run(ep, 0, kernel, input);
    if (!out) {
      cluster_lost = true;
      throw Error(ErrorCode::BackendFailure, "cluster lost");
    }
    return *out;
  });

  for (;;) {
    auto msg = ep.recv(mp::kHost, kJob);
    if (!msg) return;
    ByteReader in(*msg);
    std::uint64_t job = 0;
    try {
      const auto op = in.u8();
      job = in.u64();
      const std::string model = in.str16();
      const auto payload = in.rest();
      Bytes result;
      if (op == 'A') {
        result = apps.handle(payload);
      } else {
        auto out = spmd_run(ep, job, model, payload);
        if (!out) return;
        result = std::move(*out);
      }
      ByteWriter w(result.size() + 9);
      w.u64(job).u8(0).raw(result);
      ep.send(mp::kHost, kResult, w.bytes());
    } catch (const Error& e) {
      ep.send(mp::kHost, kResult, encode_error(job, e));
    } catch (const std::exception& e) {
      ep.send(mp::kHost, kResult, encode_error(job, Error(ErrorCode::BackendFailure, e.what())));
    }
    if (cluster_lost) return;
  }
}

void run_rank_other(mp::Endpoint& ep) {
  for (;;) {
    auto msg = ep.recv(0, kShard);
    if (!msg) return;
    ByteWriter w;
    try {
      ByteReader in(*msg);
      if (in.u8() != 'K') return;
      in.u64();  // job id, informational
      const std::string model = in.str16();
      const kernels::Kernel* k = kernels::find_kernel(model);
      if (k == nullptr) throw Error(ErrorCode::BackendFailure, "model");
      w.u8(0).raw(k->partial(in.rest()));
    } catch (const Error& e) {
      w = ByteWriter();
      w.u8(1).u8(static_cast<std::uint8_t>(e.code())).str16(e.detail().substr(0, 0xFFFF));
    } catch (const std::exception& e) {
      w = ByteWriter();
      w.u8(1).u8(static_cast<std::uint8_t>(ErrorCode::BackendFailure)).str16(std::string(e.what()).substr(0, 0xFFFF));
    }
    ep.send(0, kPartial, w.bytes());
  }
}

}  // namespace

void run_cluster_worker(mp::Endpoint& ep) {
  try {
    if (ep.rank() == 0) run_rank_zero(ep);
    else run_rank_other(ep);
  } catch (const Error&) {
    // the router went away while sending; nothing left to report to
  }
}

}  // namespace upm
