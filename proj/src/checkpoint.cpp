/* Copyright 2026 The mglp Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include "mglp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "mglp/errors.hpp"

// The payload is raw little-endian f64; a big-endian port would need byte
// swaps on both sides.
static_assert(std::endian::native == std::endian::little,
              "checkpoint serialization assumes a little-endian host");

namespace mglp {
namespace {

constexpr char kMagic[4] = {'M', 'G', 'L', 'P'};

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw ValidationError("checkpoint: truncated stream");
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw ValidationError("checkpoint: truncated stream");
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t a = 0; a < t.rank(); ++a) {
    write_u64(os, static_cast<std::uint64_t>(t.dim(a)));
  }
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

// Reads into an existing tensor; the stored shape must match exactly so a
// checkpoint can never silently reshape a model.
void read_tensor_into(std::istream& is, Tensor& t, const char* what) {
  const auto rank = read_u32(is);
  if (static_cast<std::size_t>(rank) != t.rank()) {
    throw ValidationError(std::string("checkpoint: rank mismatch for ") + what);
  }
  for (std::size_t a = 0; a < t.rank(); ++a) {
    const auto d = read_u64(is);
    if (d != static_cast<std::uint64_t>(t.dim(a))) {
      throw ValidationError(std::string("checkpoint: shape mismatch for ") +
                            what);
    }
  }
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!is) throw ValidationError("checkpoint: truncated tensor payload");
}

}  // namespace

void save_checkpoint(std::ostream& os, Model& model, const Optimizer* opt,
                     long long batch, const std::string& config_echo) {
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, kCheckpointVersion);
  write_u64(os, static_cast<std::uint64_t>(config_echo.size()));
  os.write(config_echo.data(),
           static_cast<std::streamsize>(config_echo.size()));
  write_u64(os, static_cast<std::uint64_t>(batch));

  const auto params = model.param_tensors();
  write_u32(os, static_cast<std::uint32_t>(params.size()));
  for (const Tensor* t : params) write_tensor(os, *t);

  const std::uint8_t has_opt = opt != nullptr ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&has_opt), 1);
  if (has_opt) {
    write_u64(os, static_cast<std::uint64_t>(opt->steps()));
    write_u32(os, static_cast<std::uint32_t>(opt->slot_m().size()));
    for (const Tensor& m : opt->slot_m()) write_tensor(os, m);
    write_u32(os, static_cast<std::uint32_t>(opt->slot_v().size()));
    for (const Tensor& v : opt->slot_v()) write_tensor(os, v);
  }
  if (!os) throw ValidationError("checkpoint: write failed");
}

CheckpointMeta load_checkpoint(std::istream& is, Model& model,
                               Optimizer* opt) {
  char magic[4] = {};
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("checkpoint: bad magic");
  }
  CheckpointMeta meta;
  meta.version = read_u32(is);
  if (meta.version != kCheckpointVersion) {
    throw ValidationError("checkpoint: unsupported version");
  }
  const auto echo_len = read_u64(is);
  meta.config_echo.resize(echo_len);
  if (echo_len > 0) {
    is.read(meta.config_echo.data(), static_cast<std::streamsize>(echo_len));
    if (!is) throw ValidationError("checkpoint: truncated config echo");
  }
  meta.batch = static_cast<long long>(read_u64(is));

  const auto params = model.param_tensors();
  const auto count = read_u32(is);
  if (count != params.size()) {
    throw ValidationError("checkpoint: parameter count mismatch");
  }
  for (Tensor* t : params) read_tensor_into(is, *t, "parameter");

  std::uint8_t has_opt = 0;
  is.read(reinterpret_cast<char*>(&has_opt), 1);
  if (!is) throw ValidationError("checkpoint: truncated stream");
  meta.has_optimizer = has_opt != 0;
  if (!meta.has_optimizer) return meta;

  const auto steps = read_u64(is);
  if (opt != nullptr) {
    // attach() resets the state to the right shapes, then the banks below
    // overwrite it; set_steps comes last because attach() zeroes the counter.
    opt->attach(params);
    auto read_bank = [&](std::vector<Tensor>& bank, const char* name) {
      const auto stored = read_u32(is);
      if (stored != bank.size()) {
        throw ValidationError(
            std::string("checkpoint: optimizer ") + name +
            " bank size mismatch (wrong optimizer kind for this file?)");
      }
      for (Tensor& t : bank) read_tensor_into(is, t, name);
    };
    read_bank(opt->slot_m(), "first-moment");
    read_bank(opt->slot_v(), "second-moment");
    opt->set_steps(static_cast<long long>(steps));
  } else {
    // No destination; drain the payload to leave the stream well positioned.
    auto skip_bank = [&] {
      const auto stored = read_u32(is);
      for (std::uint32_t i = 0; i < stored; ++i) {
        const auto rank = read_u32(is);
        std::uint64_t n = 1;
        for (std::uint32_t a = 0; a < rank; ++a) n *= read_u64(is);
        std::vector<char> scratch(n * sizeof(double));
        is.read(scratch.data(), static_cast<std::streamsize>(scratch.size()));
        if (!is) throw ValidationError("checkpoint: truncated optimizer state");
      }
    };
    skip_bank();
    skip_bank();
  }
  return meta;
}

void save_checkpoint_file(const std::string& path, Model& model,
                          const Optimizer* opt, long long batch,
                          const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("checkpoint: cannot open " + path);
  save_checkpoint(os, model, opt, batch, config_echo);
}

CheckpointMeta load_checkpoint_file(const std::string& path, Model& model,
                                    Optimizer* opt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("checkpoint: cannot open " + path);
  return load_checkpoint(is, model, opt);
}

}  // namespace mglp
