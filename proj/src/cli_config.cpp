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
#include "mglp/cli_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "mglp/errors.hpp"

namespace mglp {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void insert_pair(std::map<std::string, std::string>& kv,
                 const std::string& item, const char* what) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || trim(item.substr(0, eq)).empty()) {
    throw ValidationError(std::string(what) + ": expected key=value, got '" +
                          item + "'");
  }
  kv[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
}

// ---- typed readers; every parse failure names the key ----------------------

class KeyReader {
 public:
  explicit KeyReader(const std::map<std::string, std::string>& kv)
      : pending_(kv) {}

  bool has(const std::string& key) const { return pending_.count(key) != 0; }

  std::string take_string(const std::string& key, const std::string& dflt) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return dflt;
    const std::string v = it->second;
    pending_.erase(it);
    return v;
  }

  long long take_int(const std::string& key, long long dflt) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return dflt;
    const std::string v = it->second;
    pending_.erase(it);
    char* end = nullptr;
    const long long n = std::strtoll(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
      throw ValidationError("config: key '" + key + "' wants an integer, got '" +
                            v + "'");
    return n;
  }

  std::uint64_t take_u64(const std::string& key, std::uint64_t dflt) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return dflt;
    const std::string v = it->second;
    pending_.erase(it);
    char* end = nullptr;
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
      throw ValidationError("config: key '" + key +
                            "' wants an unsigned integer, got '" + v + "'");
    return n;
  }

  double take_double(const std::string& key, double dflt) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return dflt;
    const std::string v = it->second;
    pending_.erase(it);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
      throw ValidationError("config: key '" + key + "' wants a number, got '" +
                            v + "'");
    return x;
  }

  bool take_bool(const std::string& key, bool dflt) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return dflt;
    const std::string v = it->second;
    pending_.erase(it);
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ValidationError("config: key '" + key +
                          "' wants true/false or 1/0, got '" + v + "'");
  }

  template <typename Enum>
  Enum take_enum(const std::string& key, Enum dflt,
                 const std::vector<std::pair<const char*, Enum>>& table) {
    const auto it = pending_.find(key);
    if (it == pending_.end()) return dflt;
    const std::string v = it->second;
    pending_.erase(it);
    for (const auto& [name, val] : table)
      if (v == name) return val;
    std::string choices;
    for (const auto& [name, val] : table) {
      if (!choices.empty()) choices += ", ";
      choices += name;
    }
    throw ValidationError("config: key '" + key + "' wants one of {" + choices +
                          "}, got '" + v + "'");
  }

  void finish() const {
    if (pending_.empty()) return;
    std::string names;
    for (const auto& [k, v] : pending_) {
      if (!names.empty()) names += ", ";
      names += k;
    }
    throw ValidationError("config: unknown keys: " + names);
  }

 private:
  std::map<std::string, std::string> pending_;
};

// ---- enum tables, shared by parse and render -------------------------------

const std::vector<std::pair<const char*, TrainMode>>& mode_table() {
  static const std::vector<std::pair<const char*, TrainMode>> t = {
      {"serial", TrainMode::kSerial},
      {"layer_parallel", TrainMode::kLayerParallel},
      {"switching", TrainMode::kSwitching}};
  return t;
}

const std::vector<std::pair<const char*, ModelKind>>& kind_table() {
  static const std::vector<std::pair<const char*, ModelKind>> t = {
      {"encoder", ModelKind::kEncoder},
      {"decoder_only", ModelKind::kDecoderOnly},
      {"encoder_decoder", ModelKind::kEncoderDecoder}};
  return t;
}

const std::vector<std::pair<const char*, TaskKind>>& task_table() {
  static const std::vector<std::pair<const char*, TaskKind>> t = {
      {"copy_sequence", TaskKind::kCopySequence},
      {"token_classification", TaskKind::kTokenClassification},
      {"tiny_translation", TaskKind::kTinyTranslation}};
  return t;
}

const std::vector<std::pair<const char*, OptKind>>& opt_table() {
  static const std::vector<std::pair<const char*, OptKind>> t = {
      {"sgd", OptKind::kSgd},
      {"adam", OptKind::kAdam},
      {"adamw", OptKind::kAdamW}};
  return t;
}

const std::vector<std::pair<const char*, IndicatorPolicy>>& policy_table() {
  static const std::vector<std::pair<const char*, IndicatorPolicy>> t = {
      {"increase_iterations", IndicatorPolicy::kIncreaseIterations},
      {"switch_serial", IndicatorPolicy::kSwitchSerial}};
  return t;
}

const std::vector<std::pair<const char*, InitialGuess>>& guess_table() {
  static const std::vector<std::pair<const char*, InitialGuess>> t = {
      {"broadcast", InitialGuess::kBroadcast},
      {"zero", InitialGuess::kZero}};
  return t;
}

template <typename Enum>
const char* enum_label(Enum v,
                       const std::vector<std::pair<const char*, Enum>>& table) {
  for (const auto& [name, val] : table)
    if (val == v) return name;
  return "?";
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    char where[32];
    std::snprintf(where, sizeof(where), "config line %d", lineno);
    insert_pair(kv, line, where);
  }
  return kv;
}

std::map<std::string, std::string> read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config: cannot read " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

void apply_overrides(std::map<std::string, std::string>& kv,
                     const std::vector<std::string>& sets) {
  for (const std::string& item : sets) insert_pair(kv, item, "--set");
}

RunSettings materialize(const std::map<std::string, std::string>& kv) {
  KeyReader r(kv);
  RunSettings s;

  s.train.mode = r.take_enum("mode", s.train.mode, mode_table());
  s.train.seed = r.take_u64("seed", s.train.seed);
  const int vocab = static_cast<int>(r.take_int("vocab", s.task.vocab));
  s.train.workers = static_cast<int>(r.take_int("workers", s.train.workers));
  s.train.epochs = static_cast<int>(r.take_int("epochs", s.train.epochs));
  s.train.batch_size =
      static_cast<int>(r.take_int("batch_size", s.train.batch_size));
  s.train.val_every =
      static_cast<int>(r.take_int("val_every", s.train.val_every));
  s.train.manual_switch_batch =
      r.take_int("manual_switch_batch", s.train.manual_switch_batch);
  s.out = r.take_string("out", "");

  s.task.kind = r.take_enum("task.kind", s.task.kind, task_table());
  s.task.seq_len = static_cast<int>(r.take_int("task.seq_len", s.task.seq_len));
  s.task.train_size =
      static_cast<int>(r.take_int("task.train_size", s.task.train_size));
  s.task.val_size =
      static_cast<int>(r.take_int("task.val_size", s.task.val_size));
  s.task.seed = r.take_u64("task.seed", s.task.seed);
  s.task.vocab = vocab;

  StackConfig& m = s.model.stack;
  m.kind = r.take_enum("model.kind", m.kind, kind_table());
  m.d = static_cast<int>(r.take_int("model.d", m.d));
  m.heads = static_cast<int>(r.take_int("model.heads", m.heads));
  m.ffn = static_cast<int>(r.take_int("model.ffn", m.ffn));
  m.n_enc = static_cast<int>(r.take_int("model.n_enc", m.n_enc));
  m.n_dec = static_cast<int>(r.take_int("model.n_dec", m.n_dec));
  m.buffer_open =
      static_cast<int>(r.take_int("model.buffer_open", m.buffer_open));
  m.buffer_close =
      static_cast<int>(r.take_int("model.buffer_close", m.buffer_close));
  m.dropout = r.take_double("model.dropout", m.dropout);
  m.ln_eps = r.take_double("model.ln_eps", m.ln_eps);
  m.base_h = r.take_double("model.base_h", m.base_h);
  m.init_std = r.take_double("model.init_std", m.init_std);
  m.depth_scaled_init =
      r.take_bool("model.depth_scaled_init", m.depth_scaled_init);
  s.model.vocab = vocab;
  s.model.max_seq = static_cast<int>(r.take_int("model.max_seq", s.model.max_seq));

  SolveConfig& g = s.train.solve;
  g.coarsen = static_cast<int>(r.take_int("mgrit.cf", g.coarsen));
  g.levels = static_cast<int>(r.take_int("mgrit.levels", g.levels));
  g.fwd_iters = static_cast<int>(r.take_int("mgrit.fwd_iters", g.fwd_iters));
  g.bwd_iters = static_cast<int>(r.take_int("mgrit.bwd_iters", g.bwd_iters));
  g.fwd_tol = r.take_double("mgrit.fwd_tol", g.fwd_tol);
  g.bwd_tol = r.take_double("mgrit.bwd_tol", g.bwd_tol);
  g.warm_start = r.take_bool("mgrit.warm_start", g.warm_start);
  g.cold_guess = r.take_enum("mgrit.cold_guess", g.cold_guess, guess_table());

  IndicatorConfig& ind = s.train.indicator;
  ind.probe_period =
      static_cast<int>(r.take_int("indicator.probe_period", ind.probe_period));
  ind.threshold = r.take_double("indicator.threshold", ind.threshold);
  ind.policy = r.take_enum("indicator.policy", ind.policy, policy_table());
  ind.max_iter_cap =
      static_cast<int>(r.take_int("indicator.max_iter_cap", ind.max_iter_cap));
  ind.use_probe_gradient =
      r.take_bool("indicator.use_probe_gradient", ind.use_probe_gradient);

  OptConfig& o = s.train.opt;
  o.kind = r.take_enum("optimizer.kind", o.kind, opt_table());
  o.lr = r.take_double("optimizer.lr", o.lr);
  o.beta1 = r.take_double("optimizer.beta1", o.beta1);
  o.beta2 = r.take_double("optimizer.beta2", o.beta2);
  o.eps = r.take_double("optimizer.eps", o.eps);
  o.weight_decay = r.take_double("optimizer.weight_decay", o.weight_decay);
  o.momentum = r.take_double("optimizer.momentum", o.momentum);

  r.finish();
  if (s.out.empty()) s.out = "runs/" + config_hash_hex(s).substr(0, 12);
  return s;
}

std::string canonical_config(const RunSettings& s) {
  std::string out;
  char buf[160];
  const auto kvs = [&](const char* k, const std::string& v) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  };
  const auto kvi = [&](const char* k, long long v) {
    std::snprintf(buf, sizeof(buf), "%s=%lld\n", k, v);
    out += buf;
  };
  const auto kvu = [&](const char* k, std::uint64_t v) {
    std::snprintf(buf, sizeof(buf), "%s=%llu\n", k,
                  static_cast<unsigned long long>(v));
    out += buf;
  };
  const auto kvd = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%s=%.17g\n", k, v);
    out += buf;
  };
  const auto kvb = [&](const char* k, bool v) {
    kvs(k, v ? "true" : "false");
  };

  kvs("mode", enum_label(s.train.mode, mode_table()));
  kvu("seed", s.train.seed);
  kvi("vocab", s.task.vocab);
  kvi("workers", s.train.workers);
  kvi("epochs", s.train.epochs);
  kvi("batch_size", s.train.batch_size);
  kvi("val_every", s.train.val_every);
  kvi("manual_switch_batch", s.train.manual_switch_batch);
  kvs("task.kind", enum_label(s.task.kind, task_table()));
  kvi("task.seq_len", s.task.seq_len);
  kvi("task.train_size", s.task.train_size);
  kvi("task.val_size", s.task.val_size);
  kvu("task.seed", s.task.seed);
  const StackConfig& m = s.model.stack;
  kvs("model.kind", enum_label(m.kind, kind_table()));
  kvi("model.d", m.d);
  kvi("model.heads", m.heads);
  kvi("model.ffn", m.ffn);
  kvi("model.n_enc", m.n_enc);
  kvi("model.n_dec", m.n_dec);
  kvi("model.buffer_open", m.buffer_open);
  kvi("model.buffer_close", m.buffer_close);
  kvd("model.dropout", m.dropout);
  kvd("model.ln_eps", m.ln_eps);
  kvd("model.base_h", m.base_h);
  kvd("model.init_std", m.init_std);
  kvb("model.depth_scaled_init", m.depth_scaled_init);
  kvi("model.max_seq", s.model.max_seq);
  const SolveConfig& g = s.train.solve;
  kvi("mgrit.cf", g.coarsen);
  kvi("mgrit.levels", g.levels);
  kvi("mgrit.fwd_iters", g.fwd_iters);
  kvi("mgrit.bwd_iters", g.bwd_iters);
  kvd("mgrit.fwd_tol", g.fwd_tol);
  kvd("mgrit.bwd_tol", g.bwd_tol);
  kvb("mgrit.warm_start", g.warm_start);
  kvs("mgrit.cold_guess", enum_label(g.cold_guess, guess_table()));
  const IndicatorConfig& ind = s.train.indicator;
  kvi("indicator.probe_period", ind.probe_period);
  kvd("indicator.threshold", ind.threshold);
  kvs("indicator.policy", enum_label(ind.policy, policy_table()));
  kvi("indicator.max_iter_cap", ind.max_iter_cap);
  kvb("indicator.use_probe_gradient", ind.use_probe_gradient);
  const OptConfig& o = s.train.opt;
  kvs("optimizer.kind", enum_label(o.kind, opt_table()));
  kvd("optimizer.lr", o.lr);
  kvd("optimizer.beta1", o.beta1);
  kvd("optimizer.beta2", o.beta2);
  kvd("optimizer.eps", o.eps);
  kvd("optimizer.weight_decay", o.weight_decay);
  kvd("optimizer.momentum", o.momentum);
  return out;
}

std::string config_hash_hex(const RunSettings& s) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_config(s))));
  return buf;
}

std::string manifest_text(const std::string& command, const RunSettings& s,
                          const std::vector<std::string>& outputs) {
  std::string out = "# mglp run manifest\n";
  out += "# command=" + command + "\n";
  out += "# config_hash=" + config_hash_hex(s) + "\n";
  out += "# output_dir=" + s.out + "\n";
  std::string files;
  for (const std::string& f : outputs) {
    if (!files.empty()) files += " ";
    files += f;
  }
  out += "# outputs=" + files + "\n";
  out += canonical_config(s);
  return out;
}

}  // namespace mglp
