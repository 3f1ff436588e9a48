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
#ifndef MGLP_CLI_CONFIG_HPP_
#define MGLP_CLI_CONFIG_HPP_

#include <map>
#include <string>
#include <vector>

#include "mglp/training.hpp"

namespace mglp {

// Flat key=value configuration for the command-line tools. Sections are
// dotted prefixes (model.*, mgrit.*, indicator.*, optimizer.*, task.*);
// undotted keys steer the run itself. One text format in, one canonical
// text format out, and the out-going form is itself a loadable config, so a
// manifest reproduces its run verbatim.

struct RunSettings {
  TaskSpec task;
  ModelConfig model;
  TrainConfig train;
  std::string out;  // output directory; defaults to runs/<hash prefix>
};

// '#' starts a comment; blank lines are skipped; later duplicates win.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> read_config_file(const std::string& path);

// --set style "key=value" items layered over the file contents.
void apply_overrides(std::map<std::string, std::string>& kv,
                     const std::vector<std::string>& sets);

// Fills defaults, validates every value (errors name the key), and rejects
// unknown keys, listing all of them in one message.
RunSettings materialize(const std::map<std::string, std::string>& kv);

// Every known key in a fixed order with the current value. Excludes `out`:
// the destination is not part of the experiment identity.
std::string canonical_config(const RunSettings& s);

// FNV-1a over the canonical text, 16 hex digits. Identical settings hash
// identically by construction.
std::string config_hash_hex(const RunSettings& s);

// Comment header (command, hash, outputs) over the canonical config, valid
// as a config file for an exact rerun.
std::string manifest_text(const std::string& command, const RunSettings& s,
                          const std::vector<std::string>& outputs);

}  // namespace mglp

#endif  // MGLP_CLI_CONFIG_HPP_
