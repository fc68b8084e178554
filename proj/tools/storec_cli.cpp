// Copyright 2026 The storec Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "storec/pipeline.hpp"

namespace {

// One machine-parsable line on stderr, then the documented exit code:
// 2 missing input, 3 bad configuration, 4 numeric abort, 1 anything else.
int fail(const char* kind, int code, const std::exception& e) {
  nlohmann::json j;
  j["error"] = kind;
  j["detail"] = e.what();
  std::cerr << j.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "storec: sequential shopping-intention pipeline "
      "(gen-data | build-graph | train | eval | gradcheck | mad)"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string ablate;
  const std::vector<std::string> names = {"gen-data", "build-graph", "train",
                                          "eval",     "gradcheck",   "mad"};
  const std::vector<std::string> blurbs = {
      "generate a synthetic corpus and its planted world",
      "train relation embeddings and build the intention graph",
      "train the sequence model with validation-based selection",
      "rank held-out labels and write the metric report",
      "finite-difference check of the full training loss",
      "over-smoothing diagnostic over propagated node tables"};
  for (std::size_t i = 0; i < names.size(); ++i) {
    CLI::App* sub = app.add_subcommand(names[i], blurbs[i]);
    sub->add_option("--config", config_path,
                    "key=value configuration file");
    sub->add_option("--set", overrides,
                    "override one configuration key (repeatable)");
    sub->add_option("--ablate", ablate, "none | no-gr | no-sr");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    if (!config_path.empty() &&
        !std::filesystem::exists(std::filesystem::path(config_path))) {
      throw storec::cli::MissingInputError("missing config file: " +
                                           config_path);
    }
    const storec::cli::RunConfig config =
        storec::cli::load_run_config(config_path, overrides, ablate);
    storec::cli::run_command(command, config);
  } catch (const storec::cli::MissingInputError& e) {
    return fail("missing-input", 2, e);
  } catch (const storec::ConfigError& e) {
    return fail("config", 3, e);
  } catch (const storec::NumericError& e) {
    return fail("numeric", 4, e);
  } catch (const std::exception& e) {
    return fail("error", 1, e);
  }
  return 0;
}
