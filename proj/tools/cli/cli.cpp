// Copyright 2026 The polystack Authors.
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

#include "cli.hpp"

#include <map>
#include <ostream>

#include "commands.hpp"
#include "polystack/error.hpp"
#include "run_config.hpp"

namespace polystack::cli {

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"polystack: operator-polynomial residual networks", "polystack"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::map<std::string, Runner> runners{
      {"parse", add_parse(app)},       {"expand", add_expand(app)},
      {"rewrite", add_rewrite(app)},   {"analyze", add_analyze(app)},
      {"gradcheck", add_gradcheck(app)}, {"surgery", add_surgery(app)},
      {"train", add_train(app)},       {"eval", add_eval(app)},
      {"sweep", add_sweep(app)},
  };

  try {
    std::vector<std::string> argv = expand_config_args(args);
    std::reverse(argv.begin(), argv.end());  // CLI11 consumes the vector from the back
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    return runners.at(sub->get_name())(out, err);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const ParseError& e) {
    err << "syntax error at " << e.what() << "\n";
    return kValidation;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kUsage;
  }
}

}  // namespace polystack::cli
