#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rmfg/cli/runner.hpp"

namespace {

// "q=3" -> 3, "negative_controls=true" -> true, "b=nonconstant" -> "nonconstant"
nlohmann::json parse_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;
  }
}

std::string task_list() {
  std::string s = "Tasks:\n";
  for (const auto& [name, def] : rmfg::cli::tasks()) s += "  " + name + std::string(22 - name.size(), ' ') + def.summary + "\n";
  s += "\nModels:";
  for (const auto& name : rmfg::catalog_names()) s += " " + name;
  s += "\n\nExit codes: 0 all checks pass, 2 a check failed, 1 execution error, 64 usage error.\n";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace rmfg::cli;
  CLI::App app{"Scenario runner for reduced mean field game solvers and verifiers"};
  std::vector<std::string> args;
  std::string config, out = "rmfg_out";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  app.add_option("args", args, "task followed by key=value overrides (model=NAME selects the model)");
  app.add_option("--config", config, "scenario file (JSON)");
  app.add_option("--out", out, "output directory")->capture_default_str();
  app.add_option("--seed", seed, "sampling seed, overrides the scenario");
  app.add_flag("--quiet", quiet, "only errors on stderr");
  app.footer(task_list());
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    nlohmann::json doc = nlohmann::json::object();
    if (!config.empty()) doc = rmfg::io::read_json(config);
    std::optional<std::string> task;
    nlohmann::json overrides = nlohmann::json::object();
    for (const auto& a : args) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) {
        if (task) throw UsageError("unexpected argument '" + a + "' (overrides take the form key=value)");
        task = a;
      } else {
        if (eq == 0) throw UsageError("empty key in '" + a + "'");
        overrides[a.substr(0, eq)] = parse_value(a.substr(eq + 1));
      }
    }
    if (doc.is_object() && doc.contains("runs")) {
      if (task || !overrides.empty()) throw UsageError("a multi-run scenario takes no task or overrides");
    } else {
      if (!doc.is_object()) throw UsageError("scenario must be a JSON object");
      if (task) {
        if (doc.contains("task") && doc["task"] != *task)
          throw UsageError("task '" + *task + "' differs from the scenario's task " + doc["task"].dump());
        doc["task"] = *task;
      }
      if (!doc.contains("task")) throw UsageError("no task given\n\n" + task_list());
      doc.update(overrides);
    }
    return run_document(doc, out, seed, quiet);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExecutionError;
  }
}
