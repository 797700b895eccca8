// sim: scenario runner for the motion/light state-transfer models.
//
//   sim run <file>
//   sim sweep <file> --param <path> --values <v1,v2,...>
//   sim builtin <name> [--print] | --list
//   sim feasibility <file>
//
// Results go to --out-dir; the JSON summary is also printed on stdout.
// Failures print {"error": {...}} and exit nonzero.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "qst/builtins.hpp"
#include "qst/scenario.hpp"

namespace sc = qst::scenario;
using nlohmann::json;

namespace {

struct Globals {
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  double dt_scale = 1.0;
  unsigned threads = 0;
};

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

int report_error(const Globals& g, const std::string& type, const std::string& message,
                 const std::string& key, int code) {
  json e{{"type", type}, {"message", message}};
  if (!key.empty()) e["key"] = key;
  const json doc{{"error", e}};
  std::cout << doc.dump(2) << std::endl;
  std::error_code ec;
  std::filesystem::create_directories(g.out_dir, ec);
  if (!ec) std::ofstream(std::filesystem::path(g.out_dir) / "error.json") << doc.dump(2) << "\n";
  return code;
}

json run_document(const YAML::Node& doc, const Globals& g) {
  sc::LoadOptions lo{g.seed, g.dt_scale};
  sc::RunOptions ro{g.out_dir, true};
  auto scenario = sc::load(doc, lo);
  if (scenario.sweep) {
    auto res = sc::sweep(doc, scenario.sweep->param, scenario.sweep->values, lo, ro, g.threads);
    return res.summary;
  }
  return sc::run(scenario, ro).summary;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum state transfer simulator"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--out-dir", g.out_dir, "output directory")->capture_default_str();
  auto* seed_opt = app.add_option("--seed", seed, "override the scenario seed");
  app.add_option("--dt-scale", g.dt_scale, "multiplies the default time step")
      ->check(CLI::PositiveNumber);
  app.add_option("--threads", g.threads, "workers for sweeps (0 = all cores)");

  std::string file, param, values, name;
  bool list = false, print = false;
  auto* run = app.add_subcommand("run", "run a scenario file");
  run->add_option("file", file, "scenario YAML")->required();
  auto* sweep = app.add_subcommand("sweep", "run a scenario over a list of values");
  sweep->add_option("file", file, "scenario YAML")->required();
  sweep->add_option("--param", param, "dotted path, e.g. params.nu")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  auto* builtin = app.add_subcommand("builtin", "run a built-in scenario");
  builtin->add_option("name", name, "scenario name");
  builtin->add_flag("--list", list, "list built-in scenarios");
  builtin->add_flag("--print", print, "print the scenario YAML instead of running it");
  auto* feas = app.add_subcommand("feasibility", "cavity-QED parameter report");
  feas->add_option("file", file, "parameter YAML (omit for the Be+ preset)");

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) g.seed = seed;

  try {
    json out;
    if (*run) {
      out = run_document(sc::read_yaml(file), g);
    } else if (*sweep) {
      const auto vals = split_values(values);
      const auto doc = sc::read_yaml(file);
      out = sc::sweep(doc, param, vals, {g.seed, g.dt_scale}, {g.out_dir, true}, g.threads).summary;
    } else if (*builtin) {
      if (list || name.empty()) {
        for (const auto& n : qst::builtins::names()) std::cout << n << "\n";
        return 0;
      }
      const auto text = qst::builtins::source(name);
      if (print) {
        std::cout << text;
        return 0;
      }
      out = run_document(sc::parse_yaml(text), g);
    } else if (*feas) {
      const auto params = file.empty() ? qst::lab::beryllium_preset()
                                       : sc::load_lab_params(sc::read_yaml(file));
      out = qst::lab::feasibility_report(params);
      std::filesystem::create_directories(g.out_dir);
      std::ofstream(std::filesystem::path(g.out_dir) / "feasibility.json") << out.dump(2) << "\n";
    }
    std::cout << out.dump(2) << std::endl;
    return 0;
  } catch (const qst::ConfigError& e) {
    return report_error(g, "ConfigError", e.what(), e.key(), 2);
  } catch (const qst::ConvergenceError& e) {
    return report_error(g, "ConvergenceError", e.what(), "", 3);
  } catch (const qst::DomainError& e) {
    return report_error(g, "DomainError", e.what(), "", 3);
  } catch (const qst::TruncationError& e) {
    return report_error(g, "TruncationError", e.what(), "", 3);
  } catch (const qst::LayoutError& e) {
    return report_error(g, "LayoutError", e.what(), "", 3);
  } catch (const qst::IntegrationError& e) {
    return report_error(g, "IntegrationError", e.what(), "", 3);
  } catch (const std::exception& e) {
    return report_error(g, "Error", e.what(), "", 1);
  }
}
