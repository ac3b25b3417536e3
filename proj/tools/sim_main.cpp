// Copyright 2026 The Tutorwheel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// classroom-sim: generate synthetic cohorts, replay them against running
// services and render run reports.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tutorwheel/classroom_sim.hpp"

namespace sim = tutorwheel::sim;
using tutorwheel::Json;

namespace {

Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw tutorwheel::Error("cannot read " + path);
  return Json::parse(in);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw tutorwheel::Error("cannot write " + path);
  out << text << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic classroom driver"};
  app.require_subcommand(1);
  spdlog::set_level(spdlog::level::warn);

  auto* templates = app.add_subcommand("templates", "List scenario templates");

  std::string tmpl;
  std::uint64_t seed = 7;
  std::string out_path = "-";
  auto* generate = app.add_subcommand("generate", "Write a scenario as JSON");
  generate->add_option("-t,--template", tmpl, "Template name")->required();
  generate->add_option("--seed", seed, "RNG seed");
  generate->add_option("-o,--out", out_path, "Output file ('-' for stdout)");

  std::string scenario_path;
  std::string endpoints_path;
  std::string report_path;
  std::string format = "table";
  sim::ReplayOptions options;
  auto* replay = app.add_subcommand("replay", "Drive a scenario through the services");
  auto* from_file = replay->add_option("--scenario", scenario_path, "Scenario JSON file");
  replay->add_option("-t,--template", tmpl, "Generate this template instead of reading a file")
      ->excludes(from_file);
  replay->add_option("--seed", seed, "RNG seed for --template");
  replay->add_option("-e,--endpoints", endpoints_path, "Endpoints JSON")->required();
  replay->add_flag("--strict", options.strict, "Exit non-zero on any divergence");
  replay->add_flag("--allow-live", options.allow_live, "Permit a non-scripted model backend");
  replay->add_option("--from", options.from, "Start of the replayed fraction")->check(CLI::Range(0.0, 1.0));
  replay->add_option("--to", options.to, "End of the replayed fraction")->check(CLI::Range(0.0, 1.0));
  replay->add_option("--report", report_path, "Also write the JSON run report here");
  replay->add_option("--format", format, "table or json")->check(CLI::IsMember({"table", "json"}));

  std::string input;
  auto* report = app.add_subcommand("report", "Render a saved run report");
  report->add_option("input", input, "Run report JSON")->required();
  report->add_option("--format", format, "table or json")->check(CLI::IsMember({"table", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*templates) {
      for (const auto& name : sim::template_names()) std::cout << name << "\n";
    } else if (*generate) {
      write_text(out_path, sim::to_json(sim::generate(tmpl, seed)).dump(2));
    } else if (*replay) {
      if (scenario_path.empty() && tmpl.empty()) {
        std::cerr << "replay needs --scenario or --template\n";
        return 2;
      }
      const auto scenario = scenario_path.empty() ? sim::generate(tmpl, seed)
                                                  : sim::scenario_from_json(read_json(scenario_path));
      const auto endpoints = sim::Endpoints::load(endpoints_path);
      sim::RunReport result;
      int status = 0;
      try {
        result = sim::replay(scenario, endpoints, options);
      } catch (const sim::DivergenceFailure& ex) {
        result = ex.report();
        status = 3;
      }
      if (!report_path.empty()) write_text(report_path, sim::to_json(result).dump(2));
      std::cout << sim::render_report(result, format) << "\n";
      return status;
    } else if (*report) {
      std::cout << sim::render_report(sim::run_report_from_json(read_json(input)), format) << "\n";
    }
  } catch (const sim::EndpointUnreachable& ex) {
    std::cerr << ex.what() << "\n";
    return 4;
  } catch (const std::exception& ex) {
    std::cerr << ex.what() << "\n";
    return 1;
  }
  return 0;
}
