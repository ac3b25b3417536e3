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

// tutorwheel-server: runs one or more services from a config file until
// SIGINT or SIGTERM. Prints one {"service", "port"} line per listener.

#include <csignal>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "tutorwheel/service.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Tutorwheel service host"};
  std::string config_path;
  std::vector<std::string> service_names;
  std::string log_level = "info";
  app.add_option("-c,--config", config_path, "Gateway config JSON")->required()->check(CLI::ExistingFile);
  app.add_option("-s,--service", service_names,
                 "Service to run: teaching, autograde, events, feedback (repeatable; default all)");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");
  CLI11_PARSE(app, argc, argv);

  spdlog::set_level(spdlog::level::from_str(log_level));

  std::set<tutorwheel::Service> services;
  for (const auto& name : service_names) {
    const auto svc = tutorwheel::parse_service(name);
    if (!svc) {
      std::cerr << "unknown service: " << name << "\n";
      return 2;
    }
    services.insert(*svc);
  }
  if (services.empty()) services.insert(tutorwheel::kAllServices.begin(), tutorwheel::kAllServices.end());

  // Block the signals before any server thread starts so only sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  try {
    tutorwheel::ServiceHost host(tutorwheel::GatewayConfig::load(config_path));
    host.start(services);
    for (const auto svc : services) {
      std::cout << tutorwheel::Json{{"service", tutorwheel::to_string(svc)}, {"port", host.port(svc)}}.dump()
                << std::endl;
    }
    int received = 0;
    sigwait(&signals, &received);
    spdlog::info("signal {} received, shutting down", received);
    host.stop();
  } catch (const std::exception& ex) {
    spdlog::error("{}", ex.what());
    return 1;
  }
  return 0;
}
