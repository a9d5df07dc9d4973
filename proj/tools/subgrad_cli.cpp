// Config-driven experiment runner. Exit code 0 iff every acceptance check
// embedded in the experiment summaries passes.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "subgrad/subgrad.hpp"

namespace {

using namespace subgrad;

const char* experiment_problem(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::ArtificialCriticalPoint: return "abs_rademacher";
    case ExperimentKind::ArtifactAvoidance: return "identity_relu";
    case ExperimentKind::OnlineDeepLearning: return "teacher_2_3_1";
    case ExperimentKind::FlowVsInterpolation: return "quadratic2";
    case ExperimentKind::NorkinCounterexample: return "distance_to_c";
    case ExperimentKind::ScheduleSweep: return "abs_rademacher";
  }
  return "";
}

void print_checks(const json& summary) {
  for (const auto& c : summary.at("checks")) {
    std::cout << (c.at("pass").get<bool>() ? "[PASS] " : "[FAIL] ")
              << c.at("name").get<std::string>() << "  value="
              << c.at("value").get<double>() << " threshold="
              << c.at("threshold").get<double>();
    if (c.contains("note")) std::cout << "  (" << c.at("note").get<std::string>() << ")";
    std::cout << "\n";
  }
}

int cmd_run(const std::string& config_path) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  ProblemRegistry registry = builtin_problems();
  ExperimentResult res = run_experiment(cfg, registry);
  print_checks(res.summary);
  std::cout << (res.pass ? "PASS" : "FAIL") << "  summary: " << res.summary_path.string()
            << "  content_hash: " << res.summary.at("content_hash").get<std::string>()
            << "\n";
  return res.pass ? 0 : 1;
}

int cmd_validate(const std::string& config_path) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  ProblemRegistry registry = builtin_problems();
  registry.by_name(experiment_problem(cfg.kind));
  // creates the directory, which doubles as the writability check
  detail::OutputWriter probe(cfg.output_dir);
  std::cout << "config ok: experiment=" << experiment_name(cfg.kind)
            << " output_dir=" << cfg.output_dir.string() << " seed=" << cfg.seed << "\n";
  return 0;
}

int cmd_list_problems() {
  ProblemRegistry registry = builtin_problems();
  for (const auto& p : registry.all()) {
    std::cout << p.name() << "  w_dim=" << p.w_dim() << " s_dim=" << p.s_dim()
              << (p.closed_form() ? "  [closed-form risk]" : "") << "\n";
  }
  return 0;
}

int cmd_report(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "summary.json");
  if (!in.good()) {
    std::cerr << "no summary.json under " << dir << "\n";
    return 2;
  }
  json summary;
  in >> summary;
  std::cout << "experiment: " << summary.at("experiment").get<std::string>() << "\n";
  print_checks(summary);
  bool pass = summary.at("pass").get<bool>();
  std::cout << (pass ? "PASS" : "FAIL")
            << "  content_hash: " << summary.at("content_hash").get<std::string>() << "\n";
  return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nonsmooth subgradient-sampling experiment runner"};
  app.require_subcommand(1);

  std::string config_path, report_dir;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "config JSON path")->required();
  auto* validate = app.add_subcommand("validate", "validate a config without running");
  validate->add_option("config", config_path, "config JSON path")->required();
  auto* list = app.add_subcommand("list-problems", "list registered problems");
  auto* report = app.add_subcommand("report", "summarize an output directory");
  report->add_option("dir", report_dir, "experiment output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (run->parsed()) return cmd_run(config_path);
    if (validate->parsed()) return cmd_validate(config_path);
    if (list->parsed()) return cmd_list_problems();
    if (report->parsed()) return cmd_report(report_dir);
  } catch (const subgrad::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
