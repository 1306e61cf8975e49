// styleforge command line: inspect, stylize, bench, train, finetune, synth.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "styleforge/error.hpp"
#include "styleforge/flow.hpp"
#include "styleforge/pipeline.hpp"
#include "styleforge/stylenet.hpp"

namespace fs = std::filesystem;
using namespace styleforge;

namespace {

std::pair<int, int> parse_extent(const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw InvalidArgument("expected WxH, got '" + text + "'");
  try {
    std::size_t used_w = 0, used_h = 0;
    const int w = std::stoi(text.substr(0, x), &used_w);
    const int h = std::stoi(text.substr(x + 1), &used_h);
    if (used_w != x || used_h != text.size() - x - 1 || w < 1 || h < 1) throw std::exception();
    return {w, h};
  } catch (const std::exception&) {
    throw InvalidArgument("expected WxH, got '" + text + "'");
  }
}

std::vector<std::pair<int, int>> parse_extents(const std::string& text) {
  std::vector<std::pair<int, int>> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    out.push_back(parse_extent(text.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct InspectArgs {
  double alpha = 1.0;
  double beta = 1.0;
  std::string variant = "paper";
  bool all = false;
};

int run_inspect(const InspectArgs& a) {
  std::vector<SizeRow> rows;
  if (a.all) {
    for (const auto& c : size_study_configs()) rows.push_back(size_row(c));
  } else {
    ArchConfig c{static_cast<float>(a.alpha), static_cast<float>(a.beta),
                 parse_variant(a.variant)};
    c.validate();
    rows.push_back(size_row(c));
  }
  std::cout << format_size_table(rows);
  return 0;
}

struct StylizeArgs {
  std::string model, in, out, resize;
  int workers = 1;
};

int run_stylize(const StylizeArgs& a) {
  const StyleNetModel model = load(a.model);
  StylizeOptions opts;
  opts.workers = a.workers;
  if (!a.resize.empty()) opts.resize = parse_extent(a.resize);
  const auto rep = stylize_directory(model, a.in, a.out, opts, &std::cout);
  double total = 0.0;
  for (double ms : rep.frame_ms) total += ms;
  std::cout << rep.outputs.size() << " frames, mean " << total / rep.outputs.size()
            << " ms/frame\n";
  return 0;
}

struct BenchArgs {
  std::string configs, model, frames, resolution = "480x320,320x240", report;
  int loop = 1;
  std::uint64_t seed = 0;
};

int run_bench(const BenchArgs& a) {
  std::vector<StyleNetModel> models;
  if (!a.model.empty()) {
    models.push_back(load(a.model));
  } else {
    if (a.configs.empty()) throw InvalidArgument("bench needs --configs or --model");
    for (const auto& c : parse_config_list(a.configs)) models.push_back(build(c, a.seed));
  }
  const auto frames = FrameSequence::scan(a.frames).load();
  const auto extents = parse_extents(a.resolution);
  std::vector<BenchResult> rows;
  for (const auto& m : models) {
    for (const auto& [w, h] : extents) {
      rows.push_back(bench_model(m, frames, w, h, a.loop));
      const auto& r = rows.back();
      std::cout << r.config.label() << " " << w << "x" << h << " params " << r.params
                << " fps " << r.fps() << " forward-only fps " << r.forward_fps() << "\n";
    }
  }
  const std::string host = host_description();
  std::cout << "host: " << host << "\n";
  if (!a.report.empty()) {
    std::ofstream out(a.report);
    if (!out) throw IoError(a.report + ": cannot open for writing");
    write_bench_csv(out, rows, host);
    if (!out) throw IoError(a.report + ": write failed");
  }
  return 0;
}

struct JobArgs {
  std::string config, data, out, model;
};

int run_job(const JobArgs& a, bool finetune) {
  TrainJob job = load_train_config(a.config);
  if (!a.model.empty()) job.model = a.model;
  const auto out = finetune ? run_finetune(job, a.data, a.out, std::cout)
                            : run_train(job, a.data, a.out, std::cout);
  std::cout << "model " << out.model.string() << "\ntrace " << out.trace.string() << "\n";
  return 0;
}

struct SynthArgs {
  std::string out, size = "64x64";
  int length = 8, u = 1, v = 0;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  const auto [w, h] = parse_extent(a.size);
  write_sequence(synth_sequence(a.seed, a.length, h, w, a.u, a.v), a.out);
  std::cout << a.length << " frames written to " << a.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mobile-scale feed-forward video style transfer"};
  app.require_subcommand(1);

  InspectArgs inspect;
  auto* cmd_inspect = app.add_subcommand("inspect", "Parameter count and model size of a configuration");
  cmd_inspect->add_option("--alpha", inspect.alpha, "Width multiplier");
  cmd_inspect->add_option("--beta", inspect.beta, "Depth multiplier");
  cmd_inspect->add_option("--variant", inspect.variant, "paper or legacy_v1")
      ->check(CLI::IsMember({"paper", "legacy_v1"}));
  cmd_inspect->add_flag("--all", inspect.all, "All 15 configurations of the size study");

  StylizeArgs stylize;
  auto* cmd_stylize = app.add_subcommand("stylize", "Stylize a directory of PPM frames");
  cmd_stylize->add_option("--model", stylize.model, "KSTM model")->required();
  cmd_stylize->add_option("--in", stylize.in, "Input frame directory")->required();
  cmd_stylize->add_option("--out", stylize.out, "Output frame directory")->required();
  cmd_stylize->add_option("--resize", stylize.resize, "Resize frames to WxH first");
  cmd_stylize->add_option("--workers", stylize.workers, "Worker threads")
      ->check(CLI::PositiveNumber);

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "Throughput of configurations or a model");
  cmd_bench->add_option("--configs", bench.configs, "'all' or alpha:beta[:variant],...");
  cmd_bench->add_option("--model", bench.model, "KSTM model instead of --configs");
  cmd_bench->add_option("--frames", bench.frames, "Frame directory")->required();
  cmd_bench->add_option("--resolution", bench.resolution, "WxH[,WxH...]");
  cmd_bench->add_option("--loop", bench.loop, "Passes over the frames")
      ->check(CLI::PositiveNumber);
  cmd_bench->add_option("--report", bench.report, "CSV report path");
  cmd_bench->add_option("--seed", bench.seed, "Initialization seed for --configs");

  JobArgs train, finetune;
  auto add_job = [&](const char* name, const char* help, JobArgs& args) {
    auto* cmd = app.add_subcommand(name, help);
    cmd->add_option("--config", args.config, "key=value job file")->required();
    cmd->add_option("--data", args.data, "Data directory")->required();
    cmd->add_option("--out", args.out, "Output KSTM model")->required();
    cmd->add_option("--model", args.model, "Starting model (overrides the job file)");
    return cmd;
  };
  auto* cmd_train = add_job("train", "Stage 1: content, style and TV losses", train);
  auto* cmd_finetune = add_job("finetune", "Stage 2: temporal fine-tuning", finetune);

  SynthArgs synth;
  auto* cmd_synth = app.add_subcommand("synth", "Write a synthetic translating clip");
  cmd_synth->add_option("--out", synth.out, "Output directory")->required();
  cmd_synth->add_option("--length", synth.length, "Frame count")->check(CLI::Range(2, 100000));
  cmd_synth->add_option("--size", synth.size, "WxH");
  cmd_synth->add_option("--u", synth.u, "Horizontal pixels per frame");
  cmd_synth->add_option("--v", synth.v, "Vertical pixels per frame");
  cmd_synth->add_option("--seed", synth.seed, "Texture seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_inspect->parsed()) return run_inspect(inspect);
    if (cmd_stylize->parsed()) return run_stylize(stylize);
    if (cmd_bench->parsed()) return run_bench(bench);
    if (cmd_train->parsed()) return run_job(train, false);
    if (cmd_finetune->parsed()) return run_job(finetune, true);
    if (cmd_synth->parsed()) return run_synth(synth);
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
