// Copyright 2026 The LocAt Authors. All Rights Reserved.
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

// Command-line front end: train, probe, gradcheck, analyze, export-attn,
// params.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "locat/analytics.hpp"
#include "locat/checkpoint.hpp"
#include "locat/config.hpp"
#include "locat/data.hpp"
#include "locat/errors.hpp"
#include "locat/gradcheck.hpp"
#include "locat/model.hpp"
#include "locat/train.hpp"

namespace {

using namespace locat;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> kernel, scaling, pooling, locat;
  bool no_pos_embed = false;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "key = value config file");
  cmd->add_option("--seed", f.seed, "model seed");
  cmd->add_option("--kernel", f.kernel, "gaussian|isotropic|fixed[:sigma]|laplace|inverse");
  cmd->add_option("--scaling", f.scaling, "learned|none|auto");
  cmd->add_option("--pooling", f.pooling, "cls|gap|prr");
  cmd->add_option("--locat", f.locat, "on|off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_flag("--no-pos-embed", f.no_pos_embed, "disable positional embeddings");
  cmd->add_option("--out", f.out, "output directory or prefix");
}

/// Config file first, then flags.
train::RunConfig resolve(const CommonFlags& f, const ModelConfig& base) {
  if (f.locat && *f.locat == "off" && (f.kernel || f.scaling)) {
    throw UsageError("--locat off conflicts with --kernel/--scaling");
  }
  train::RunConfig rc;
  rc.model = base;
  if (!f.config.empty()) {
    for (const auto& [k, v] : read_key_values(f.config)) {
      if (!rc.apply(k, v)) throw UsageError("unknown config key '" + k + "' in " + f.config);
    }
  }
  if (f.seed) rc.model.seed = *f.seed;
  if (f.kernel) rc.model.kernel = gaug::parse_kernel(*f.kernel);
  if (f.scaling) rc.model.scaling = gaug::parse_scaling(*f.scaling);
  if (f.pooling) rc.apply("pooling", *f.pooling);
  if (f.locat) rc.model.locat_enabled = *f.locat == "on";
  if (f.no_pos_embed) rc.model.use_pos_embed = false;
  if (!f.out.empty()) rc.out_dir = f.out;
  rc.validate();
  return rc;
}

int cmd_params(const CommonFlags& f) {
  const auto rc = resolve(f, desk_config());
  std::cout << count_locat_params(rc.model) << '\n';
  return 0;
}

int cmd_train(const CommonFlags& f) {
  auto rc = resolve(f, desk_config());
  if (rc.out_dir.empty()) rc.out_dir = "run";
  const auto result = train::train(rc);
  const auto& last = result.metrics.back();
  std::printf("trained %zu epochs: train_loss %.6f val_accuracy %.4f -> %s\n", result.metrics.size(),
              last.train_loss, last.val_accuracy, rc.out_dir.string().c_str());
  return 0;
}

int cmd_probe(const CommonFlags& f, const std::string& checkpoint, std::size_t seeds) {
  auto rc = resolve(f, desk_config());
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!rc.out_dir.empty()) {
    std::filesystem::create_directories(rc.out_dir);
    file.open(rc.out_dir / "probe.csv");
    if (!file) throw FormatError("cannot write " + (rc.out_dir / "probe.csv").string());
    out = &file;
  }
  *out << "seed,variant,patch_accuracy\n";
  if (!checkpoint.empty()) {
    const auto [cfg, params] = load_checkpoint(checkpoint);
    rc.model = cfg;
    const double acc = train::dense_probe(cfg, params, rc.dense_task(), rc);
    *out << cfg.seed << ',' << (cfg.locat_enabled ? "locat" : "vanilla") << ','
         << format_double(acc) << '\n';
    return 0;
  }
  // Train both variants per seed, then probe each.
  for (std::size_t s = 0; s < seeds; ++s) {
    for (const bool locat_on : {false, true}) {
      train::RunConfig run = rc;
      run.out_dir.clear();
      run.model.seed = rc.model.seed + s;
      if (!locat_on) run.model = run.model.vanilla();
      const auto trained = train::train(run);
      const double acc = train::dense_probe(run.model, trained.params, run.dense_task(), run);
      *out << run.model.seed << ',' << (locat_on ? "locat" : "vanilla") << ',' << format_double(acc)
           << '\n';
      out->flush();
    }
  }
  return 0;
}

int cmd_gradcheck(const CommonFlags& f, double tol) {
  const auto rc = resolve(f, gradcheck_config());
  const auto report = grad::gradcheck(grad::make_case(rc.model, rc.model.seed));
  if (!rc.out_dir.empty()) {
    std::ofstream csv(rc.out_dir);
    if (!csv) throw FormatError("cannot write " + rc.out_dir.string());
    report.write_csv(csv);
  } else {
    report.write_csv(std::cout);
  }
  if (report.max_rel_err() > tol) {
    throw NumericError("gradcheck: max relative error " + format_double(report.max_rel_err()) +
                       " exceeds " + format_double(tol));
  }
  return 0;
}

std::vector<data::Sample> analysis_samples(const train::RunConfig& rc, std::size_t n) {
  return data::generate_dataset(rc.motif_task(), n, rc.train_samples);
}

int cmd_analyze(const CommonFlags& f, const std::string& checkpoint, std::size_t samples) {
  auto rc = resolve(f, desk_config());
  const auto [cfg, params] = load_checkpoint(checkpoint);
  rc.model = cfg;
  std::vector<Trace> traces;
  for (const auto& s : analysis_samples(rc, samples)) traces.push_back(*forward(s.image, cfg, params, true).trace);
  const auto grid = PatchGrid::get(cfg.grid_side(), cfg.grid_side());
  const auto stats = analytics::layer_statistics(traces, *grid);
  if (!rc.out_dir.empty()) {
    std::ofstream csv(rc.out_dir);
    if (!csv) throw FormatError("cannot write " + rc.out_dir.string());
    analytics::write_stats_csv(csv, stats);
  } else {
    analytics::write_stats_csv(std::cout, stats);
  }
  return 0;
}

int cmd_export(const CommonFlags& f, const std::string& checkpoint, std::size_t index,
               std::size_t token, const std::string& layer, std::optional<std::size_t> head) {
  auto rc = resolve(f, desk_config());
  if (rc.out_dir.empty()) throw UsageError("export-attn requires --out <prefix>");
  const auto [cfg, params] = load_checkpoint(checkpoint);
  rc.model = cfg;
  const auto sample = data::generate_sample(rc.motif_task(), rc.train_samples + index);
  const auto trace = *forward(sample.image, cfg, params, true).trace;
  const auto grid = PatchGrid::get(cfg.grid_side(), cfg.grid_side());
  analytics::export_attention(trace, *grid, token, analytics::AttentionSource::parse(layer),
                              rc.out_dir, head);
  std::printf("wrote %s.csv and %s.pgm\n", rc.out_dir.string().c_str(), rc.out_dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LocAt vision transformer toolkit"};
  app.require_subcommand(1);

  CommonFlags f;
  std::string checkpoint, layer = "0";
  std::size_t seeds = 5, samples = 32, index = 0, token = 0;
  std::optional<std::size_t> head;
  double tol = 1e-4;

  auto* train_cmd = app.add_subcommand("train", "train on the synthetic motif task");
  auto* probe_cmd = app.add_subcommand("probe", "dense linear probe on frozen features");
  auto* grad_cmd = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  auto* analyze_cmd = app.add_subcommand("analyze", "locality, CLS similarity and sigma statistics");
  auto* export_cmd = app.add_subcommand("export-attn", "export one attention map as CSV and PGM");
  auto* params_cmd = app.add_subcommand("params", "print the number of locality parameters");
  for (auto* c : {train_cmd, probe_cmd, grad_cmd, analyze_cmd, export_cmd, params_cmd}) add_common(c, f);

  probe_cmd->add_option("--checkpoint", checkpoint, "probe this checkpoint instead of training");
  probe_cmd->add_option("--seeds", seeds, "seeds for the vanilla vs LocAt comparison");
  grad_cmd->add_option("--tolerance", tol, "maximum relative error");
  analyze_cmd->add_option("--checkpoint", checkpoint)->required();
  analyze_cmd->add_option("--samples", samples, "held-out images to average over");
  export_cmd->add_option("--checkpoint", checkpoint)->required();
  export_cmd->add_option("--index", index, "held-out image index");
  export_cmd->add_option("--token", token, "query token (0 = CLS)");
  export_cmd->add_option("--layer", layer, "layer index or prr");
  export_cmd->add_option("--head", head, "single head instead of the head mean");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train_cmd) return cmd_train(f);
    if (*probe_cmd) return cmd_probe(f, checkpoint, seeds);
    if (*grad_cmd) return cmd_gradcheck(f, tol);
    if (*analyze_cmd) return cmd_analyze(f, checkpoint, samples);
    if (*export_cmd) return cmd_export(f, checkpoint, index, token, layer, head);
    if (*params_cmd) return cmd_params(f);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
