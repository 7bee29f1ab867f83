#include "noma_tools/cli.hpp"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "noma/harness.hpp"

namespace noma {

namespace {

constexpr int kExitSelftestFailed = 3;

struct RunOptions {
  std::string config;
  std::string preset;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t blocks = 0;
  std::size_t threads = 0;
  std::vector<std::string> overrides;
  bool no_notes = false;
};

struct CodebookOptions {
  std::string dump;
  std::string load;
  std::string scheme = "scma";
  std::size_t n_ue = 6;
  std::size_t spreading_length = 4;
};

int do_run(const RunOptions& o, const CLI::App& cmd, std::ostream& out) {
  if (o.config.empty() == o.preset.empty()) {
    throw ConfigError("run: give exactly one of --config or --preset");
  }
  auto cfgs = o.config.empty() ? parse_experiments(find_preset(o.preset).config)
                               : load_experiments(o.config);
  for (auto& cfg : cfgs) {
    for (const auto& kv : o.overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
      };
      apply_config_key(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (cmd.count("--seed")) cfg.master_seed = o.seed;
    if (cmd.count("--blocks")) cfg.n_blocks = o.blocks;
    if (cmd.count("--threads")) cfg.threads = o.threads;
    cfg.validate();
  }
  std::vector<BlerRecord> records;
  for (const auto& cfg : cfgs) {
    auto r = run_sweep(cfg);
    out << "ran " << to_string(cfg.scheme) << '/' << to_string(cfg.receiver.detector) << '/'
        << to_string(cfg.receiver.strategy) << ": " << r.size() << " records\n";
    records.insert(records.end(), r.begin(), r.end());
  }
  emit_csv(records, o.out, o.no_notes ? std::vector<std::string>{} : csv_notes(cfgs));
  out << "wrote " << records.size() << " records to " << o.out << '\n';
  return kExitOk;
}

int do_presets(std::ostream& out) {
  for (const auto& p : presets()) {
    out << "[" << p.name << "] " << p.description << '\n' << p.config << '\n';
  }
  return kExitOk;
}

int do_codebook(const CodebookOptions& o, std::ostream& out) {
  if (o.dump.empty() == o.load.empty()) {
    throw ConfigError("codebook: give exactly one of --dump or --load");
  }
  if (!o.dump.empty()) {
    const auto kind = parse_scheme_kind(o.scheme);
    if (kind == SchemeKind::cb_ofdma) throw ConfigError("codebook: cb_ofdma has no codebook");
    SchemeParams params;
    params.spreading_length = o.spreading_length;
    const std::size_t block = kind == SchemeKind::scma ? 4 : o.spreading_length;
    const auto layout = build_scheme(kind, o.n_ue, block, params);
    save_codebook(codebook_from_layout(layout), o.dump);
    out << "wrote " << o.scheme << " codebook (" << o.n_ue << " layers) to " << o.dump << '\n';
    return kExitOk;
  }
  const auto cb = load_codebook(o.load);
  SchemeParams params;
  params.codebook = cb;
  const auto kind = cb.block_size == 4 && cb.n_layers <= kScmaCapacity ? SchemeKind::scma : SchemeKind::nls;
  const auto layout = build_scheme(kind, cb.n_layers, cb.block_size, params);
  out << o.load << ": M=" << cb.m << " L=" << cb.block_size << " layers=" << cb.n_layers
      << " max d_f=" << *std::max_element(layout.d_f.begin(), layout.d_f.end())
      << (layout.is_spread() ? " (linear spreading)" : "") << '\n';
  return kExitOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Link-level simulator for uplink NoMA with iterative multi-user receivers", "noma_sim"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run a BLER sweep and write CSV records");
  run->add_option("--config", run_opts.config, "Experiment config file (key = value lines)");
  run->add_option("--preset", run_opts.preset, "Named preset instead of a config file");
  run->add_option("--out", run_opts.out, "Output CSV path")->required();
  run->add_option("--seed", run_opts.seed, "Master seed override");
  run->add_option("--blocks", run_opts.blocks, "Blocks per SNR point override");
  run->add_option("--threads", run_opts.threads, "Worker threads (0 = all cores)");
  run->add_option("--set", run_opts.overrides, "Config override key=value (repeatable)");
  run->add_flag("--no-notes", run_opts.no_notes, "Omit the '#' note lines in the CSV");

  auto* list = app.add_subcommand("presets", "List the named desk-scale presets");
  auto* self = app.add_subcommand("selftest", "Run the built-in oracle and property checks");

  CodebookOptions cb_opts;
  auto* cb = app.add_subcommand("codebook", "Dump or check a codebook file");
  cb->add_option("--dump", cb_opts.dump, "Write the default codebook to this file");
  cb->add_option("--load", cb_opts.load, "Load and validate a codebook file");
  cb->add_option("--scheme", cb_opts.scheme, "scma or nls (for --dump)");
  cb->add_option("--n-ue", cb_opts.n_ue, "Number of layers (for --dump)");
  cb->add_option("--spreading-length", cb_opts.spreading_length, "NLS spreading length (for --dump)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  try {
    if (*run) return do_run(run_opts, *run, out);
    if (*list) return do_presets(out);
    if (*self) return run_selftest(out) == 0 ? kExitOk : kExitSelftestFailed;
    if (*cb) return do_codebook(cb_opts, out);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace noma
