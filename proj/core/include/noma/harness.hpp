#pragma once

// Monte Carlo BLER sweeps: configuration, trial seeding, CSV records.
//
// bler = block_errors / (n_blocks * n_ue): one block per UE per trial, so
// the rate is averaged over UEs.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "noma/receiver.hpp"

namespace noma {

// Trial streams are keyed by SNR index; this offset keeps them disjoint from
// any other use of the master seed.
inline constexpr std::uint64_t kTrialStreamBase = 0x1000;

struct ExperimentConfig {
  std::string name;
  SchemeKind scheme = SchemeKind::cb_ofdma;
  SchemeParams scheme_params;
  std::string codebook_file;  // optional; loaded into scheme_params.codebook
  std::size_t n_ue = 6;
  // When n_re is 0 it is derived so that every UE carries `coded_bits`.
  std::size_t n_re = 0;
  std::size_t coded_bits = 192;
  // LDPC codeword length; 0 uses the coded bits of one UE. Other lengths are
  // rate matched (repetition or puncturing) to the layout.
  std::size_t code_length = 0;
  std::size_t n_rx = 2;
  std::size_t tbs_bits = 80;
  int bp_iterations = kDefaultBpIterations;
  std::uint64_t code_seed = kDefaultCodeSeed;
  std::size_t coherence_re = kDefaultCoherenceRe;
  OuterLoopConfig receiver;
  std::vector<double> snr_db;
  std::vector<double> power_offsets_db;  // per UE, added to snr_db; empty = equal power
  std::size_t n_blocks = 2000;
  std::uint64_t master_seed = 1;
  std::size_t threads = 0;           // 0: hardware concurrency
  bool shuffle_trials = false;       // execution order only; results are unchanged
  std::uint64_t shuffle_seed = 0;

  std::size_t resolved_n_re() const;
  // Throws ConfigError when a component cannot be built.
  void validate() const;
};

struct BlerRecord {
  std::string scheme;
  std::string detector;
  std::string ic;
  int ol = 0;
  double snr_db = 0.0;
  std::size_t n_blocks = 0;
  std::size_t block_errors = 0;
  double bler = 0.0;
  double mean_ol_used = 0.0;
  double op_count_mean = 0.0;
  std::uint64_t wall_seed = 0;

  friend bool operator==(const BlerRecord&, const BlerRecord&) = default;
};

// Flat "key = value" text, '#' starts a comment. The keys scheme, detector
// and ic accept comma-separated lists; the result is their cartesian product
// in scheme, detector, ic order.
std::vector<ExperimentConfig> parse_experiments(const std::string& text);
std::vector<ExperimentConfig> load_experiments(const std::string& path);
// Applies one key to a config; unknown keys and bad values raise ConfigError.
void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct Preset {
  std::string name;
  std::string description;
  std::string config;  // text accepted by parse_experiments
};

const std::vector<Preset>& presets();
const Preset& find_preset(const std::string& name);

// The layout, code and SNR list an experiment runs on.
struct ExperimentSetup {
  SchemeLayout layout;
  CodeConfig code;
};
ExperimentSetup build_setup(const ExperimentConfig& cfg);

// One Monte Carlo trial: payloads, channel, receiver. Exposed for tests.
struct TrialOutcome {
  std::vector<std::size_t> errors_per_ol;  // size max_outer_iterations + 1
  std::vector<std::uint64_t> ops_per_ol;
  std::size_t ol_used = 0;                 // outer iterations actually run - 1
};
TrialOutcome run_trial(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                       std::size_t snr_index, std::size_t trial);

// Records for every (OL, SNR) pair with OL = 0..max_outer_iterations; OL k
// reads the receiver state after outer iteration k.
std::vector<BlerRecord> run_sweep(const ExperimentConfig& cfg);

// Deterministic order: scheme, detector, ic, ol, snr.
void sort_records(std::vector<BlerRecord>& records);

inline const char* kCsvHeader =
    "scheme,detector,ic,ol,snr_db,n_blocks,block_errors,bler,mean_ol_used,op_count_mean,wall_seed";

// Header plus one line per record (sorted copy); floats with 6 significant
// digits. `notes` are written first as '#' lines.
void emit_csv(const std::vector<BlerRecord>& records, std::ostream& out,
              const std::vector<std::string>& notes = {});
void emit_csv(const std::vector<BlerRecord>& records, const std::string& path,
              const std::vector<std::string>& notes = {});
std::vector<BlerRecord> parse_csv(const std::string& text);

// Notes describing the SNR definition and scheme caveats for a set of runs.
std::vector<std::string> csv_notes(const std::vector<ExperimentConfig>& cfgs);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};
// Wilson score interval, 95 % by default.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.959963984540054);
bool intervals_overlap(const Interval& a, const Interval& b);

// SNR where BLER first crosses `target`, interpolating linearly in
// log10(BLER) between neighbouring points (points sorted by SNR). Zero BLER
// is floored at 0.5 / n_blocks. A curve already at or below the target at
// its lowest SNR returns that SNR; nothing if the curve never gets there.
std::optional<double> snr_at_bler(std::vector<BlerRecord> curve, double target = 0.1);

}  // namespace noma
