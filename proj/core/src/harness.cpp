#include "noma/harness.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

namespace noma {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream in(value);
  T v{};
  in >> v;
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigError("config key '" + key + "': cannot parse '" + value + "'");
  }
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  const auto v = parse_number<long long>(key, value);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

// "0, 2, 4" or "start:step:stop" (inclusive).
std::vector<double> parse_snr_list(const std::string& value) {
  std::vector<double> out;
  for (const auto& item : split(value, ',')) {
    auto parts = split(item, ':');
    if (parts.size() == 1) {
      out.push_back(parse_number<double>("snr_db", parts[0]));
    } else if (parts.size() == 3) {
      const double a = parse_number<double>("snr_db", parts[0]);
      const double step = parse_number<double>("snr_db", parts[1]);
      const double b = parse_number<double>("snr_db", parts[2]);
      if (!(step > 0.0) || b < a) throw ConfigError("snr_db range '" + item + "' is empty");
      const auto n = static_cast<std::size_t>(std::floor((b - a) / step + 1e-9));
      for (std::size_t i = 0; i <= n; ++i) out.push_back(a + step * static_cast<double>(i));
    } else {
      throw ConfigError("snr_db: cannot parse '" + item + "'");
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::size_t log2_exact(std::size_t m, const char* what) {
  if (m < 2 || !std::has_single_bit(m)) {
    throw ConfigError(std::string(what) + " must be a power of two >= 2");
  }
  return static_cast<std::size_t>(std::countr_zero(m));
}

}  // namespace

std::size_t ExperimentConfig::resolved_n_re() const {
  if (n_re) return n_re;
  std::size_t bps = 0;
  std::size_t block = 1;
  if (scheme_params.codebook) {
    bps = log2_exact(scheme_params.codebook->m, "codebook size");
    block = scheme_params.codebook->block_size;
  } else if (scheme == SchemeKind::cb_ofdma) {
    bps = log2_exact(static_cast<std::size_t>(std::max(scheme_params.qam_order, 0)), "qam_order");
  } else {
    bps = 2;
    block = scheme == SchemeKind::scma ? 4 : scheme_params.spreading_length;
  }
  if (coded_bits == 0 || coded_bits % bps) {
    throw ConfigError("coded_bits " + std::to_string(coded_bits) + " is not a multiple of " +
                      std::to_string(bps) + " bits per symbol");
  }
  return coded_bits / bps * block;
}

void ExperimentConfig::validate() const {
  if (n_blocks < 1) throw ConfigError("n_blocks must be at least 1");
  if (snr_db.empty()) throw ConfigError("snr_db list is empty");
  if (n_ue < 1) throw ConfigError("n_ue must be at least 1");
  if (n_rx < 1) throw ConfigError("n_rx must be at least 1");
  if (!power_offsets_db.empty() && power_offsets_db.size() != n_ue) {
    throw ConfigError("power_offsets_db needs one value per UE");
  }
  if (receiver.max_outer_iterations < 0) throw ConfigError("outer_iterations must be non-negative");
  if (receiver.detector == DetectorKind::brute_force) {
    throw ConfigError("the brute-force oracle is a test tool, not a sweep detector");
  }
  (void)build_setup(*this);
}

void apply_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "name") cfg.name = value;
  else if (key == "scheme") cfg.scheme = parse_scheme_kind(value);
  else if (key == "detector") cfg.receiver.detector = parse_detector_kind(value);
  else if (key == "ic") cfg.receiver.strategy = parse_ic_strategy(value);
  else if (key == "n_ue") cfg.n_ue = parse_count(key, value);
  else if (key == "n_re") cfg.n_re = parse_count(key, value);
  else if (key == "coded_bits") cfg.coded_bits = parse_count(key, value);
  else if (key == "code_length") cfg.code_length = parse_count(key, value);
  else if (key == "power_offsets_db") {
    cfg.power_offsets_db.clear();
    for (const auto& v : split(value, ',')) cfg.power_offsets_db.push_back(parse_number<double>(key, v));
  }
  else if (key == "n_rx") cfg.n_rx = parse_count(key, value);
  else if (key == "tbs_bits") cfg.tbs_bits = parse_count(key, value);
  else if (key == "bp_iterations") cfg.bp_iterations = parse_number<int>(key, value);
  else if (key == "code_seed") cfg.code_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "coherence_re") cfg.coherence_re = parse_count(key, value);
  else if (key == "outer_iterations") cfg.receiver.max_outer_iterations = parse_number<int>(key, value);
  else if (key == "inner_iterations") cfg.receiver.inner_iterations = parse_number<int>(key, value);
  else if (key == "epa_damping") cfg.receiver.epa_damping = parse_number<double>(key, value);
  else if (key == "mpa_degree_cap") cfg.receiver.mpa_degree_cap = parse_count(key, value);
  else if (key == "qam_order") cfg.scheme_params.qam_order = parse_number<int>(key, value);
  else if (key == "spreading_length") cfg.scheme_params.spreading_length = parse_count(key, value);
  else if (key == "codebook") {
    cfg.codebook_file = value;
    cfg.scheme_params.codebook = load_codebook(value);
  }
  else if (key == "snr_db") cfg.snr_db = parse_snr_list(value);
  else if (key == "n_blocks") cfg.n_blocks = parse_count(key, value);
  else if (key == "seed") cfg.master_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "threads") cfg.threads = parse_count(key, value);
  else if (key == "shuffle_trials") cfg.shuffle_trials = parse_bool(key, value);
  else if (key == "shuffle_seed") cfg.shuffle_seed = parse_number<std::uint64_t>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::vector<ExperimentConfig> parse_experiments(const std::string& text) {
  ExperimentConfig base;
  std::vector<std::string> schemes{"cb_ofdma"}, detectors{"epa"}, ics{"hybrid_pic"};
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key == "scheme" || key == "detector" || key == "ic") {
      auto items = split(value, ',');
      if (items.empty()) throw ConfigError("config key '" + key + "' is empty");
      for (const auto& v : items) apply_config_key(base, key, v);  // validates names
      (key == "scheme" ? schemes : key == "detector" ? detectors : ics) = items;
    } else {
      apply_config_key(base, key, value);
    }
  }
  std::vector<ExperimentConfig> out;
  for (const auto& s : schemes) {
    for (const auto& d : detectors) {
      for (const auto& ic : ics) {
        auto cfg = base;
        apply_config_key(cfg, "scheme", s);
        apply_config_key(cfg, "detector", d);
        apply_config_key(cfg, "ic", ic);
        out.push_back(std::move(cfg));
      }
    }
  }
  return out;
}

std::vector<ExperimentConfig> load_experiments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiments(ss.str());
}

const std::vector<Preset>& presets() {
  // CB-OFDMA presets: 96 REs, a length-192 code shortened to 32 + 16 CRC
  // information bits (about 0.5 bit per RE and UE). Scheme comparisons use
  // equal resources (384 REs) and a full rate-1/2 code, the most the M = 4
  // SCMA codebook can carry there; CB-OFDMA repeats its codeword 4 times.
  static const std::vector<Preset> list = {
      {"fig3_cbofdma_6ue",
       "CB-OFDMA, 6 UEs, MMSE + hybrid PIC, BLER per outer iteration",
       "name = fig3_cbofdma_6ue\n"
       "scheme = cb_ofdma\nn_ue = 6\nn_rx = 2\nn_re = 96\ntbs_bits = 32\n"
       "detector = mmse\nic = hybrid_pic\nouter_iterations = 3\n"
       "snr_db = 3:3:15\nn_blocks = 2000\nseed = 3\n"},
      {"fig4_ic_comparison",
       "CB-OFDMA, 6 UEs, MMSE, OL 3: hard SIC, enhanced SIC, soft PIC, hybrid PIC",
       "name = fig4_ic_comparison\n"
       "scheme = cb_ofdma\nn_ue = 6\nn_rx = 2\nn_re = 96\ntbs_bits = 32\n"
       "detector = mmse\nic = hard_sic, enhanced_sic, soft_pic, hybrid_pic\nouter_iterations = 3\n"
       "snr_db = 3:3:15\nn_blocks = 2000\nseed = 4\n"},
      {"fig5_detector_comparison",
       "CB-OFDMA, 6 UEs, hybrid PIC: EPA vs MMSE vs ESE over outer iterations",
       "name = fig5_detector_comparison\n"
       "scheme = cb_ofdma\nn_ue = 6\nn_rx = 2\nn_re = 96\ntbs_bits = 32\n"
       "detector = epa, mmse, ese\nic = hybrid_pic\nouter_iterations = 3\n"
       "snr_db = 3:3:15\nn_blocks = 2000\nseed = 5\n"},
      {"fig5_scma_epa_mpa",
       "SCMA, 6 UEs, hybrid PIC, OL 3: EPA vs MPA",
       "name = fig5_scma_epa_mpa\n"
       "scheme = scma\nn_ue = 6\nn_rx = 2\nn_re = 384\ntbs_bits = 80\n"
       "detector = epa, mpa\nic = hybrid_pic\nouter_iterations = 3\n"
       "snr_db = -4:1:-1\nn_blocks = 2000\nseed = 7\n"},
      {"fig6_scheme_comparison",
       "6 UEs on 384 REs, EPA + hybrid PIC, OL 3: SCMA vs CB-OFDMA vs NLS",
       "name = fig6_scheme_comparison\n"
       "scheme = scma, cb_ofdma, nls\nn_ue = 6\nn_rx = 2\nn_re = 384\ncode_length = 192\ntbs_bits = 80\n"
       "detector = epa\nic = hybrid_pic\nouter_iterations = 3\n"
       "snr_db = -7:1:-2\nn_blocks = 2000\nseed = 6\n"},
  };
  return list;
}

const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets()) {
    if (p.name == name) return p;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
  auto layout = build_scheme(cfg.scheme, cfg.n_ue, cfg.resolved_n_re(), cfg.scheme_params);
  const std::size_t n = cfg.code_length ? cfg.code_length : layout.coded_bits(0);
  if (n < 4 || n % 2) {
    throw ConfigError("coded bits per UE (" + std::to_string(n) + ") must be even and at least 4");
  }
  if (cfg.tbs_bits < 1 || cfg.tbs_bits + kCrcWidth > n / 2) {
    throw ConfigError("tbs_bits " + std::to_string(cfg.tbs_bits) + " plus CRC does not fit the " +
                      std::to_string(n / 2) + " information bits of a rate-1/2 code of length " +
                      std::to_string(n));
  }
  auto code = make_regular_ldpc(n, cfg.tbs_bits, cfg.code_seed, cfg.bp_iterations);
  return {std::move(layout), std::move(code)};
}

TrialOutcome run_trial(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                       std::size_t snr_index, std::size_t trial) {
  auto rng = trial_rng(cfg.master_seed, kTrialStreamBase + snr_index, trial);
  const auto& layout = setup.layout;
  const auto& code = setup.code;
  const std::size_t J = layout.n_layers;

  std::vector<Bits> payloads(J), coded(J);
  for (std::size_t j = 0; j < J; ++j) {
    payloads[j].resize(code.payload_bits());
    for (auto& b : payloads[j]) b = static_cast<std::uint8_t>(rng() >> 63);
    coded[j] = rate_match(ldpc_encode(build_info_block(payloads[j], code), code), layout.coded_bits(j));
  }
  const auto tx = map_all(coded, layout);
  const auto ch = generate_channel(layout, cfg.n_rx, cfg.coherence_re, rng);
  std::vector<double> snr(J, cfg.snr_db.at(snr_index));
  for (std::size_t j = 0; j < cfg.power_offsets_db.size() && j < J; ++j) snr[j] += cfg.power_offsets_db[j];
  const auto grid = apply_channel(tx, ch, snr, rng);
  const auto res = run_receiver(grid, layout, cfg.receiver, code);

  const auto max_ol = static_cast<std::size_t>(cfg.receiver.max_outer_iterations);
  TrialOutcome out;
  out.ol_used = res.snapshots.size() - 1;
  out.errors_per_ol.resize(max_ol + 1);
  out.ops_per_ol.resize(max_ol + 1);
  for (std::size_t ol = 0; ol <= max_ol; ++ol) {
    const auto& snap = res.snapshots[std::min(ol, out.ol_used)];
    std::size_t errors = 0;
    for (std::size_t j = 0; j < J; ++j) errors += snap.payload_decisions[j] != payloads[j];
    out.errors_per_ol[ol] = errors;
    out.ops_per_ol[ol] = snap.op_count;
  }
  return out;
}

std::vector<BlerRecord> run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto setup = build_setup(cfg);
  const std::size_t n_snr = cfg.snr_db.size();
  const std::size_t n_trials = cfg.n_blocks;
  const auto max_ol = static_cast<std::size_t>(cfg.receiver.max_outer_iterations);

  // Every (snr, trial) job writes its own slot; merging happens afterwards in
  // index order, so neither thread count nor execution order matter.
  std::vector<TrialOutcome> outcomes(n_snr * n_trials);
  std::vector<std::size_t> order(outcomes.size());
  std::iota(order.begin(), order.end(), 0);
  if (cfg.shuffle_trials) {
    Rng shuffler(cfg.shuffle_seed);
    std::shuffle(order.begin(), order.end(), shuffler);
  }
  std::size_t n_threads = cfg.threads ? cfg.threads : std::max(1U, std::thread::hardware_concurrency());
  n_threads = std::min(n_threads, outcomes.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    try {
      for (std::size_t i; (i = next.fetch_add(1)) < order.size();) {
        const std::size_t job = order[i];
        outcomes[job] = run_trial(cfg, setup, job / n_trials, job % n_trials);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = order.size();
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<BlerRecord> records;
  for (std::size_t ol = 0; ol <= max_ol; ++ol) {
    for (std::size_t s = 0; s < n_snr; ++s) {
      std::size_t errors = 0, ol_sum = 0;
      long double ops = 0;
      for (std::size_t t = 0; t < n_trials; ++t) {
        const auto& o = outcomes[s * n_trials + t];
        errors += o.errors_per_ol[ol];
        ol_sum += std::min(o.ol_used, ol);
        ops += static_cast<long double>(o.ops_per_ol[ol]);
      }
      BlerRecord r;
      r.scheme = to_string(cfg.scheme);
      r.detector = to_string(cfg.receiver.detector);
      r.ic = to_string(cfg.receiver.strategy);
      r.ol = static_cast<int>(ol);
      r.snr_db = cfg.snr_db[s];
      r.n_blocks = n_trials;
      r.block_errors = errors;
      r.bler = static_cast<double>(errors) / static_cast<double>(n_trials * cfg.n_ue);
      r.mean_ol_used = static_cast<double>(ol_sum) / static_cast<double>(n_trials);
      r.op_count_mean = static_cast<double>(ops / static_cast<long double>(n_trials));
      r.wall_seed = cfg.master_seed;
      records.push_back(std::move(r));
    }
  }
  sort_records(records);
  return records;
}

void sort_records(std::vector<BlerRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
    return std::tie(a.scheme, a.detector, a.ic, a.ol, a.snr_db) <
           std::tie(b.scheme, b.detector, b.ic, b.ol, b.snr_db);
  });
}

void emit_csv(const std::vector<BlerRecord>& records, std::ostream& out,
              const std::vector<std::string>& notes) {
  auto sorted = records;
  sort_records(sorted);
  for (const auto& n : notes) out << "# " << n << '\n';
  out << kCsvHeader << '\n';
  for (const auto& r : sorted) {
    out << r.scheme << ',' << r.detector << ',' << r.ic << ',' << r.ol << ','
        << format_double(r.snr_db) << ',' << r.n_blocks << ',' << r.block_errors << ','
        << format_double(r.bler) << ',' << format_double(r.mean_ol_used) << ','
        << format_double(r.op_count_mean) << ',' << r.wall_seed << '\n';
  }
}

void emit_csv(const std::vector<BlerRecord>& records, const std::string& path,
              const std::vector<std::string>& notes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write CSV file '" + path + "'");
  emit_csv(records, out, notes);
  out.flush();
  if (!out) throw IoError("error while writing CSV file '" + path + "'");
}

std::vector<BlerRecord> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool header = false;
  std::vector<BlerRecord> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kCsvHeader) throw ConfigError("CSV: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::string item;
    std::istringstream ls(line);
    while (std::getline(ls, item, ',')) f.push_back(item);
    if (f.size() != 11) throw ConfigError("CSV: expected 11 fields in '" + line + "'");
    BlerRecord r;
    r.scheme = f[0];
    r.detector = f[1];
    r.ic = f[2];
    r.ol = parse_number<int>("ol", f[3]);
    r.snr_db = parse_number<double>("snr_db", f[4]);
    r.n_blocks = parse_count("n_blocks", f[5]);
    r.block_errors = parse_count("block_errors", f[6]);
    r.bler = parse_number<double>("bler", f[7]);
    r.mean_ol_used = parse_number<double>("mean_ol_used", f[8]);
    r.op_count_mean = parse_number<double>("op_count_mean", f[9]);
    r.wall_seed = parse_number<std::uint64_t>("wall_seed", f[10]);
    out.push_back(std::move(r));
  }
  if (!header) throw ConfigError("CSV: missing header");
  return out;
}

std::vector<std::string> csv_notes(const std::vector<ExperimentConfig>& cfgs) {
  std::vector<std::string> notes{
      "snr_db is the per-UE per-antenna average received Es/N0 on occupied REs; all UEs have equal power",
      "bler = block_errors / (n_blocks * n_ue); one transport block per UE per trial"};
  bool scma = false, nls = false;
  for (const auto& c : cfgs) {
    scma |= c.scheme == SchemeKind::scma && !c.scheme_params.codebook;
    nls |= c.scheme == SchemeKind::nls && !c.scheme_params.codebook;
  }
  if (scma) {
    notes.push_back(
        "scma uses a substitute 4x6 sparse codebook (rotated QPSK on two REs), not the reference "
        "codebook; at most 6 layers, so scheme comparisons run at 6 UEs");
  }
  if (nls) notes.push_back("nls uses random unit-modulus QPSK-chip signatures as a substitute");
  return notes;
}

Interval wilson_interval(std::size_t successes, std::size_t trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  // The bounds are exact at the ends; rounding must not move them off 0 or 1.
  const double lo = successes == 0 ? 0.0 : std::max(0.0, centre - half);
  const double hi = successes == trials ? 1.0 : std::min(1.0, centre + half);
  return {lo, hi};
}

bool intervals_overlap(const Interval& a, const Interval& b) {
  return a.lo <= b.hi && b.lo <= a.hi;
}

std::optional<double> snr_at_bler(std::vector<BlerRecord> curve, double target) {
  std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) { return a.snr_db < b.snr_db; });
  auto logb = [](const BlerRecord& r) {
    const double floor = 0.5 / static_cast<double>(std::max<std::size_t>(r.n_blocks, 1));
    return std::log10(std::max(r.bler, floor));
  };
  const double lt = std::log10(target);
  if (curve.empty()) return std::nullopt;
  if (logb(curve.front()) <= lt) return curve.front().snr_db;
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    const double a = logb(curve[i]);
    const double b = logb(curve[i + 1]);
    if (a >= lt && b <= lt) {
      if (a == b) return curve[i].snr_db;
      const double frac = (a - lt) / (a - b);
      return curve[i].snr_db + frac * (curve[i + 1].snr_db - curve[i].snr_db);
    }
  }
  return std::nullopt;
}

}  // namespace noma
