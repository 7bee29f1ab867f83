#include "noma/receiver.hpp"

#include <algorithm>
#include <cassert>
#include <numeric>
#include <optional>

namespace noma {

namespace {

int effective_inner(const OuterLoopConfig& cfg) {
  if (cfg.inner_iterations > 0) return cfg.inner_iterations;
  switch (cfg.detector) {
    case DetectorKind::epa: return kDefaultEpaIterations;
    case DetectorKind::mpa: return kDefaultMpaIterations;
    default: return 1;
  }
}

class Receiver {
 public:
  Receiver(const ReceivedGrid& grid, const SchemeLayout& layout, const OuterLoopConfig& cfg,
           const CodeConfig& code)
      : work_(grid), layout_(layout), cfg_(cfg), code_(code), users_(layout.n_layers),
        last_payload_(layout.n_layers, Bits(code.payload_bits(), 0)) {
    if (cfg.max_outer_iterations < 0) {
      throw ContractError("receiver: max_outer_iterations must be non-negative");
    }
    auto sinr = estimate_sinr(work_, layout_);
    for (std::size_t j = 0; j < users_.size(); ++j) users_[j].est_sinr = sinr[j];
  }

  ReceiverResult run() {
    for (int ol = 0; ol <= cfg_.max_outer_iterations; ++ol) {
      switch (cfg_.strategy) {
        case IcStrategy::hard_sic: sic_pass(false); break;
        case IcStrategy::enhanced_sic: sic_pass(true); break;
        case IcStrategy::soft_pic: pic_pass(false); break;
        case IcStrategy::hybrid_pic: pic_pass(true); break;
      }
      snapshot();
      if (all_passed()) break;
    }
    ReceiverResult out;
    out.users = std::move(users_);
    out.snapshots = std::move(snapshots_);
    out.decode_order = std::move(order_);
    out.op_count = op_count_;
    out.detector_calls = detector_calls_;
    out.decoder_calls = decoder_calls_;
    return out;
  }

 private:
  bool all_passed() const {
    return std::all_of(users_.begin(), users_.end(), [](const auto& u) { return u.crc_passed; });
  }

  std::vector<bool> cancelled_mask() const {
    std::vector<bool> m(users_.size());
    for (std::size_t j = 0; j < users_.size(); ++j) m[j] = users_[j].hard_cancelled;
    return m;
  }

  DetectorOutput run_detector(std::vector<LlrVector> priors) {
    DetectorInput in{work_, layout_, std::move(priors), cancelled_mask(), effective_inner(cfg_),
                     cfg_.epa_damping, cfg_.mpa_degree_cap};
    auto out = detect(cfg_.detector, in);
    op_count_ += out.op_count;
    ++detector_calls_;
    return out;
  }

  // Decodes UE j from detector extrinsic LLRs and updates its state; returns
  // true on a fresh CRC pass.
  bool decode(std::size_t j, const LlrVector& llrs) {
    const auto combined = rate_recover(llrs, code_.coded_bits());
    auto res = ldpc_decode(combined, code_);
    ++decoder_calls_;
    auto& u = users_[j];
    u.feedback_llrs = rate_feedback(res.extrinsic_llrs, combined, llrs);
    last_payload_[j] = res.payload(code_);
    if (res.crc_ok && !u.crc_passed) {
      u.crc_passed = true;
      u.decoded_bits = last_payload_[j];
      return true;
    }
    return false;
  }

  void hard_cancel(std::size_t j) {
    auto& u = users_[j];
    assert(u.crc_passed);
    if (u.hard_cancelled) return;
    cancel_layer(work_, j, reconstruct_layer(j, u.decoded_bits, layout_, code_));
    u.hard_cancelled = true;
  }

  void refresh_sinr() {
    auto sinr = estimate_sinr(work_, layout_, cancelled_mask());
    for (std::size_t j = 0; j < users_.size(); ++j) {
      if (!users_[j].hard_cancelled) users_[j].est_sinr = sinr[j];
    }
  }

  std::vector<std::size_t> sic_order(const std::vector<bool>& attempted) const {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < users_.size(); ++j) {
      if (!users_[j].crc_passed && !attempted[j]) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
      return users_[a].est_sinr > users_[b].est_sinr;
    });
    return order;
  }

  // Uniform priors throughout; a detector output stays valid until the next
  // cancellation changes the grid.
  void sic_pass(bool enhanced) {
    refresh_sinr();
    std::vector<bool> attempted(users_.size(), false);
    std::optional<DetectorOutput> det;
    auto order = sic_order(attempted);
    std::size_t next = 0;
    while (next < order.size()) {
      const std::size_t j = order[next++];
      attempted[j] = true;
      order_.push_back(j);
      if (!det) det = run_detector({});
      if (!decode(j, det->extrinsic_llrs[j])) continue;
      hard_cancel(j);
      det.reset();
      if (enhanced) {
        refresh_sinr();
        order = sic_order(attempted);
        next = 0;
      }
    }
  }

  void pic_pass(bool hybrid) {
    std::vector<LlrVector> priors(users_.size());
    bool any_active = false;
    for (std::size_t j = 0; j < users_.size(); ++j) {
      if (users_[j].hard_cancelled) continue;
      priors[j] = users_[j].feedback_llrs;
      any_active = true;
    }
    if (!any_active) return;
    auto det = run_detector(std::move(priors));
    std::vector<std::size_t> passed;
    for (std::size_t j = 0; j < users_.size(); ++j) {
      if (users_[j].hard_cancelled) continue;
      decode(j, det.extrinsic_llrs[j]);
      if (users_[j].crc_passed) passed.push_back(j);
    }
    if (hybrid) {
      for (auto j : passed) hard_cancel(j);
    }
  }

  void snapshot() {
    OuterLoopSnapshot s;
    s.crc_passed.resize(users_.size());
    s.payload_decisions.resize(users_.size());
    for (std::size_t j = 0; j < users_.size(); ++j) {
      s.crc_passed[j] = users_[j].crc_passed;
      s.payload_decisions[j] = users_[j].crc_passed ? users_[j].decoded_bits : last_payload_[j];
    }
    s.op_count = op_count_;
    snapshots_.push_back(std::move(s));
  }

  ReceivedGrid work_;
  const SchemeLayout& layout_;
  const OuterLoopConfig& cfg_;
  const CodeConfig& code_;
  std::vector<UserDecodeState> users_;
  std::vector<Bits> last_payload_;
  std::vector<OuterLoopSnapshot> snapshots_;
  std::vector<std::size_t> order_;
  std::uint64_t op_count_ = 0;
  std::size_t detector_calls_ = 0;
  std::size_t decoder_calls_ = 0;
};

}  // namespace

std::string to_string(IcStrategy s) {
  switch (s) {
    case IcStrategy::hard_sic: return "hard_sic";
    case IcStrategy::enhanced_sic: return "enhanced_sic";
    case IcStrategy::soft_pic: return "soft_pic";
    case IcStrategy::hybrid_pic: return "hybrid_pic";
  }
  return "unknown";
}

IcStrategy parse_ic_strategy(const std::string& text) {
  if (text == "hard_sic") return IcStrategy::hard_sic;
  if (text == "enhanced_sic") return IcStrategy::enhanced_sic;
  if (text == "soft_pic") return IcStrategy::soft_pic;
  if (text == "hybrid_pic") return IcStrategy::hybrid_pic;
  throw ConfigError("unknown IC strategy '" + text +
                    "' (expected hard_sic, enhanced_sic, soft_pic, hybrid_pic)");
}

std::vector<double> estimate_sinr(const ReceivedGrid& grid, const SchemeLayout& layout,
                                  const std::vector<bool>& excluded) {
  const std::size_t J = layout.n_layers;
  const std::size_t nr = grid.n_rx;
  std::vector<double> sinr(J, 0.0);
  auto is_excluded = [&](std::size_t j) { return !excluded.empty() && excluded[j]; };
  for (std::size_t j = 0; j < J; ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& fp : layout.footprints[j]) {
      for (auto k : fp) {
        double g2 = 0.0;
        for (std::size_t r = 0; r < nr; ++r) g2 += std::norm(grid.channel.at(j, k, r));
        double interference = 0.0;
        for (std::size_t j2 = 0; j2 < J; ++j2) {
          if (j2 == j || is_excluded(j2) || !layout.position_of(j2, k)) continue;
          cplx c{};
          for (std::size_t r = 0; r < nr; ++r) c += std::conj(grid.channel.at(j, k, r)) * grid.channel.at(j2, k, r);
          interference += grid.power[j2] * std::norm(c) / std::max(g2, 1e-300);
        }
        sum += grid.power[j] * g2 / (interference + grid.noise_var);
        ++count;
      }
    }
    sinr[j] = count ? sum / static_cast<double>(count) : 0.0;
  }
  return sinr;
}

std::vector<cplx> reconstruct_layer(std::size_t layer, std::span<const std::uint8_t> payload,
                                    const SchemeLayout& layout, const CodeConfig& code) {
  const auto info = build_info_block(payload, code);
  const auto coded = ldpc_encode(info, code);
  return map_bits(layer, rate_match(coded, layout.coded_bits(layer)), layout);
}

ReceiverResult run_receiver(const ReceivedGrid& grid, const SchemeLayout& layout,
                            const OuterLoopConfig& cfg, const CodeConfig& code) {
  return Receiver(grid, layout, cfg, code).run();
}

}  // namespace noma
