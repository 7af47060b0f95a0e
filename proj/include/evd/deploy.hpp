#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evd/event.hpp"
#include "evd/network.hpp"

namespace evd {

// Eq-style integer quantization: w -> round(w/sigma)*sigma with
// half-away-from-zero rounding, clamped to the 8-bit-representable range
// [-128*sigma, 127*sigma] ([-256, 254] at the default sigma = 2).
float quantize_value(float w, float sigma);

struct QuantizeOptions {
  float sigma = 2.0f;
  // The processor stores even integers in [-256, 254] and fires against an
  // integer-scaled threshold. Deployment therefore rescales each learnable
  // layer (weights and threshold together, which leaves the spike dynamics
  // unchanged) so the weight range fills the integer grid before rounding.
  // Disable to apply the raw rounding rule to the stored floats.
  bool rescale_layers = true;
};

struct QuantizeStats {
  int64_t clamped = 0;   // elements that hit the range clamp
  int64_t total = 0;     // elements quantized
  double max_abs_error = 0;  // |w - wq| before clamping, in the rounded domain
};

// Returns a quantized copy of the network; fixed pooling weights are
// structural and keep their exact value. Stats are optional.
Network quantize_weights(const Network& net, const QuantizeOptions& opts = {},
                         QuantizeStats* stats = nullptr);

// Flat neuron address of an event: A = 2*x*l_h + 2*y + p.
uint32_t encode_address(const Event& event, uint32_t l_h);
Event decode_address(uint32_t address, uint32_t l_h);

// Emulated injection interface: per occupied step, the sorted unique
// addresses that spike there. Step indices are strictly increasing.
struct AddressSequence {
  uint16_t width = 0;
  uint16_t height = 0;
  uint16_t steps = 0;  // T
  struct Frame {
    uint16_t step = 0;
    std::vector<uint32_t> addresses;  // ascending, deduplicated

    friend bool operator==(const Frame&, const Frame&) = default;
  };
  std::vector<Frame> frames;

  friend bool operator==(const AddressSequence&, const AddressSequence&) = default;
};

// Documented view of the flat space in core/neuron terms.
inline uint32_t address_core(uint32_t address) { return address / 1024; }
inline uint32_t address_neuron(uint32_t address) { return address % 1024; }

AddressSequence encode_sequence(const EventStream& stream, int steps);

// Inverse up to the duplicate collapse and timestamp coarsening to the bin
// start. The wire format carries no window, so the decoded stream follows the
// 1 ms-per-step convention (window = steps * 1000 us). Rejects addresses
// outside 2*width*height.
EventStream decode_sequence(const AddressSequence& seq);

// "AERSEQ1" wire format, bit-exact contract.
void write_sequence(const AddressSequence& seq, const std::string& path);
std::vector<uint8_t> sequence_bytes(const AddressSequence& seq);
AddressSequence read_sequence(const std::string& path);
AddressSequence parse_sequence(const std::vector<uint8_t>& bytes);

// Decoded dodge command: the approach channel (argmax of output spike
// counts, lowest index on ties) and speed alpha * N_r / N_DT.
struct DodgeAction {
  int approach_channel = 0;
  double speed = 0;
};

DodgeAction decode_action(const std::vector<int64_t>& counts, int n_dt,
                          double alpha = 2.0);

}  // namespace evd
