#pragma once

#include <optional>

#include "ynet/audio.hpp"
#include "ynet/checkpoint.hpp"
#include "ynet/dsp.hpp"

namespace ynet {

struct SeparateOptions {
  // Test hook: bypass the network and use a constant mask value instead.
  std::optional<double> force_mask;
};

struct SeparationResult {
  AudioClip vocal;
  // Per-window masks concatenated along time, row-major [freq_bins x frames].
  std::vector<double> mask;
  int mask_rows = 0;
  int mask_cols = 0;
};

// Slices the mixture into model-sized windows (final window zero-padded),
// runs eval-mode mask estimation per window, multiplies the mixture
// magnitude, and resynthesizes with the untouched mixture phase.
SeparationResult separate(const AudioClip& mixture, Checkpoint& ckpt,
                          const SeparateOptions& opts = {});

}  // namespace ynet
