#pragma once

#include "gcum/config.hpp"

namespace gcum::testing {

// Small enough for a multi-epoch run in well under a second.
inline RunConfig tiny_config(std::uint64_t seed = 1) {
  RunConfig c;
  c.seed = seed;
  c.dim = 8;
  c.d_a = 6;
  c.M0 = 3;
  c.K = 3;
  c.tokens_per_identity = 2;
  c.data.n_group_identities = 8;
  c.data.members_max = 3;
  c.train.batch_size = 4;
  c.train.P = 2;
  c.train.Q = 2;
  c.train.total_epochs = 5;
  c.train.warmup_epochs = 1;
  c.train.decay_epochs = {3};
  c.train.lr_start = 5e-3;
  c.train.lr_peak = 5e-2;
  return c;
}

}  // namespace gcum::testing
