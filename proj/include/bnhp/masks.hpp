#pragma once

#include <cstdint>
#include <vector>

namespace bnhp {

/// Binary dropout masks for one sampled network. Entries are 0 or 1.
///
/// `fnn[l]` masks the output columns of hidden layer l of the hazard network;
/// `rnn_input` masks the rows of the input weight matrix (one row per input
/// feature), `rnn_recurrent` the rows of the recurrent matrix. The RNN masks are
/// applied unchanged at every step of a window. `spatial[l]` masks the hidden
/// columns of the spatial head. An empty vector means "no mask" for that group.
struct MaskSet {
  std::vector<std::vector<double>> fnn;
  std::vector<double> rnn_input;
  std::vector<double> rnn_recurrent;
  std::vector<std::vector<double>> spatial;
  std::uint64_t seed = 0;

  friend bool operator==(const MaskSet&, const MaskSet&) = default;
};

}  // namespace bnhp
