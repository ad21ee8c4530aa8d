#ifndef CTCATTN_LSTM_HPP_
#define CTCATTN_LSTM_HPP_

#include <string>

#include "ctcattn/ops.hpp"
#include "ctcattn/params.hpp"

namespace ctcattn {

// Gate order everywhere is [input; forget; cell candidate; output].
struct LstmParams {
  Var wx;  // [4c x in]
  Var wh;  // [4c x c]
  Var b;   // [4c]

  static LstmParams bind(const Bindings& p, const std::string& prefix);
  std::size_t cells() const { return wh.value().dim(1); }
};

struct LstmState {
  Var h;
  Var c;
};

// Registers `prefix`.Wx / .Wh / .b, initialized uniform with fan-in in+c.
void add_lstm_params(ParamSet& params, const std::string& prefix,
                     std::size_t input_dim, std::size_t cells, Rng& rng);

LstmState zero_lstm_state(Tape& tape, std::size_t cells);

// One step from a raw input vector.
LstmState lstm_cell(Var x, const LstmState& prev, const LstmParams& p);

// One step when Wx x + b was already computed (e.g. for a whole sequence at
// once).
LstmState lstm_cell_projected(Var x_proj, const LstmState& prev, Var wh);

}  // namespace ctcattn

#endif  // CTCATTN_LSTM_HPP_
