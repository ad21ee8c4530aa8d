#include "ctcattn/lstm.hpp"

namespace ctcattn {

LstmParams LstmParams::bind(const Bindings& p, const std::string& prefix) {
  return {p(prefix + ".Wx"), p(prefix + ".Wh"), p(prefix + ".b")};
}

void add_lstm_params(ParamSet& params, const std::string& prefix,
                     std::size_t input_dim, std::size_t cells, Rng& rng) {
  const std::size_t fan_in = input_dim + cells;
  params.add(prefix + ".Wx", uniform_init({4 * cells, input_dim}, fan_in, rng));
  params.add(prefix + ".Wh", uniform_init({4 * cells, cells}, fan_in, rng));
  params.add(prefix + ".b", uniform_init({4 * cells}, fan_in, rng));
}

LstmState zero_lstm_state(Tape& tape, std::size_t cells) {
  return {tape.constant(Tensor({cells})), tape.constant(Tensor({cells}))};
}

LstmState lstm_cell(Var x, const LstmState& prev, const LstmParams& p) {
  if (prev.h.shape() != Shape{p.cells()} ||
      prev.c.shape() != Shape{p.cells()}) {
    throw DimensionError("lstm_cell: state shape " + shape_str(prev.h.shape()) +
                         " does not match Wh " + shape_str(p.wh.shape()));
  }
  return lstm_cell_projected(linear(x, p.wx, p.b), prev, p.wh);
}

LstmState lstm_cell_projected(Var x_proj, const LstmState& prev, Var wh) {
  const std::size_t c = wh.value().dim(1);
  Var gates = add(x_proj, linear(prev.h, wh));
  Var hc = lstm_pointwise(gates, prev.c);
  return {slice(hc, 0, c), slice(hc, c, c)};
}

}  // namespace ctcattn
