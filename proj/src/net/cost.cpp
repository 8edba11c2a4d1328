#include "omniscan/net/cost.hpp"

#include <iomanip>

#include "omniscan/net/model.hpp"

namespace omniscan::net {

namespace {

template <typename Layer>
Cost measure(Layer& layer, const Var<float>& input) {
  ParamList<float> params;
  layer.collect("", params);
  ops::MacCounter counter;
  NoGradGuard guard;
  layer.forward(input);
  return {count_params(params), 2 * counter.count()};
}

}  // namespace

Cost report_cost(const NetConfig& config) {
  Detector<float> model(config);
  auto params = model.parameters();
  ops::MacCounter counter;
  {
    NoGradGuard guard;
    model.forward(constant(Tensor<float>({1, 3, config.input_size, config.input_size})));
  }
  return {count_params(params), 2 * counter.count()};
}

std::vector<LayerCost> hand_counted_layers() {
  std::mt19937_64 rng(0);
  std::vector<LayerCost> out;
  {
    Conv2d<float> conv(4, 8, 1, rng);
    out.push_back({"conv1x1 4->8 bias, 10x10", measure(conv, constant(Tensor<float>({1, 4, 10, 10}))),
                   {4 * 8 + 8, 2ull * 4 * 8 * 100}});
  }
  {
    Conv2d<float> conv(1, 1, 3, rng, {1, 1, 1}, false);
    out.push_back({"conv3x3 1->1 no bias, pad 1, 10x10", measure(conv, constant(Tensor<float>({1, 1, 10, 10}))),
                   {9, 2ull * 9 * 100}});
  }
  {
    Linear<float> fc(16, 10, rng);
    out.push_back({"linear 16->10, 3 rows", measure(fc, constant(Tensor<float>({3, 16}))), {16 * 10 + 10, 2ull * 3 * 16 * 10}});
  }
  return out;
}

void write_cost_report(std::ostream& os, const NetConfig& config, const Cost& cost,
                       const std::vector<LayerCost>& layers) {
  os << "hand-counted layers:\n";
  for (const auto& l : layers) {
    const bool ok = l.measured.params == l.closed_form.params && l.measured.flops == l.closed_form.flops;
    os << "  " << std::left << std::setw(38) << l.name << std::right << " params " << l.measured.params << " (closed form "
       << l.closed_form.params << "), FLOPs " << l.measured.flops << " (closed form " << l.closed_form.flops << ") "
       << (ok ? "OK" : "MISMATCH") << '\n';
  }
  os << std::fixed << std::setprecision(2);
  os << "model at " << config.input_size << "x" << config.input_size << ", width " << config.width << ":\n";
  os << "  params " << cost.params << " (" << static_cast<double>(cost.params) / 1e6 << "M), reference "
     << kReferenceParams / 1e6 << "M\n";
  os << "  FLOPs  " << cost.flops << " (" << static_cast<double>(cost.flops) / 1e9 << "G), reference "
     << kReferenceFlops / 1e9 << "G\n";
  os << "  FLOPs count conv and linear multiply-accumulates x2; scans, norms and activations are excluded\n";
}

}  // namespace omniscan::net
