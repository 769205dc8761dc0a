// Compresses one synthetic 64x32x3x3 convolution (layer sparsity 0.1417,
// rank 41) and prints the per-layer bookkeeping.

#include <iostream>

#include "weightpress/weightpress.hpp"

int main() {
  using namespace weightpress;

  Rng rng(7);
  DenseTensor conv({64, 32, 3, 3});
  for (auto& v : conv.data()) v = static_cast<float>(rng.normal() / 17.0);

  LayerConfig cfg;
  cfg.layer_name = "inception3a.branch2";
  cfg.prune = {.alpha = 0.1417, .stages = 3, .entangle_prob = 0.05, .seed = 1};
  cfg.rank_svd = 41;
  cfg.anneal.rank = 41;
  cfg.anneal.seed = 2;

  const auto [layer, row] = compress_layer(conv, cfg);

  CompressionReport report;
  report.per_layer.push_back(row);
  report.recompute_totals();
  print_report_table(std::cout, report);
  std::cout << "achieved sparsity " << row.achieved_sparsity << ", annealing loss "
            << layer.pair->final_loss << " after " << layer.pair->loss_trace.size() - 1
            << " steps\n";
  return 0;
}
