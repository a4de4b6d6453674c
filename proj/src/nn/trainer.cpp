#include "pehl/nn/trainer.hpp"

#include <cstdio>
#include <sstream>

#include <zlib.h>

namespace pehl::nn {

void TrainingTrace::write_csv(std::ostream& out) const {
  const auto old = out.precision(17);
  out << "epoch,loss,val_balacc,val_auc\n";
  for (const auto& r : epochs) {
    out << r.epoch << ',' << r.loss << ',';
    if (r.val_balacc) out << *r.val_balacc;
    out << ',';
    if (r.val_auc) out << *r.val_auc;
    out << '\n';
  }
  out.precision(old);
}

std::string TrainingTrace::digest() const {
  std::ostringstream os;
  write_csv(os);
  const std::string text = os.str();
  const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(text.data()),
                         static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t lo = 0; lo < n; lo += bs) out.emplace_back(lo, std::min(n, lo + bs));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

void shuffle_order(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
}

}  // namespace pehl::nn
