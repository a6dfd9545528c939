#include "dgm/rng.hpp"

#include <stdexcept>
#include <unordered_map>

namespace dgm {

std::vector<int> RngStream::sample_without_replacement(int n, int k) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::unordered_map<int, int> swapped;
  std::vector<int> out;
  out.reserve(k);
  for (int i = 0; i < k; ++i) {
    int j = i + static_cast<int>(next_index(static_cast<uint64_t>(n - i)));
    auto val_at = [&](int idx) {
      auto it = swapped.find(idx);
      return it == swapped.end() ? idx : it->second;
    };
    int vj = val_at(j);
    swapped[j] = val_at(i);
    out.push_back(vj);
  }
  return out;
}

} // namespace dgm
