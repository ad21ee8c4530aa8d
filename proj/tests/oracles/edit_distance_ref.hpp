#ifndef CTCATTN_TESTS_ORACLES_EDIT_DISTANCE_REF_HPP_
#define CTCATTN_TESTS_ORACLES_EDIT_DISTANCE_REF_HPP_

#include <algorithm>
#include <functional>
#include <map>
#include <utility>
#include <vector>

namespace oracle {

// Levenshtein distance by the textbook recursion with memoization.
template <typename T>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> d =
      [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == 0) return j;
    if (j == 0) return i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const std::size_t r =
        std::min({d(i - 1, j) + 1, d(i, j - 1) + 1,
                  d(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)});
    memo[key] = r;
    return r;
  };
  return d(a.size(), b.size());
}

}  // namespace oracle

#endif  // CTCATTN_TESTS_ORACLES_EDIT_DISTANCE_REF_HPP_
