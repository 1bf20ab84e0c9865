#include "intentscale/lists.hpp"

#include <algorithm>
#include <numeric>

#include "intentscale/error.hpp"

namespace intentscale {

void IntentHistogram::add(IntentId id, std::uint64_t count) {
  counts_.at(id) += count;
  total_ += count;
}

RelevantIntentsMask build_list(const IntentHistogram& histogram, double coverage) {
  if (!(coverage > 0.0 && coverage <= 1.0)) throw Error(ErrorCode::invalid_argument, "coverage must lie in (0, 1]");
  if (histogram.total() == 0) throw Error(ErrorCode::invalid_argument, "cannot build a list from an empty histogram");

  const auto& counts = histogram.counts();
  std::vector<IntentId> order;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] > 0) order.push_back(static_cast<IntentId>(i));
  }
  std::stable_sort(order.begin(), order.end(), [&](IntentId a, IntentId b) { return counts[a] > counts[b]; });

  // The division is correctly rounded, so a ratio equal to the decimal
  // coverage compares equal to the coverage literal.
  const auto total = static_cast<double>(histogram.total());
  RelevantIntentsMask mask(counts.size());
  std::uint64_t covered = 0;
  for (IntentId id : order) {
    mask.set(id);
    covered += counts[id];
    if (static_cast<double>(covered) / total >= coverage) break;
  }
  return mask;
}

double achieved_coverage(const IntentHistogram& histogram, const RelevantIntentsMask& mask) {
  if (histogram.total() == 0) return 0.0;
  std::uint64_t covered = 0;
  for (std::size_t i = 0; i < histogram.num_intents(); ++i) {
    if (mask.test(static_cast<IntentId>(i))) covered += histogram.counts()[i];
  }
  return static_cast<double>(covered) / static_cast<double>(histogram.total());
}

ClientHistories histories_from_examples(std::span<const LabeledExample> examples, std::size_t num_intents) {
  ClientHistories histories;
  for (const auto& ex : examples) {
    auto [it, inserted] = histories.try_emplace(ex.client_id, num_intents);
    it->second.add(ex.gold);
  }
  return histories;
}

std::map<std::string, RelevantIntentsMask, std::less<>> build_all(const ClientHistories& histories,
                                                                  std::span<const std::string> clients,
                                                                  std::size_t num_intents, double coverage) {
  std::map<std::string, RelevantIntentsMask, std::less<>> masks;
  for (const auto& client : clients) {
    const auto it = histories.find(client);
    if (it == histories.end() || it->second.total() == 0) {
      masks.emplace(client, RelevantIntentsMask::all(num_intents));
    } else {
      masks.emplace(client, build_list(it->second, coverage));
    }
  }
  return masks;
}

ListStats list_stats(std::span<const RelevantIntentsMask> masks) {
  if (masks.empty()) throw Error(ErrorCode::invalid_argument, "list statistics need at least one mask");
  std::vector<std::size_t> sizes;
  sizes.reserve(masks.size());
  for (const auto& mask : masks) sizes.push_back(mask.count());
  std::sort(sizes.begin(), sizes.end());
  return {sizes[(sizes.size() - 1) / 2], sizes.back()};
}

ClientRegistry registry_with_masks(const ClientRegistry& base,
                                   const std::map<std::string, RelevantIntentsMask, std::less<>>& masks) {
  ClientRegistry out(base.num_intents(), base.industries());
  for (auto profile : base.profiles()) {
    if (const auto it = masks.find(profile.client_id); it != masks.end()) profile.relevant = it->second;
    out.restore(std::move(profile));
  }
  return out;
}

}  // namespace intentscale
