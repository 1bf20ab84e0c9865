#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "intentscale/catalog.hpp"
#include "intentscale/corpus.hpp"

namespace intentscale {

/// Ticket counts per intent for one client.
class IntentHistogram {
 public:
  explicit IntentHistogram(std::size_t num_intents = 0) : counts_(num_intents, 0) {}

  std::size_t num_intents() const noexcept { return counts_.size(); }
  void add(IntentId id, std::uint64_t count = 1);
  std::uint64_t count(IntentId id) const { return counts_.at(id); }
  std::uint64_t total() const noexcept { return total_; }
  const std::vector<std::uint64_t>& counts() const noexcept { return counts_; }

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Minimal frequency-ordered prefix (count desc, then id asc) of intents
/// covering at least `coverage` of the client's tickets. Zero-count intents
/// never enter the list.
RelevantIntentsMask build_list(const IntentHistogram& histogram, double coverage);

/// Fraction of the histogram's tickets whose intent is in `mask`.
double achieved_coverage(const IntentHistogram& histogram, const RelevantIntentsMask& mask);

using ClientHistories = std::map<std::string, IntentHistogram, std::less<>>;

/// Per-client histograms of gold intents.
ClientHistories histories_from_examples(std::span<const LabeledExample> examples, std::size_t num_intents);

/// build_list per client in `clients`; clients without history keep an
/// all-ones mask.
std::map<std::string, RelevantIntentsMask, std::less<>> build_all(const ClientHistories& histories,
                                                                  std::span<const std::string> clients,
                                                                  std::size_t num_intents, double coverage);

struct ListStats {
  std::size_t median = 0;  // lower median
  std::size_t max = 0;
};

ListStats list_stats(std::span<const RelevantIntentsMask> masks);

/// Copy of `base` with every client's mask replaced by its entry in `masks`.
ClientRegistry registry_with_masks(const ClientRegistry& base,
                                   const std::map<std::string, RelevantIntentsMask, std::less<>>& masks);

}  // namespace intentscale
