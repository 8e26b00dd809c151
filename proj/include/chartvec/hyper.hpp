#pragma once

#include <cstdint>
#include <string_view>

namespace chartvec {

enum class NegativePolicy : std::uint8_t { same_dataset_first, any };

std::string_view to_string(NegativePolicy p);
NegativePolicy parse_negative_policy(std::string_view name);

struct HyperParams {
  double alpha = 0.5;   // pair-distance weight inside the interpolation loss
  double beta = 1.0;    // triplet loss weight
  double margin = 1.0;  // triplet margin
  double learning_rate = 0.01;
  std::uint32_t batch_size = 128;
  std::uint32_t epochs = 10;
  std::uint64_t seed = 0;
  bool use_interpolation = true;
  bool use_triplet = true;
  std::uint32_t negatives_per_window = 1;
  NegativePolicy negative_policy = NegativePolicy::same_dataset_first;

  bool operator==(const HyperParams&) const = default;
};

/// Throws Error{invalid_argument} when a field is out of range.
void validate(const HyperParams& h);

}  // namespace chartvec
