#include "chartvec/hyper.hpp"

#include <cmath>
#include <string>

#include "chartvec/error.hpp"

namespace chartvec {

std::string_view to_string(NegativePolicy p) {
  return p == NegativePolicy::any ? "any" : "same-dataset-first";
}

NegativePolicy parse_negative_policy(std::string_view name) {
  if (name == "same-dataset-first") return NegativePolicy::same_dataset_first;
  if (name == "any") return NegativePolicy::any;
  throw Error(ErrorCode::invalid_argument, "unknown negative policy \"" + std::string(name) + "\"");
}

void validate(const HyperParams& h) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::invalid_argument, what);
  };
  require(std::isfinite(h.alpha) && h.alpha >= 0.0, "alpha must be >= 0");
  require(std::isfinite(h.beta) && h.beta >= 0.0, "beta must be >= 0");
  require(std::isfinite(h.margin) && h.margin > 0.0, "margin must be > 0");
  require(std::isfinite(h.learning_rate) && h.learning_rate > 0.0, "learning rate must be > 0");
  require(h.batch_size > 0, "batch size must be positive");
  require(h.negatives_per_window > 0, "negatives per window must be positive");
}

}  // namespace chartvec
