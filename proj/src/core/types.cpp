#include "finprint/core/types.hpp"

#include "finprint/core/error.hpp"

namespace finprint {

std::string_view to_string(Split s) {
  return s == Split::Train ? "train" : "test";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ContractError("unknown split '" + std::string(s) + "'");
}

}  // namespace finprint
