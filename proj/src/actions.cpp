#include "fxrl/actions.hpp"

#include <algorithm>

#include "fxrl/error.hpp"

namespace fxrl {

ActionMode parse_action_mode(const std::string& s) {
  if (s == "extended") return ActionMode::extended;
  if (s == "simplified") return ActionMode::simplified;
  throw ConfigError("unknown action mode '" + s + "' (expected simplified|extended)");
}

std::string to_string(ActionMode m) {
  return m == ActionMode::extended ? "extended" : "simplified";
}

std::string action_name(Action a) {
  switch (a) {
    case Action::hold: return "HOLD";
    case Action::open_long: return "OPEN_LONG";
    case Action::open_short: return "OPEN_SHORT";
    case Action::pyramid_long: return "PYRAMID_LONG";
    case Action::pyramid_short: return "PYRAMID_SHORT";
    case Action::martingale_long: return "MARTINGALE_LONG";
    case Action::martingale_short: return "MARTINGALE_SHORT";
    case Action::reduce: return "REDUCE";
    case Action::close: return "CLOSE";
    case Action::reverse: return "REVERSE";
  }
  return "?";
}

std::string target_action_name(TargetAction a) {
  switch (a) {
    case TargetAction::hold: return "HOLD";
    case TargetAction::target_long: return "TARGET_LONG";
    case TargetAction::target_short: return "TARGET_SHORT";
  }
  return "?";
}

bool LegalMask::any() const {
  return std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; });
}

std::size_t LegalMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<int> LegalMask::legal_actions() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace fxrl
