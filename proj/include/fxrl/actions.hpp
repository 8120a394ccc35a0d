#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fxrl {

// Extended action ids (fixed; they index Q-network outputs).
enum class Action : int {
  hold = 0,
  open_long = 1,
  open_short = 2,
  pyramid_long = 3,
  pyramid_short = 4,
  martingale_long = 5,
  martingale_short = 6,
  reduce = 7,
  close = 8,
  reverse = 9,
};

// Simplified adapter ids.
enum class TargetAction : int { hold = 0, target_long = 1, target_short = 2 };

enum class ActionMode { simplified, extended };

inline constexpr std::size_t kExtendedActionCount = 10;
inline constexpr std::size_t kSimplifiedActionCount = 3;

inline std::size_t action_count(ActionMode mode) {
  return mode == ActionMode::extended ? kExtendedActionCount : kSimplifiedActionCount;
}

ActionMode parse_action_mode(const std::string& s);
std::string to_string(ActionMode m);
std::string action_name(Action a);
std::string target_action_name(TargetAction a);

inline bool is_pyramid(Action a) { return a == Action::pyramid_long || a == Action::pyramid_short; }
inline bool is_martingale(Action a) {
  return a == Action::martingale_long || a == Action::martingale_short;
}

// One bit per action of the active mode.
class LegalMask {
 public:
  LegalMask() = default;
  explicit LegalMask(std::size_t n, bool value = false) : bits_(n, value ? 1 : 0) {}

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }
  bool any() const;
  std::size_t count() const;
  std::vector<int> legal_actions() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  bool operator==(const LegalMask&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

}  // namespace fxrl
