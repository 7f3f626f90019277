#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

namespace evb {

// Class 0 is clean (the attack target), class 1 is malware (the positive class).
enum class Label : std::uint8_t { clean = 0, malware = 1 };

constexpr std::string_view to_string(Label label) {
  return label == Label::clean ? "clean" : "malware";
}

constexpr std::optional<Label> parse_label(std::string_view text) {
  if (text == "clean") return Label::clean;
  if (text == "malware") return Label::malware;
  return std::nullopt;
}

constexpr std::size_t class_index(Label label) { return static_cast<std::size_t>(label); }

}  // namespace evb
