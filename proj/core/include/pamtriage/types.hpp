#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace pamtriage {

/// Identifies one fixed-length window of a clip.
struct SnippetRef {
  std::string clip_id;
  std::uint32_t index = 0;

  auto operator<=>(const SnippetRef&) const = default;
  bool operator==(const SnippetRef&) const = default;
};

std::string to_string(const SnippetRef& ref);

struct SnippetRefHash {
  std::size_t operator()(const SnippetRef& ref) const noexcept {
    return std::hash<std::string>{}(ref.clip_id) * 1000003u ^ std::hash<std::uint32_t>{}(ref.index);
  }
};

}  // namespace pamtriage
