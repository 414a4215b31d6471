#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gridledger {

using Series = std::vector<double>;

/// Which transactive activities a scheduling problem allows.
///
///  - Tem: feed-in, demand response and peer-to-peer trading.
///  - Bs1: internal scheduling only.
///  - Bs2: internal scheduling plus vertical transactions (feed-in, DR).
///  - Bs3: internal scheduling plus horizontal (peer) trading.
enum class Mode { Tem, Bs1, Bs2, Bs3 };

inline constexpr Mode kAllModes[] = {Mode::Bs1, Mode::Bs2, Mode::Bs3, Mode::Tem};

std::string_view to_string(Mode mode);
std::optional<Mode> parse_mode(std::string_view text);

inline bool has_vertical(Mode mode) { return mode == Mode::Tem || mode == Mode::Bs2; }
inline bool has_horizontal(Mode mode) { return mode == Mode::Tem || mode == Mode::Bs3; }

}  // namespace gridledger
