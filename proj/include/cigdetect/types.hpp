// SPDX-License-Identifier: Apache-2.0
// Small vocabulary types shared across modules.

#pragma once

#include "cigdetect/error.hpp"

#include <charconv>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace cigdetect {

/** Binary class. The numeric encoding is fixed so that the image verdict
 *  is the maximum over proposal labels. */
enum class ClassLabel : std::uint8_t { NonSmoker = 0, Smoker = 1 };

constexpr int to_int(ClassLabel l) noexcept { return static_cast<int>(l); }

constexpr ClassLabel label_from_score(double smoker_probability) noexcept
{
    // Ties go to Smoker.
    return smoker_probability >= 0.5 ? ClassLabel::Smoker : ClassLabel::NonSmoker;
}

inline const char* label_name(ClassLabel l) noexcept
{
    return l == ClassLabel::Smoker ? "smoker" : "nonsmoker";
}

enum class ProposalKind : std::uint8_t { Face, Hand };

inline const char* kind_name(ProposalKind k) noexcept
{
    return k == ProposalKind::Face ? "face" : "hand";
}

/** Identity of a proposal: its kind and its position in the detector output. */
struct ProposalKey {
    ProposalKind kind = ProposalKind::Face;
    std::size_t index = 0;

    friend auto operator<=>(const ProposalKey&, const ProposalKey&) = default;
};

inline std::string to_string(const ProposalKey& key)
{
    return std::string(kind_name(key.kind)) + ":" + std::to_string(key.index);
}

/** Parses "face:3" / "hand:0". */
inline ProposalKey parse_proposal_key(std::string_view text)
{
    const auto colon = text.find(':');
    if (colon == std::string_view::npos) {
        throw ValidationError("malformed proposal key '" + std::string(text) + "'");
    }
    const auto kind = text.substr(0, colon);
    const auto digits = text.substr(colon + 1);
    ProposalKey key;
    if (kind == "face") {
        key.kind = ProposalKind::Face;
    } else if (kind == "hand") {
        key.kind = ProposalKind::Hand;
    } else {
        throw ValidationError("unknown proposal kind in key '" + std::string(text) + "'");
    }
    const auto* end = digits.data() + digits.size();
    const auto [ptr, ec] = std::from_chars(digits.data(), end, key.index);
    if (digits.empty() || ec != std::errc{} || ptr != end) {
        throw ValidationError("malformed proposal index in key '" + std::string(text) + "'");
    }
    return key;
}

} // namespace cigdetect
