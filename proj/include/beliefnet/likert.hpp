#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace beliefnet {

/// Base class of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Which wording the middle two scale points use. In-context prompts say
/// "Lean", fine-tuning prompts say "Maybe".
enum class Vocabulary { InContext, FineTune };

/// One point on the six-point truth scale. There is no neutral value.
class LikertRating {
public:
    static constexpr std::array<int, 6> kValues{-3, -2, -1, 1, 2, 3};

    /// Throws Error unless value is in {-3,-2,-1,1,2,3}.
    static LikertRating from_value(int value) {
        if (!is_valid(value)) {
            throw Error("invalid Likert value " + std::to_string(value) +
                        " (expected one of -3,-2,-1,1,2,3)");
        }
        return LikertRating(value);
    }

    /// Case-sensitive inverse of label(); accepts either vocabulary.
    static std::optional<LikertRating> from_label(std::string_view text) {
        for (int v : kValues) {
            if (text == label_for(v, Vocabulary::InContext) ||
                text == label_for(v, Vocabulary::FineTune)) {
                return LikertRating(v);
            }
        }
        return std::nullopt;
    }

    static constexpr bool is_valid(int value) noexcept {
        return value != 0 && value >= -3 && value <= 3;
    }

    static constexpr std::string_view label_for(int value, Vocabulary vocab) noexcept {
        switch (value) {
        case -3: return "Certainly False";
        case -2: return "Probably False";
        case -1: return vocab == Vocabulary::InContext ? "Lean False" : "Maybe False";
        case 1: return vocab == Vocabulary::InContext ? "Lean True" : "Maybe True";
        case 2: return "Probably True";
        case 3: return "Certainly True";
        default: return "";
        }
    }

    /// The six labels in ascending truth order.
    static std::array<std::string_view, 6> labels(Vocabulary vocab) noexcept {
        std::array<std::string_view, 6> out{};
        for (std::size_t i = 0; i < kValues.size(); ++i) out[i] = label_for(kValues[i], vocab);
        return out;
    }

    constexpr int value() const noexcept { return value_; }
    std::string_view label(Vocabulary vocab = Vocabulary::InContext) const noexcept {
        return label_for(value_, vocab);
    }

    /// Flips truth polarity: +3 <-> -3, +1 <-> -1.
    constexpr LikertRating inverted() const noexcept { return LikertRating(-value_); }

    /// Position on the scale, 0 for -3 through 5 for +3.
    constexpr std::size_t index() const noexcept {
        return static_cast<std::size_t>(value_ < 0 ? value_ + 3 : value_ + 2);
    }

    friend constexpr bool operator==(LikertRating, LikertRating) = default;
    friend constexpr auto operator<=>(LikertRating, LikertRating) = default;

private:
    constexpr explicit LikertRating(int v) noexcept : value_(static_cast<std::int8_t>(v)) {}
    std::int8_t value_;
};

inline constexpr LikertRating invert_rating(LikertRating o) noexcept { return o.inverted(); }

/// |a - b| on the raw scale; at most 6.
inline constexpr int absolute_difference(LikertRating a, LikertRating b) noexcept {
    const int d = a.value() - b.value();
    return d < 0 ? -d : d;
}

}  // namespace beliefnet
