#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "denoparse/errors.hpp"

namespace denoparse {

// Exact rational on 64-bit numerator/denominator, always reduced, den > 0.
// Denotations are compared exactly; decimal rendering is display-only.
class Rational {
public:
    Rational() = default;
    explicit Rational(std::int64_t n) : num_(n), den_(1) {}
    Rational(std::int64_t n, std::int64_t d);

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }

    bool is_zero() const { return num_ == 0; }

    Rational operator+(const Rational& o) const;
    Rational operator-(const Rational& o) const;
    Rational operator*(const Rational& o) const;
    // Throws DivisionByZeroError when o == 0.
    Rational operator/(const Rational& o) const;

    bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
    bool operator!=(const Rational& o) const { return !(*this == o); }
    bool operator<(const Rational& o) const;

    double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    // Canonical exact form "num/den", e.g. "-17/1", "2/3".
    std::string to_string() const;
    // Rounded to three decimals for human-facing output.
    std::string display() const;

    // Accepts "n/d" or a bare integer "n".
    static std::optional<Rational> parse(const std::string& text);

private:
    static Rational make_reduced(__int128 n, __int128 d);

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

struct RationalHash {
    std::size_t operator()(const Rational& r) const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&h](std::uint64_t v) {
            h ^= v;
            h *= 0x100000001b3ULL;
        };
        mix(static_cast<std::uint64_t>(r.num()));
        mix(static_cast<std::uint64_t>(r.den()));
        return static_cast<std::size_t>(h);
    }
};

}  // namespace denoparse
