#include "denoparse/rational.hpp"

#include <charconv>
#include <cstdio>
#include <numeric>

namespace denoparse {

namespace {

__int128 gcd128(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b != 0) {
        __int128 t = a % b;
        a = b;
        b = t;
    }
    return a;
}

std::int64_t narrow(__int128 v) {
    if (v > INT64_MAX || v < INT64_MIN) {
        throw OverflowError("rational arithmetic exceeded 64-bit range");
    }
    return static_cast<std::int64_t>(v);
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) {
    if (d == 0) {
        throw ValidationError("rational with zero denominator");
    }
    *this = make_reduced(n, d);
}

Rational Rational::make_reduced(__int128 n, __int128 d) {
    if (d < 0) {
        n = -n;
        d = -d;
    }
    __int128 g = gcd128(n, d);
    if (g > 1) {
        n /= g;
        d /= g;
    }
    Rational r;
    r.num_ = narrow(n);
    r.den_ = d == 0 ? 1 : narrow(d);
    return r;
}

Rational Rational::operator+(const Rational& o) const {
    return make_reduced(static_cast<__int128>(num_) * o.den_ + static_cast<__int128>(o.num_) * den_,
                        static_cast<__int128>(den_) * o.den_);
}

Rational Rational::operator-(const Rational& o) const {
    return make_reduced(static_cast<__int128>(num_) * o.den_ - static_cast<__int128>(o.num_) * den_,
                        static_cast<__int128>(den_) * o.den_);
}

Rational Rational::operator*(const Rational& o) const {
    return make_reduced(static_cast<__int128>(num_) * o.num_,
                        static_cast<__int128>(den_) * o.den_);
}

Rational Rational::operator/(const Rational& o) const {
    if (o.num_ == 0) {
        throw DivisionByZeroError("division by zero denotation");
    }
    return make_reduced(static_cast<__int128>(num_) * o.den_,
                        static_cast<__int128>(den_) * o.num_);
}

bool Rational::operator<(const Rational& o) const {
    return static_cast<__int128>(num_) * o.den_ < static_cast<__int128>(o.num_) * den_;
}

std::string Rational::to_string() const {
    return std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rational::display() const {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", to_double());
    return buf;
}

std::optional<Rational> Rational::parse(const std::string& text) {
    std::int64_t n = 0;
    std::int64_t d = 1;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [p, ec] = std::from_chars(begin, end, n);
    if (ec != std::errc{}) return std::nullopt;
    if (p != end) {
        if (*p != '/') return std::nullopt;
        auto [p2, ec2] = std::from_chars(p + 1, end, d);
        if (ec2 != std::errc{} || p2 != end || d == 0) return std::nullopt;
    }
    return Rational(n, d);
}

}  // namespace denoparse
