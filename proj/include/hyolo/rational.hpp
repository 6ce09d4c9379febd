#ifndef HYOLO_RATIONAL_HPP
#define HYOLO_RATIONAL_HPP

#include <cstdint>
#include <numeric>
#include <string>

namespace hyolo {

/// Exact ratio of small integers. Ancestor-set metrics are quotients of set
/// cardinalities, so scores stay exact instead of picking up rounding noise.
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Ratio() = default;
    Ratio(std::int64_t n, std::int64_t d) : num(n), den(d) { normalize(); }
    static Ratio zero() { return Ratio(0, 1); }
    static Ratio one() { return Ratio(1, 1); }

    void normalize() {
        if (den < 0) { num = -num; den = -den; }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
        if (num == 0) den = 1;
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    bool operator==(const Ratio& o) const { return num == o.num && den == o.den; }
    bool operator!=(const Ratio& o) const { return !(*this == o); }

    Ratio operator+(const Ratio& o) const { return Ratio(num * o.den + o.num * den, den * o.den); }
    Ratio operator*(const Ratio& o) const { return Ratio(num * o.num, den * o.den); }
    Ratio operator/(const Ratio& o) const { return Ratio(num * o.den, den * o.num); }

    std::string str() const {
        return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
    }
};

} // namespace hyolo

#endif
