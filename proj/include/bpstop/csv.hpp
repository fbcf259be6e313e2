#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <type_traits>

namespace bpstop {

// Shortest text that reads back to the same double (17 significant digits).
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Minimal CSV emitter: header row, '.' decimal separator, fields quoted when
// they contain a comma or quote.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}

    template <typename... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((put(fields, first)), ...);
        os_ << '\n';
    }

private:
    template <typename T>
    void put(const T& v, bool& first) {
        if (!first) os_ << ',';
        first = false;
        if constexpr (std::is_floating_point_v<T>) {
            os_ << format_double(static_cast<double>(v));
        } else if constexpr (std::is_integral_v<T>) {
            os_ << v;
        } else {
            write_text(std::string_view(v));
        }
    }

    void write_text(std::string_view s) {
        if (s.find_first_of(",\"\n") == std::string_view::npos) {
            os_ << s;
            return;
        }
        os_ << '"';
        for (char c : s) {
            if (c == '"') os_ << '"';
            os_ << c;
        }
        os_ << '"';
    }

    std::ostream& os_;
};

}  // namespace bpstop
