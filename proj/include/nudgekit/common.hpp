#pragma once
// Shared enums, error types, and small string/number utilities used across
// the library.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nudgekit {

// ---------------------------------------------------------------------------
// Domain enums

enum class Resource { electricity, hot_water };
enum class Arm { C, T1, T2 };
enum class Strategy {
    frequency_reduction,
    duration_control,
    temperature_adjustment,
    behavior_mode_change,
    monitoring_feedback
};
enum class Gender { female, male, other };
enum class BundleFormat { text_link, image_report };
enum class Trend { up, down, flat };
enum class Archetype { quick, gradual, rebound, late, adverse };

inline std::string to_string(Resource r) {
    return r == Resource::electricity ? "electricity" : "hot_water";
}
inline std::string to_string(Arm a) {
    switch (a) {
        case Arm::C: return "C";
        case Arm::T1: return "T1";
        default: return "T2";
    }
}
inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::frequency_reduction: return "frequency_reduction";
        case Strategy::duration_control: return "duration_control";
        case Strategy::temperature_adjustment: return "temperature_adjustment";
        case Strategy::behavior_mode_change: return "behavior_mode_change";
        default: return "monitoring_feedback";
    }
}
inline std::string to_string(Gender g) {
    switch (g) {
        case Gender::female: return "female";
        case Gender::male: return "male";
        default: return "other";
    }
}
inline std::string to_string(BundleFormat f) {
    return f == BundleFormat::text_link ? "text_link" : "image_report";
}
inline std::string to_string(Trend t) {
    switch (t) {
        case Trend::up: return "up";
        case Trend::down: return "down";
        default: return "flat";
    }
}
inline std::string to_string(Archetype a) {
    switch (a) {
        case Archetype::quick: return "quick";
        case Archetype::gradual: return "gradual";
        case Archetype::rebound: return "rebound";
        case Archetype::late: return "late";
        default: return "adverse";
    }
}

inline Resource resource_from_string(std::string_view s) {
    if (s == "electricity") return Resource::electricity;
    if (s == "hot_water") return Resource::hot_water;
    throw std::invalid_argument("unknown resource: " + std::string(s));
}
inline Arm arm_from_string(std::string_view s) {
    if (s == "C") return Arm::C;
    if (s == "T1") return Arm::T1;
    if (s == "T2") return Arm::T2;
    throw std::invalid_argument("unknown arm: " + std::string(s));
}
inline Strategy strategy_from_string(std::string_view s) {
    if (s == "frequency_reduction") return Strategy::frequency_reduction;
    if (s == "duration_control") return Strategy::duration_control;
    if (s == "temperature_adjustment") return Strategy::temperature_adjustment;
    if (s == "behavior_mode_change") return Strategy::behavior_mode_change;
    if (s == "monitoring_feedback") return Strategy::monitoring_feedback;
    throw std::invalid_argument("unknown strategy: " + std::string(s));
}
inline Gender gender_from_string(std::string_view s) {
    if (s == "female") return Gender::female;
    if (s == "male") return Gender::male;
    if (s == "other") return Gender::other;
    throw std::invalid_argument("unknown gender: " + std::string(s));
}
inline Archetype archetype_from_string(std::string_view s) {
    if (s == "quick") return Archetype::quick;
    if (s == "gradual") return Archetype::gradual;
    if (s == "rebound") return Archetype::rebound;
    if (s == "late") return Archetype::late;
    if (s == "adverse") return Archetype::adverse;
    throw std::invalid_argument("unknown archetype: " + std::string(s));
}

constexpr int kNumArms = 3;
constexpr int kNumRounds = 5;
constexpr std::array<Resource, 2> kResources{Resource::electricity, Resource::hot_water};

// ---------------------------------------------------------------------------
// Error types

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ValidationError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct SequencingError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct PoolUnderfullError : Error { using Error::Error; };
struct AssemblyError : Error { using Error::Error; };
struct ScreeningExhaustedError : Error { using Error::Error; };
struct RankDeficientError : Error { using Error::Error; };
struct DependencyError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

struct BackendError : Error {
    int attempts = 0;
    BackendError(const std::string& what, int attempts_made)
        : Error(what), attempts(attempts_made) {}
};

// ---------------------------------------------------------------------------
// Tokenization
//
// Lowercased ASCII alphanumeric runs. text analysis drops digits as well;
// retrieval keeps them (appliance names like "a4 printer").

inline std::vector<std::string> tokenize(std::string_view text, bool keep_digits = true) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        bool keep = std::isalpha(c) || (keep_digits && std::isdigit(c)) || c >= 0x80;
        if (keep) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

// ---------------------------------------------------------------------------
// Numeric formatting

// Round to `digits` significant figures. Uses decimal string round-trip so
// results land exactly on representable decimal grid points.
inline double round_sig(double value, int digits) {
    if (value == 0.0 || !std::isfinite(value)) return value;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*e", digits - 1, value);
    return std::strtod(buf, nullptr);
}

// Stable text form for CSV output.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// FNV-1a 64-bit digest. Used for run manifests and seed derivation; not a
// cryptographic hash.

inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace nudgekit
