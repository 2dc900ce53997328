#pragma once

#include <array>
#include <optional>
#include <string>

#include "fairaudit/error.hpp"

namespace fairaudit {

enum class Race { Caucasian = 0, African = 1, Asian = 2, Indian = 3 };
enum class Gender { Male = 0, Female = 1 };

inline constexpr int kRaceCount = 4;
inline constexpr int kGenderCount = 2;
inline constexpr int kAgeBinCount = 6;

inline constexpr std::array<const char*, kRaceCount> kRaceNames = {"Caucasian", "African", "Asian", "Indian"};
inline constexpr std::array<const char*, kGenderCount> kGenderNames = {"Male", "Female"};
inline constexpr std::array<const char*, kAgeBinCount> kAgeBinLabels = {"0-20", "21-30", "31-40",
                                                                       "41-50", "51-60", "61-100"};

inline std::string to_string(Race r) { return kRaceNames[static_cast<int>(r)]; }
inline std::string to_string(Gender g) { return kGenderNames[static_cast<int>(g)]; }

inline std::string age_bin_label(int bin) {
    require_input(bin >= 0 && bin < kAgeBinCount, "age_bin out of range: " + std::to_string(bin));
    return kAgeBinLabels[static_cast<std::size_t>(bin)];
}

inline Race parse_race(const std::string& s) {
    for (int i = 0; i < kRaceCount; ++i)
        if (s == kRaceNames[static_cast<std::size_t>(i)]) return static_cast<Race>(i);
    throw input_error("unknown race: '" + s + "'");
}

inline Gender parse_gender(const std::string& s) {
    for (int i = 0; i < kGenderCount; ++i)
        if (s == kGenderNames[static_cast<std::size_t>(i)]) return static_cast<Gender>(i);
    throw input_error("unknown gender: '" + s + "'");
}

inline int parse_age_bin(long v) {
    require_input(v >= 0 && v < kAgeBinCount, "age_bin out of range: " + std::to_string(v));
    return static_cast<int>(v);
}

// Per-sample demographic record. age_bin indexes kAgeBinLabels.
struct SampleAnnotation {
    std::string sample_id;
    std::string identity_id;
    Race race = Race::Caucasian;
    Gender gender = Gender::Male;
    int age_bin = 0;
};

// How a pair qualifies for a subgroup: Both endpoints must match, or Either.
enum class PairPolicy { Both, Either };

inline std::string to_string(PairPolicy p) { return p == PairPolicy::Both ? "both" : "either"; }

// Partial assignment over {race, gender, age_bin}; unset attributes match
// everything. A selector with nothing set is the explicit "all" selector.
struct SubgroupSelector {
    std::optional<Race> race;
    std::optional<Gender> gender;
    std::optional<int> age_bin;
    PairPolicy policy = PairPolicy::Both;

    bool is_all() const { return !race && !gender && !age_bin; }

    bool matches(const SampleAnnotation& a) const {
        if (race && *race != a.race) return false;
        if (gender && *gender != a.gender) return false;
        if (age_bin && *age_bin != a.age_bin) return false;
        return true;
    }

    // Stable key used for report cells and baseline references.
    std::string key() const {
        if (is_all()) return "all";
        std::string k;
        auto append = [&k](const std::string& part) {
            if (!k.empty()) k += '|';
            k += part;
        };
        if (race) append(to_string(*race));
        if (gender) append(to_string(*gender));
        if (age_bin) append(age_bin_label(*age_bin));
        return k;
    }

    bool operator==(const SubgroupSelector& other) const {
        return race == other.race && gender == other.gender && age_bin == other.age_bin &&
               policy == other.policy;
    }
};

inline SubgroupSelector all_selector(PairPolicy policy = PairPolicy::Both) {
    SubgroupSelector s;
    s.policy = policy;
    return s;
}

} // namespace fairaudit
