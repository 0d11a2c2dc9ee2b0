#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace emoprobe {

enum class Domain : std::uint8_t { speech = 0, music = 1 };

// The six categories shared by the speech and song recordings.
enum class Emotion : std::uint8_t { neutral = 0, calm, happy, sad, angry, fearful };

enum class Split : std::uint8_t { train = 0, val, test };

// SER reads speech records, MER reads music records.
enum class Task : std::uint8_t { ser = 0, mer };

inline constexpr int kNumEmotions = 6;

inline constexpr std::array<Emotion, kNumEmotions> kAllEmotions = {
    Emotion::neutral, Emotion::calm, Emotion::happy, Emotion::sad, Emotion::angry, Emotion::fearful};

inline constexpr std::array<Domain, 2> kAllDomains = {Domain::speech, Domain::music};

std::string_view to_string(Domain d);
std::string_view to_string(Emotion e);
std::string_view to_string(Split s);
std::string_view to_string(Task t);

std::optional<Domain> parse_domain(std::string_view s);
std::optional<Emotion> parse_emotion(std::string_view s);
std::optional<Split> parse_split(std::string_view s);
std::optional<Task> parse_task(std::string_view s);

inline Domain domain_of(Task t) { return t == Task::ser ? Domain::speech : Domain::music; }
inline int index_of(Emotion e) { return static_cast<int>(e); }

}  // namespace emoprobe
