#include "emoprobe/labels.hpp"

namespace emoprobe {

namespace {

constexpr std::array<std::string_view, kNumEmotions> kEmotionNames = {
    "neutral", "calm", "happy", "sad", "angry", "fearful"};

}  // namespace

std::string_view to_string(Domain d) { return d == Domain::speech ? "speech" : "music"; }

std::string_view to_string(Emotion e) { return kEmotionNames.at(static_cast<std::size_t>(e)); }

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "?";
}

std::string_view to_string(Task t) { return t == Task::ser ? "SER" : "MER"; }

std::optional<Domain> parse_domain(std::string_view s) {
  if (s == "speech") return Domain::speech;
  if (s == "music") return Domain::music;
  return std::nullopt;
}

std::optional<Emotion> parse_emotion(std::string_view s) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == s) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  return std::nullopt;
}

std::optional<Task> parse_task(std::string_view s) {
  if (s == "SER" || s == "ser") return Task::ser;
  if (s == "MER" || s == "mer") return Task::mer;
  return std::nullopt;
}

}  // namespace emoprobe
