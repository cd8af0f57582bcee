#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ph/errors.hpp"
#include "ph/rng.hpp"
#include "ph/task_data.hpp"

namespace ph::toy {

// Pattern-templated 7-intent dataset. Class identity is carried mostly by
// wide content-word lexicons rather than fixed anchor words, so a model
// keeps gaining from seeing more examples per class: a small sample covers
// only part of each lexicon. Shared filler slots add surface variety
// without class signal.
inline const std::map<std::string, std::vector<std::string>>& slot_values() {
  static const std::map<std::string, std::vector<std::string>> slots = {
      {"pre", {"", "please", "hey", "can you", "could you", "i want you to", "would you", "go ahead and"}},
      {"post", {"", "now", "right away", "for me", "tonight", "this time", "today", "thanks"}},
      {"genre",
       {"jazz",   "rock",   "pop",    "folk",   "blues",  "disco",   "metal",  "funk",  "soul",  "opera",
        "techno", "reggae", "country", "gospel", "punk",   "swing",   "salsa",  "indie", "rap",   "classical",
        "ambient", "grunge", "ska",    "house",  "bebop",  "dubstep", "trance", "mambo", "polka", "flamenco",
        "boogie", "calypso", "cumbia", "tango",  "waltz",  "zydeco"}},
      {"city",
       {"paris",  "oslo",     "tokyo",   "cairo",    "lima",     "berlin",  "madrid", "dublin", "athens",
        "prague", "vienna",   "warsaw",  "lisbon",   "helsinki", "sofia",   "zagreb", "riga",   "tallinn",
        "bern",   "brussels", "nairobi", "copenhagen", "stockholm", "budapest", "seoul", "hanoi",
        "quito",  "bogota",   "lagos",   "accra",    "perth",    "osaka",   "denver", "austin", "boise",
        "tulsa"}},
      {"wx", {"rain", "snow", "hail", "storm", "drizzle", "fog"}},
      {"hour",
       {"one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve"}},
      {"ampm", {"am", "pm"}},
      {"day", {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"}},
      {"place",
       {"luigis",  "sakura",  "verde",   "marios",  "pierre",  "oliveto", "harborview", "palmgrove",
        "aurora",  "figtree", "lanterna", "bamboo",  "tavern",  "cantina", "trattoria",  "smokehouse",
        "noodlebar", "brasserie", "ostria", "pavilion", "quinta", "hacienda", "izakaya",  "chophouse",
        "graniteworks", "willow", "juniper", "magnolia", "saffron", "tamarind", "clove",  "nutmeg",
        "basilico", "rosemary", "thyme", "lavanda"}},
      {"meal", {"dinner", "lunch", "brunch", "breakfast"}},
      {"count", {"two", "three", "four", "five", "six"}},
      {"name",
       {"alice", "bob",   "maria", "omar",  "chen",  "priya", "ivan",  "sara",  "leo",    "nina",
        "hugo",  "emma",  "noah",  "lucas", "mia",   "sofia", "felix", "clara", "jonas",  "alma",
        "ravi",  "tara",  "simon", "petra", "dmitri", "yuki",  "amara", "kofi",  "ingrid", "pablo",
        "zara",  "otto",  "vera",  "hassan", "lena",  "marco"}},
      {"status", {"late", "early", "here", "busy", "away", "done"}},
      {"room",
       {"kitchen",  "bedroom", "garage",  "office",  "hall",    "attic",   "basement", "porch",
        "studio",   "lounge",  "nursery", "pantry",  "closet",  "bathroom", "balcony", "cellar",
        "den",      "foyer",   "hallway", "workshop", "library", "sunroom", "mudroom",  "stairwell",
        "terrace",  "veranda", "gym",     "playroom", "shed",    "greenhouse", "loft",  "corridor",
        "entryway", "alcove",  "atrium",  "gallery"}},
      {"adj",
       {"silly",  "corny", "short",  "clever", "dry",    "goofy",  "witty", "daft",  "cheesy", "absurd",
        "dark",   "quick", "snappy", "wacky",  "lame",   "groany", "odd",   "zany",  "punny",  "dumb",
        "classic", "fresh", "weird",  "strange", "crude", "gentle", "nerdy", "festive", "spooky", "solid",
        "awful",  "tiny",  "mellow", "random", "bold",   "breezy"}},
  };
  return slots;
}

inline const std::vector<std::pair<std::string, std::vector<std::string>>>& class_templates() {
  static const std::vector<std::pair<std::string, std::vector<std::string>>> classes = {
      {"play_music",
       {"{pre} put on some {genre} {post}", "{pre} i want to hear {genre} {post}",
        "{pre} queue up a bit of {genre} {post}", "{pre} start a {genre} mix {post}",
        "{pre} play some {genre} music {post}"}},
      {"get_weather",
       {"{pre} what is it looking like in {city} {post}", "{pre} give me the outlook for {city} {post}",
        "{pre} will there be {wx} in {city} {post}", "{pre} check the skies over {city} {post}",
        "{pre} what is the weather in {city} {post}"}},
      {"set_alarm",
       {"{pre} get me up at {hour} {ampm} {post}", "{pre} wake me at {hour} {ampm} on {day} {post}",
        "{pre} i need to rise at {hour} {ampm} {post}", "{pre} buzz me at {hour} {ampm} {post}",
        "{pre} set an alarm for {hour} {ampm} {post}"}},
      {"book_table",
       {"{pre} get us a spot at {place} for {count} {post}", "{pre} reserve {meal} at {place} {post}",
        "{pre} squeeze {count} of us into {place} {post}", "{pre} arrange {meal} for {count} at {place} {post}",
        "{pre} book a table at {place} {post}"}},
      {"send_message",
       {"{pre} let {name} know i am {status} {post}", "{pre} text {name} that i am {status} {post}",
        "{pre} ping {name} for me {post}", "{pre} drop {name} a note that i am {status} {post}",
        "{pre} send a message to {name} {post}"}},
      {"turn_on_lights",
       {"{pre} brighten up the {room} {post}", "{pre} switch on the {room} lamp {post}",
        "{pre} make the {room} less dark {post}", "{pre} dim the {room} a little {post}",
        "{pre} turn on the {room} lights {post}"}},
      {"tell_joke",
       {"{pre} say something {adj} to make me laugh {post}", "{pre} i could use a {adj} laugh {post}",
        "{pre} got anything {adj} and funny {post}", "{pre} crack a {adj} one {post}",
        "{pre} tell me a {adj} joke {post}"}},
  };
  return classes;
}

inline std::string instantiate(const std::string& tmpl, Rng& rng) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i);
      if (close == std::string::npos) throw DataError("unterminated slot in template: " + tmpl);
      const std::string slot = tmpl.substr(i + 1, close - i - 1);
      const auto it = slot_values().find(slot);
      if (it == slot_values().end()) throw DataError("unknown slot {" + slot + "}");
      out += it->second[rng.below(it->second.size())];
      i = close + 1;
    } else {
      out.push_back(tmpl[i]);
      ++i;
    }
  }
  // collapse whitespace left by empty fillers
  std::string squeezed;
  bool prev_space = true;
  for (const char ch : out) {
    if (ch == ' ') {
      if (!prev_space) squeezed.push_back(' ');
      prev_space = true;
    } else {
      squeezed.push_back(ch);
      prev_space = false;
    }
  }
  while (!squeezed.empty() && squeezed.back() == ' ') squeezed.pop_back();
  return squeezed;
}

inline std::string sample_sentence(const std::string& class_id, Rng& rng) {
  for (const auto& [id, templates] : class_templates()) {
    if (id == class_id) return instantiate(templates[rng.below(templates.size())], rng);
  }
  throw NotFoundError("unknown toy class " + class_id);
}

inline Dataset make_toy_intents(std::size_t train_per_class, std::size_t test_per_class,
                                std::uint64_t seed) {
  Dataset ds;
  ds.name = "toy-intents";
  for (const auto& [id, templates] : class_templates()) ds.classes.push_back(id);
  for (std::size_t ci = 0; ci < ds.classes.size(); ++ci) {
    Rng train_rng(Rng::mix(Rng::mix(seed, 0x7124), ci));
    for (std::size_t i = 0; i < train_per_class; ++i) {
      ds.train.push_back({sample_sentence(ds.classes[ci], train_rng), ds.classes[ci]});
    }
    Rng test_rng(Rng::mix(Rng::mix(seed, 0x7E57), ci));
    for (std::size_t i = 0; i < test_per_class; ++i) {
      ds.test.push_back({sample_sentence(ds.classes[ci], test_rng), ds.classes[ci]});
    }
  }
  return ds;
}

// Pretraining text drawn from the same template distribution, plus the label
// phrases themselves so every label token has a trained embedding.
inline std::vector<std::string> make_toy_corpus(std::size_t sentences, std::uint64_t seed) {
  Rng rng(Rng::mix(seed, 0xC0B5));
  std::vector<std::string> corpus;
  corpus.reserve(sentences + 2 * class_templates().size());
  for (std::size_t i = 0; i < sentences; ++i) {
    const auto& [id, templates] = class_templates()[rng.below(class_templates().size())];
    corpus.push_back(instantiate(templates[rng.below(templates.size())], rng));
  }
  for (int repeat = 0; repeat < 2; ++repeat) {
    for (const auto& [id, templates] : class_templates()) corpus.push_back(verbalize_label(id));
  }
  return corpus;
}

}  // namespace ph::toy
