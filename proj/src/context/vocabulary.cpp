#include "bigthick/context/vocabulary.hpp"

#include <algorithm>
#include <set>

#include "bigthick/error.hpp"

namespace bigthick::context {

bool Vocabulary::has_activity(const std::string& term) const {
  return std::find(activities.begin(), activities.end(), term) != activities.end();
}

bool Vocabulary::has_person(const std::string& term) const {
  return std::find(persons.begin(), persons.end(), term) != persons.end();
}

int Vocabulary::mood_index(const std::string& term) const {
  auto it = std::find(moods.begin(), moods.end(), term);
  return it == moods.end() ? -1 : static_cast<int>(it - moods.begin());
}

void Vocabulary::check() const {
  for (const auto& [name, term] : locations) {
    std::set<std::string> seen{name};
    const LocationTerm* cur = &term;
    while (cur->part_of) {
      auto it = locations.find(*cur->part_of);
      if (it == locations.end()) {
        throw Error(ErrorCode::InvalidArgument,
                    "location '" + name + "' is part of unknown location '" + *cur->part_of + "'");
      }
      if (!seen.insert(it->first).second) {
        throw Error(ErrorCode::InvalidArgument, "location '" + name + "' has a cyclic part_of chain");
      }
      cur = &it->second;
    }
  }
}

Vocabulary Vocabulary::standard() {
  Vocabulary v;
  v.activities = {"lecture", "study_alone", "study_group", "sleeping", "eating",
                  "discussion", "social_media", "sport", "shopping", "travelling",
                  "resting", "housework"};
  v.locations = {
      {"home", {"Home", std::nullopt}},
      {"sitting room", {"Room", "home"}},
      {"bedroom", {"Room", "home"}},
      {"kitchen", {"Room", "home"}},
      {"campus", {"University", std::nullopt}},
      {"lecture hall", {"Room", "campus"}},
      {"library", {"Building", "campus"}},
      {"canteen", {"Building", "campus"}},
      {"gym", {"Building", std::nullopt}},
      {"shop", {"Building", std::nullopt}},
      {"street", {"Location", std::nullopt}},
  };
  v.moods = {"sad", "tired", "neutral", "calm", "happy", "excited"};
  v.objects = {{"dining table", "Table"}, {"book", "Book"},      {"laptop", "Computer"},
               {"phone", "Phone"},        {"desk", "Table"},      {"bed", "Bed"},
               {"plate", "Tableware"},    {"notebook", "Book"}};
  v.persons = {"Peter", "Anna", "Marco", "Giulia", "Luca", "Sara", "classmates", "family"};
  return v;
}

void to_json(nlohmann::json& j, const Vocabulary& v) {
  nlohmann::json locs = nlohmann::json::object();
  for (const auto& [name, term] : v.locations) {
    nlohmann::json t{{"class", term.entity_class}};
    if (term.part_of) t["part_of"] = *term.part_of;
    locs[name] = std::move(t);
  }
  j = nlohmann::json{{"activities", v.activities},
                     {"locations", std::move(locs)},
                     {"moods", v.moods},
                     {"objects", v.objects},
                     {"persons", v.persons}};
}

void from_json(const nlohmann::json& j, Vocabulary& v) {
  v = Vocabulary{};
  j.at("activities").get_to(v.activities);
  for (const auto& [name, t] : j.at("locations").items()) {
    LocationTerm term;
    term.entity_class = t.value("class", "Location");
    if (t.contains("part_of")) term.part_of = t.at("part_of").get<std::string>();
    v.locations.emplace(name, std::move(term));
  }
  j.at("moods").get_to(v.moods);
  j.at("objects").get_to(v.objects);
  j.at("persons").get_to(v.persons);
  v.check();
}

}  // namespace bigthick::context
