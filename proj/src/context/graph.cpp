#include "bigthick/context/graph.hpp"

#include <algorithm>
#include <functional>
#include <utility>
#include <set>
#include <unordered_map>

#include "bigthick/error.hpp"
#include "bigthick/hash.hpp"

namespace bigthick::context {

GeoPoint GeoPoint::make(double latitude, double longitude) {
  if (!(latitude >= -90.0 && latitude <= 90.0) || !(longitude >= -180.0 && longitude <= 180.0)) {
    throw Error(ErrorCode::InvalidArgument, "geo coordinate out of range");
  }
  return GeoPoint{latitude, longitude};
}

const char* to_string(Predicate p) {
  switch (p) {
    case Predicate::PartOf: return "PartOf";
    case Predicate::In: return "In";
    case Predicate::HasActivity: return "HasActivity";
    case Predicate::With: return "With";
  }
  return "?";
}

Predicate parse_predicate(const std::string& name) {
  if (name == "PartOf") return Predicate::PartOf;
  if (name == "In") return Predicate::In;
  if (name == "HasActivity") return Predicate::HasActivity;
  if (name == "With") return Predicate::With;
  throw Error(ErrorCode::InvalidArgument, "unknown predicate: " + name);
}

const Entity* Graph::find(const std::string& id) const {
  auto it = std::find_if(entities.begin(), entities.end(),
                         [&](const Entity& e) { return e.id == id; });
  return it == entities.end() ? nullptr : &*it;
}

Entity* Graph::find(const std::string& id) {
  return const_cast<Entity*>(std::as_const(*this).find(id));
}

Entity& Graph::add(Entity entity) {
  if (Entity* existing = find(entity.id)) return *existing;
  entities.push_back(std::move(entity));
  return entities.back();
}

void Graph::relate(const std::string& subject, Predicate predicate, const std::string& object) {
  Relation r{subject, predicate, object};
  if (std::find(relations.begin(), relations.end(), r) == relations.end()) {
    relations.push_back(std::move(r));
  }
}

std::string entity_id(const std::string& entity_class, const std::string& name) {
  std::string key = entity_class;
  key.push_back('\x1f');
  key += name;
  return hex64(fnv1a64(key));
}

std::string partof_root(const Graph& graph, const std::string& id) {
  std::string current = id;
  std::set<std::string> seen{current};
  for (;;) {
    auto it = std::find_if(graph.relations.begin(), graph.relations.end(), [&](const Relation& r) {
      return r.predicate == Predicate::PartOf && r.subject == current;
    });
    if (it == graph.relations.end() || !seen.insert(it->object).second) return current;
    current = it->object;
  }
}

ValidationReport validate_graph(const Graph& graph) {
  ValidationReport report;

  std::set<std::string> ids;
  for (const auto& e : graph.entities) {
    if (!ids.insert(e.id).second) report.duplicate_ids.push_back(e.id);
    if (e.entity_class.empty()) report.empty_classes.push_back(e.id);
  }
  for (std::size_t i = 0; i < graph.relations.size(); ++i) {
    const auto& r = graph.relations[i];
    for (const auto* ref : {&r.subject, &r.object}) {
      if (!ids.count(*ref)) {
        report.dangling_refs.push_back("relation " + std::to_string(i) + " (" +
                                       to_string(r.predicate) + "): '" + *ref + "' not found");
      }
    }
  }

  // Tarjan's SCC over PartOf edges; every non-trivial component is one cycle.
  std::unordered_map<std::string, std::vector<std::string>> adj;
  std::set<std::string> nodes;
  for (const auto& r : graph.relations) {
    if (r.predicate != Predicate::PartOf) continue;
    adj[r.subject].push_back(r.object);
    nodes.insert(r.subject);
    nodes.insert(r.object);
  }
  std::unordered_map<std::string, int> index, low;
  std::set<std::string> on_stack;
  std::vector<std::string> stack;
  int counter = 0;
  std::function<void(const std::string&)> connect = [&](const std::string& v) {
    index[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack.insert(v);
    for (const auto& w : adj[v]) {
      if (!index.count(w)) {
        connect(w);
        low[v] = std::min(low[v], low[w]);
      } else if (on_stack.count(w)) {
        low[v] = std::min(low[v], index[w]);
      }
    }
    if (low[v] == index[v]) {
      std::vector<std::string> component;
      std::string w;
      do {
        w = stack.back();
        stack.pop_back();
        on_stack.erase(w);
        component.push_back(w);
      } while (w != v);
      const auto& out = adj[v];
      bool self_loop = std::find(out.begin(), out.end(), v) != out.end();
      if (component.size() > 1 || self_loop) {
        std::sort(component.begin(), component.end());
        report.partof_cycles.push_back(std::move(component));
      }
    }
  };
  for (const auto& v : nodes) {
    if (!index.count(v)) connect(v);
  }
  std::sort(report.partof_cycles.begin(), report.partof_cycles.end());
  return report;
}

}  // namespace bigthick::context
