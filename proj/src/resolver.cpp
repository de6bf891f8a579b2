#include "reef/error.hpp"
#include "reef/registry.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <set>

namespace reef {

using nlohmann::json;

namespace {

constexpr int kMaxRefinements = 64;

struct Requirement {
  VersionReq req;
  std::optional<ComponentId> from; // nullopt: root spec
};

json versions_json(std::vector<Version> const &vs) {
  json out = json::array();
  for (auto const &v : vs) {
    out.push_back(v.str());
  }
  return out;
}

std::optional<Version> max_satisfying(std::vector<IndexEntry> const &list, std::vector<Requirement> const &reqs) {
  for (auto it = list.rbegin(); it != list.rend(); ++it) {
    if (std::all_of(reqs.begin(), reqs.end(), [&](Requirement const &r) { return r.req.satisfies(it->version); })) {
      return it->version;
    }
  }
  return std::nullopt;
}

std::vector<IndexEntry> const &entries_or_throw(RegistryIndex const &index, ComponentId const &id) {
  auto it = index.entries().find(id);
  if (it == index.entries().end()) {
    throw Error(ErrorKind::UnknownComponent, id.str() + " is not in the registry", {{"id", id.str()}});
  }
  return it->second;
}

IndexEntry const &entry_at(RegistryIndex const &index, ComponentId const &id, Version const &v) {
  auto const *e = index.find(id, v);
  return *e; // callers only ask for versions taken from the index
}

/// One pass over the graph under a candidate assignment.
struct Traversal {
  std::vector<ComponentId> order; // discovery order
  std::map<ComponentId, Version> used;
  std::map<ComponentId, std::vector<Requirement>> reqs;
};

Traversal traverse(std::vector<DependencySpec> const &roots, RegistryIndex const &index, std::string const &platform,
                   std::map<ComponentId, Version> const &choice) {
  Traversal t;
  std::deque<ComponentId> queue;
  auto visit = [&](DependencySpec const &spec, std::optional<ComponentId> const &from) {
    if (!spec.applies_to(platform)) {
      return;
    }
    t.reqs[spec.id].push_back({spec.req, from});
    if (t.used.contains(spec.id) || std::find(queue.begin(), queue.end(), spec.id) != queue.end()) {
      return;
    }
    queue.push_back(spec.id);
  };
  for (auto const &spec : roots) {
    visit(spec, std::nullopt);
  }
  while (!queue.empty()) {
    auto id = queue.front();
    queue.pop_front();
    auto const &list = entries_or_throw(index, id);
    Version v;
    if (auto c = choice.find(id); c != choice.end()) {
      v = c->second;
    } else if (auto best = max_satisfying(list, t.reqs[id])) {
      v = *best;
    } else {
      // Requirements seen so far cannot be met; traverse the newest version and
      // let the refinement step report the precise error.
      v = list.back().version;
    }
    t.order.push_back(id);
    t.used[id] = v;
    for (auto const &dep : entry_at(index, id, v).dependencies) {
      visit(dep, id);
    }
  }
  return t;
}

/// Finds a dependency cycle among the traversed nodes, returned as a closed
/// path (first element repeated at the end).
std::vector<ComponentId> find_cycle(Traversal const &t, RegistryIndex const &index, std::string const &platform) {
  enum class Color { White, Grey, Black };
  std::map<ComponentId, Color> color;
  std::vector<ComponentId> stack;
  std::vector<ComponentId> cycle;

  std::function<bool(ComponentId const &)> dfs = [&](ComponentId const &id) {
    color[id] = Color::Grey;
    stack.push_back(id);
    for (auto const &dep : entry_at(index, id, t.used.at(id)).dependencies) {
      if (!dep.applies_to(platform) || !t.used.contains(dep.id)) {
        continue;
      }
      auto c = color[dep.id];
      if (c == Color::Grey) {
        auto start = std::find(stack.begin(), stack.end(), dep.id);
        cycle.assign(start, stack.end());
        cycle.push_back(dep.id);
        return true;
      }
      if (c == Color::White && dfs(dep.id)) {
        return true;
      }
    }
    stack.pop_back();
    color[id] = Color::Black;
    return false;
  };
  for (auto const &id : t.order) {
    if (color[id] == Color::White && dfs(id)) {
      return cycle;
    }
  }
  return {};
}

} // namespace

Version resolve(ComponentId const &id, VersionReq const &req, RegistryIndex const &index) {
  auto const &list = entries_or_throw(index, id);
  if (auto best = max_satisfying(list, {{req, std::nullopt}})) {
    return *best;
  }
  throw Error(ErrorKind::NoMatchingVersion, "no version of " + id.str() + " satisfies '" + req.str() + "'",
              {{"id", id.str()}, {"req", req.str()}, {"available", versions_json(index.versions(id))}});
}

std::vector<Pin> closure(std::vector<DependencySpec> const &specs, RegistryIndex const &index,
                         std::string const &platform) {
  std::map<ComponentId, Version> choice;
  std::optional<Traversal> stable;

  for (int round = 0; round < kMaxRefinements && !stable; ++round) {
    auto t = traverse(specs, index, platform, choice);

    std::map<ComponentId, Version> refined;
    for (auto const &id : t.order) {
      auto const &reqs = t.reqs.at(id);
      auto const &list = entries_or_throw(index, id);
      auto best = max_satisfying(list, reqs);
      if (!best) {
        std::set<std::string> distinct;
        json detail = json::array();
        for (auto const &r : reqs) {
          distinct.insert(r.req.str());
          detail.push_back({{"req", r.req.str()}, {"from", r.from ? r.from->str() : std::string("<root>")}});
        }
        if (distinct.size() == 1) {
          throw Error(ErrorKind::NoMatchingVersion,
                      "no version of " + id.str() + " satisfies '" + *distinct.begin() + "'",
                      {{"id", id.str()}, {"req", *distinct.begin()}, {"available", versions_json(index.versions(id))}});
        }
        std::string text;
        for (auto const &r : distinct) {
          text += (text.empty() ? "" : ", ") + r;
        }
        throw Error(ErrorKind::VersionConflict, "no single version of " + id.str() + " satisfies all of: " + text,
                    {{"id", id.str()}, {"requirements", detail}, {"available", versions_json(index.versions(id))}});
      }
      refined[id] = *best;
    }
    if (refined == t.used) {
      stable = std::move(t);
    } else {
      choice = std::move(refined);
    }
  }
  if (!stable) {
    throw Error(ErrorKind::VersionConflict, "dependency versions did not settle after " +
                                                std::to_string(kMaxRefinements) + " refinements");
  }

  // Cycles are judged on the settled graph only: an intermediate assignment
  // may pass through versions whose edges the final one does not have.
  if (auto cycle = find_cycle(*stable, index, platform); !cycle.empty()) {
    json path = json::array();
    std::string text;
    for (auto const &id : cycle) {
      path.push_back(id.str());
      text += (text.empty() ? "" : " -> ") + id.str();
    }
    throw Error(ErrorKind::CycleDetected, "dependency cycle: " + text, {{"cycle", path}});
  }

  // Post-order DFS from the roots: every dependency precedes its dependents.
  std::vector<Pin> pins;
  std::set<ComponentId> done;
  std::function<void(ComponentId const &)> emit = [&](ComponentId const &id) {
    if (!done.insert(id).second) {
      return;
    }
    auto const &entry = entry_at(index, id, stable->used.at(id));
    for (auto const &dep : entry.dependencies) {
      if (dep.applies_to(platform)) {
        emit(dep.id);
      }
    }
    pins.push_back({id, entry.version, entry.digest});
  };
  for (auto const &spec : specs) {
    if (spec.applies_to(platform)) {
      emit(spec.id);
    }
  }
  return pins;
}

} // namespace reef
