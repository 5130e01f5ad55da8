#pragma once

// Slot-filling dialogue environment: ontology, agenda-based simulated user,
// focus belief tracker, semantic-error channel, reward accounting, execution
// mask and the summary/master action machinery.  Deterministic given
// (config, seed, action sequence).

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "acerlab/common.hpp"

#include <nlohmann/json.hpp>

namespace acerlab {

// ---------------------------------------------------------------------------
// Ontology
// ---------------------------------------------------------------------------

struct Ontology {
  struct Entity {
    std::string name;
    std::vector<std::string> slot_values;  // one per informable slot
  };

  std::vector<std::string> informable;        // payload bit order
  std::vector<int> constraint_slots;          // indices into informable
  std::vector<int> requestable_slots;         // indices into informable
  std::vector<std::vector<std::string>> values;  // per constraint slot
  std::vector<Entity> entities;

  int n_constraints() const { return int(constraint_slots.size()); }
  int n_requestable() const { return int(requestable_slots.size()); }
  int n_payload() const { return 1 << int(informable.size()); }

  int value_index(int cslot, const std::string& v) const {
    const auto& vs = values[std::size_t(cslot)];
    auto it = std::find(vs.begin(), vs.end(), v);
    return it == vs.end() ? -1 : int(it - vs.begin());
  }

  // entity's value index within the constraint slot's value list
  int entity_value(int entity, int cslot) const {
    return value_index(cslot, entities[std::size_t(entity)]
                                  .slot_values[std::size_t(constraint_slots[std::size_t(cslot)])]);
  }

  void validate() const {
    if (entities.empty()) throw config_error("ontology has no entities");
    if (informable.empty() || informable.size() > 16)
      throw config_error("ontology: bad informable slot count");
    for (int c : constraint_slots)
      if (c < 0 || c >= int(informable.size()))
        throw config_error("ontology: constraint slot out of range");
    for (const auto& e : entities) {
      if (e.slot_values.size() != informable.size())
        throw config_error("ontology: entity " + e.name + " missing slots");
    }
    for (int cs = 0; cs < n_constraints(); ++cs)
      for (std::size_t ei = 0; ei < entities.size(); ++ei)
        if (entity_value(int(ei), cs) < 0)
          throw config_error("ontology: entity value not in slot value list");
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["informable_slots"] = informable;
    nlohmann::json cs = nlohmann::json::array();
    for (int c : constraint_slots) cs.push_back(informable[std::size_t(c)]);
    j["constraint_slots"] = cs;
    nlohmann::json rs = nlohmann::json::array();
    for (int r : requestable_slots) rs.push_back(informable[std::size_t(r)]);
    j["requestable_slots"] = rs;
    nlohmann::json es = nlohmann::json::array();
    for (const auto& e : entities) {
      nlohmann::json je;
      je["name"] = e.name;
      nlohmann::json slots;
      for (std::size_t s = 0; s < informable.size(); ++s) slots[informable[s]] = e.slot_values[s];
      je["slots"] = slots;
      es.push_back(je);
    }
    j["entities"] = es;
    return j;
  }

  static Ontology from_json(const nlohmann::json& j) {
    Ontology o;
    o.informable = j.at("informable_slots").get<std::vector<std::string>>();
    auto slot_index = [&](const std::string& s) {
      auto it = std::find(o.informable.begin(), o.informable.end(), s);
      if (it == o.informable.end()) throw config_error("ontology: unknown slot " + s);
      return int(it - o.informable.begin());
    };
    for (const auto& s : j.at("constraint_slots")) o.constraint_slots.push_back(slot_index(s));
    for (const auto& s : j.at("requestable_slots")) o.requestable_slots.push_back(slot_index(s));
    for (const auto& je : j.at("entities")) {
      Entity e;
      e.name = je.at("name").get<std::string>();
      e.slot_values.resize(o.informable.size());
      for (std::size_t s = 0; s < o.informable.size(); ++s)
        e.slot_values[s] = je.at("slots").at(o.informable[s]).get<std::string>();
      o.entities.push_back(std::move(e));
    }
    // value sets are derived from the entities, sorted for determinism
    o.values.resize(std::size_t(o.n_constraints()));
    for (int cs = 0; cs < o.n_constraints(); ++cs) {
      std::vector<std::string> vs;
      for (const auto& e : o.entities) {
        const auto& v = e.slot_values[std::size_t(o.constraint_slots[std::size_t(cs)])];
        if (std::find(vs.begin(), vs.end(), v) == vs.end()) vs.push_back(v);
      }
      std::sort(vs.begin(), vs.end());
      o.values[std::size_t(cs)] = std::move(vs);
    }
    o.validate();
    return o;
  }

  // Small fixed domain for fast tests: 2 constraint slots, 3 values each,
  // 12 entities; the full 8-slot informable set is kept so payloads stay
  // 8 bits wide.
  static Ontology toy() {
    nlohmann::json j;
    j["informable_slots"] = {"area", "food",    "description", "phone",
                             "pricerange", "address", "postcode",    "signature"};
    j["constraint_slots"] = {"area", "food"};
    j["requestable_slots"] = {"phone", "address", "postcode"};
    const char* areas[] = {"north", "south", "centre"};
    const char* foods[] = {"thai", "italian", "british"};
    const char* prices[] = {"cheap", "moderate", "expensive"};
    nlohmann::json es = nlohmann::json::array();
    int id = 0;
    for (int a = 0; a < 3; ++a)
      for (int f = 0; f < 3; ++f) {
        // 12 entities: one per (area, food) combo plus a second copy for 3
        int copies = (a == f) ? 2 : 1;
        for (int k = 0; k < copies; ++k) {
          nlohmann::json je;
          char name[32];
          std::snprintf(name, sizeof name, "rest_%02d", id);
          je["name"] = name;
          nlohmann::json slots;
          slots["area"] = areas[a];
          slots["food"] = foods[f];
          slots["pricerange"] = prices[(a + f + k) % 3];
          slots["description"] = std::string("desc_") + name;
          slots["phone"] = std::string("phone_") + name;
          slots["address"] = std::string("addr_") + name;
          slots["postcode"] = std::string("pc_") + name;
          slots["signature"] = std::string("sig_") + name;
          je["slots"] = slots;
          es.push_back(je);
          ++id;
        }
      }
    j["entities"] = es;
    return from_json(j);
  }

  // Larger synthetic domain: 3 constraint slots with cardinalities 5/7/3,
  // ~100 entities.
  static Ontology caminfo_like() {
    nlohmann::json j;
    j["informable_slots"] = {"area", "food",    "description", "phone",
                             "pricerange", "address", "postcode",    "signature"};
    j["constraint_slots"] = {"area", "food", "pricerange"};
    j["requestable_slots"] = {"phone", "address", "postcode"};
    const char* areas[] = {"north", "south", "east", "west", "centre"};
    const char* foods[] = {"thai", "italian", "british", "chinese", "indian", "french", "korean"};
    const char* prices[] = {"cheap", "moderate", "expensive"};
    nlohmann::json es = nlohmann::json::array();
    Rng rng(0x5eedc0deULL);
    for (int id = 0; id < 100; ++id) {
      nlohmann::json je;
      char name[32];
      std::snprintf(name, sizeof name, "rest_%03d", id);
      je["name"] = name;
      nlohmann::json slots;
      slots["area"] = areas[id < 5 ? id : rng.uniform_int(5)];
      slots["food"] = foods[id < 7 ? id % 7 : rng.uniform_int(7)];
      slots["pricerange"] = prices[id % 3];
      slots["description"] = std::string("desc_") + name;
      slots["phone"] = std::string("phone_") + name;
      slots["address"] = std::string("addr_") + name;
      slots["postcode"] = std::string("pc_") + name;
      slots["signature"] = std::string("sig_") + name;
      je["slots"] = slots;
      es.push_back(je);
    }
    j["entities"] = es;
    return from_json(j);
  }
};

// ---------------------------------------------------------------------------
// Actions
// ---------------------------------------------------------------------------

enum class SummaryKind {
  request,
  confirm,
  select_value,
  inform_standard,
  inform_byname,
  inform_requested,
  inform_alternatives,
  reqmore,
  bye
};

inline bool is_inform(SummaryKind k) {
  return k == SummaryKind::inform_standard || k == SummaryKind::inform_byname ||
         k == SummaryKind::inform_requested || k == SummaryKind::inform_alternatives;
}

struct SummaryAction {
  SummaryKind kind;
  int slot = -1;  // constraint-slot index for request/confirm/select
  bool operator==(const SummaryAction&) const = default;
};

struct MasterAction {
  SummaryAction summary;
  std::uint16_t payload = 0;  // bitmask over informable slots, inform only
  bool has_payload = false;
  bool operator==(const MasterAction&) const = default;
};

// Index layouts.  Summary: request x C, confirm x C, select x C, reqmore,
// bye (the non-inform block), then the 4 inform kinds.  Master: the same
// non-inform block first, then 4 inform kinds x payloads with the payload
// bitmask read as a little-endian integer.
class ActionSpace {
 public:
  ActionSpace() = default;
  explicit ActionSpace(const Ontology& o)
      : n_constraints_(o.n_constraints()), n_payload_(o.n_payload()) {}

  int n_constraints() const { return n_constraints_; }
  int n_noninform() const { return 3 * n_constraints_ + 2; }
  int n_summary() const { return n_noninform() + 4; }
  int n_payload() const { return n_payload_; }
  int n_master() const { return n_noninform() + 4 * n_payload_; }

  SummaryAction summary_at(int idx) const {
    const int C = n_constraints_;
    if (idx < 0 || idx >= n_summary()) throw config_error("summary index out of range");
    if (idx < C) return {SummaryKind::request, idx};
    if (idx < 2 * C) return {SummaryKind::confirm, idx - C};
    if (idx < 3 * C) return {SummaryKind::select_value, idx - 2 * C};
    if (idx == 3 * C) return {SummaryKind::reqmore, -1};
    if (idx == 3 * C + 1) return {SummaryKind::bye, -1};
    static const SummaryKind informs[4] = {SummaryKind::inform_standard, SummaryKind::inform_byname,
                                           SummaryKind::inform_requested,
                                           SummaryKind::inform_alternatives};
    return {informs[idx - n_noninform()], -1};
  }

  int index_summary(const SummaryAction& a) const {
    const int C = n_constraints_;
    switch (a.kind) {
      case SummaryKind::request: return a.slot;
      case SummaryKind::confirm: return C + a.slot;
      case SummaryKind::select_value: return 2 * C + a.slot;
      case SummaryKind::reqmore: return 3 * C;
      case SummaryKind::bye: return 3 * C + 1;
      case SummaryKind::inform_standard: return n_noninform() + 0;
      case SummaryKind::inform_byname: return n_noninform() + 1;
      case SummaryKind::inform_requested: return n_noninform() + 2;
      case SummaryKind::inform_alternatives: return n_noninform() + 3;
    }
    throw config_error("bad summary action");
  }

  int inform_kind_index(SummaryKind k) const {
    switch (k) {
      case SummaryKind::inform_standard: return 0;
      case SummaryKind::inform_byname: return 1;
      case SummaryKind::inform_requested: return 2;
      case SummaryKind::inform_alternatives: return 3;
      default: throw config_error("not an inform kind");
    }
  }

  MasterAction master_at(int idx) const {
    if (idx < 0 || idx >= n_master()) throw config_error("master index out of range");
    if (idx < n_noninform()) return {summary_at(idx), 0, false};
    const int rel = idx - n_noninform();
    const int kind = rel / n_payload_;
    const int payload = rel % n_payload_;
    return {summary_at(n_noninform() + kind), std::uint16_t(payload), true};
  }

  int index_master(const MasterAction& a) const {
    if (!is_inform(a.summary.kind)) return index_summary(a.summary);
    return n_noninform() + inform_kind_index(a.summary.kind) * n_payload_ + int(a.payload);
  }

 private:
  int n_constraints_ = 0;
  int n_payload_ = 256;
};

// ---------------------------------------------------------------------------
// Dialogue acts
// ---------------------------------------------------------------------------

enum class UserActType { none, hello, inform, request, reqalts, thankyou, bye };

struct UserAct {
  UserActType type = UserActType::none;
  std::vector<std::pair<int, int>> informs;  // (constraint slot, value index; -1 = dontcare)
  std::vector<int> requests;                 // requestable-slot indices (into requestable list)
};

// An act after the semantic error channel: same structure, values may be
// wrong, each concept carries a confidence.
struct ObservedUserAct {
  UserActType type = UserActType::none;
  double type_conf = 1.0;
  struct ObsInform {
    int slot;         // constraint slot
    int value;        // value index, -1 = dontcare
    double slot_conf;
    double value_conf;
  };
  std::vector<ObsInform> informs;
  struct ObsRequest {
    int slot;  // index into requestable list
    double slot_conf;
  };
  std::vector<ObsRequest> requests;
};

// ---------------------------------------------------------------------------
// Belief state
// ---------------------------------------------------------------------------

struct BeliefState {
  // per constraint slot: distribution over [values..., dontcare, none]
  std::vector<Vec> slot_dist;
  std::vector<char> requested;  // per requestable slot
  int last_offered = -1;        // entity index, -1 = none
  SummaryKind last_system_kind = SummaryKind::bye;  // valid iff any_system_act
  bool any_system_act = false;
  int turn = 0;
  bool name_mentioned = false;
  bool alternatives_requested = false;
  UserActType last_user_type = UserActType::none;

  int dontcare_index(int cslot) const { return int(slot_dist[std::size_t(cslot)].size()) - 2; }
  int none_index(int cslot) const { return int(slot_dist[std::size_t(cslot)].size()) - 1; }

  // argmax over the slot distribution; returns none/dontcare/value index
  int top_value(int cslot) const {
    const Vec& d = slot_dist[std::size_t(cslot)];
    return int(std::max_element(d.begin(), d.end()) - d.begin());
  }
  bool grounded(int cslot) const { return top_value(cslot) != none_index(cslot); }
};

// Focus rule: b'(v) = o(v) + (1 - sum_u o(u)) * b(v).
inline void focus_update(Vec& dist, const std::vector<std::pair<int, double>>& observation) {
  double total = 0.0;
  for (auto [idx, conf] : observation) {
    if (conf < 0.0 || conf > 1.0) throw input_error("focus_update: confidence out of [0,1]");
    total += conf;
  }
  if (total > 1.0 + 1e-12) throw input_error("focus_update: observation mass > 1");
  for (double& b : dist) b *= (1.0 - total);
  for (auto [idx, conf] : observation) dist[std::size_t(idx)] += conf;
}

// ---------------------------------------------------------------------------
// Semantic error channel
// ---------------------------------------------------------------------------

// Each semantic concept (act type, slot name, value) is independently
// replaced with probability e by a uniformly random different alternative.
// Corrupted concepts carry confidence in [0.4, 0.9], clean ones in
// [0.7, 1.0]; at e = 0 all confidences are exactly 1.
inline ObservedUserAct corrupt_semantics(const UserAct& act, double e, const Ontology& ont,
                                         Rng& rng) {
  if (e < 0.0 || e > 1.0) throw config_error("error rate out of [0,1]");
  auto conf = [&](bool corrupted) {
    if (e == 0.0) return 1.0;
    return corrupted ? rng.uniform(0.4, 0.9) : rng.uniform(0.7, 1.0);
  };
  auto flip = [&]() { return e > 0.0 && rng.uniform() < e; };

  ObservedUserAct obs;
  static const UserActType types[] = {UserActType::hello,    UserActType::inform,
                                      UserActType::request,  UserActType::reqalts,
                                      UserActType::thankyou, UserActType::bye};
  obs.type = act.type;
  bool type_bad = act.type != UserActType::none && flip();
  if (type_bad) {
    UserActType t;
    do {
      t = types[rng.uniform_int(6)];
    } while (t == act.type);
    obs.type = t;
  }
  obs.type_conf = act.type == UserActType::none ? 1.0 : conf(type_bad);

  for (auto [slot, value] : act.informs) {
    ObservedUserAct::ObsInform oi;
    bool slot_bad = flip();
    oi.slot = slot;
    if (slot_bad && ont.n_constraints() > 1) {
      do {
        oi.slot = rng.uniform_int(ont.n_constraints());
      } while (oi.slot == slot);
    }
    oi.slot_conf = conf(slot_bad);
    bool value_bad = flip();
    oi.value = value;
    const int nv = int(ont.values[std::size_t(oi.slot)].size());
    if (value_bad) {
      // alternatives: the slot's values plus dontcare, excluding the original
      int v;
      do {
        v = rng.uniform_int(nv + 1) - 1;  // -1 = dontcare
      } while (v == value);
      oi.value = v;
    } else if (oi.slot != slot && value >= 0 &&
               value >= int(ont.values[std::size_t(oi.slot)].size())) {
      oi.value = rng.uniform_int(nv);  // slot swap left the value out of range
    }
    oi.value_conf = conf(value_bad);
    obs.informs.push_back(oi);
  }
  for (int r : act.requests) {
    ObservedUserAct::ObsRequest orq;
    bool slot_bad = flip();
    orq.slot = r;
    if (slot_bad && ont.n_requestable() > 1) {
      do {
        orq.slot = rng.uniform_int(ont.n_requestable());
      } while (orq.slot == r);
    }
    orq.slot_conf = conf(slot_bad);
    obs.requests.push_back(orq);
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Environment config
// ---------------------------------------------------------------------------

enum class ActionMode { summary, master };

struct EnvConfig {
  double error_rate = 0.0;
  bool mask_enabled = true;
  ActionMode mode = ActionMode::summary;
  std::uint64_t seed = 0;
  double goal_change_prob = 0.05;
  double user_opens_prob = 0.7;
  double reqalts_prob = 0.15;
  int patience = 0;  // 0 = unlimited; otherwise user hangs up after this many
                     // consecutive unhelpful system turns
  int max_turns = 25;

  void validate() const {
    if (error_rate < 0.0 || error_rate > 1.0) throw config_error("error_rate out of [0,1]");
    if (goal_change_prob < 0.0 || goal_change_prob > 1.0)
      throw config_error("goal_change_prob out of [0,1]");
  }
};

struct UserGoal {
  std::vector<int> constraint_value;  // per constraint slot; -1 = unconstrained
  std::vector<int> requests;          // requestable-slot indices
};

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

class DialogueEnv {
 public:
  DialogueEnv(Ontology ontology, EnvConfig config)
      : ont_(std::move(ontology)), cfg_(config), space_(ont_) {
    cfg_.validate();
    ont_.validate();
  }

  const Ontology& ontology() const { return ont_; }
  const ActionSpace& actions() const { return space_; }
  const EnvConfig& config() const { return cfg_; }
  const BeliefState& belief() const { return belief_; }
  const UserGoal& goal() const { return goal_; }

  int n_actions() const {
    return cfg_.mode == ActionMode::master ? space_.n_master() : space_.n_summary();
  }

  struct StepResult {
    double reward = 0.0;
    BeliefState belief;
    Mask mask;
    bool done = false;
  };

  std::pair<BeliefState, Mask> reset(std::uint64_t episode_seed) {
    rng_ = Rng(episode_seed);
    sample_goal();
    begin_dialogue();
    return {belief_, execution_mask(belief_)};
  }

  // Test hook: start a dialogue with a fixed goal and scripted user choices.
  struct ScriptOptions {
    bool opens_with_constraints = true;
    bool reqalts_on_first_offer = false;
  };
  std::pair<BeliefState, Mask> reset_scripted(const UserGoal& goal, ScriptOptions opts,
                                              std::uint64_t episode_seed = 1) {
    rng_ = Rng(episode_seed);
    goal_ = goal;
    scripted_ = opts;
    use_script_ = true;
    begin_dialogue();
    return {belief_, execution_mask(belief_)};
  }

  StepResult step(const MasterAction& action) {
    if (done_) throw protocol_error("step on a finished dialogue");
    if (cfg_.mask_enabled) {
      Mask m = execution_mask(belief_);
      int idx = cfg_.mode == ActionMode::master ? space_.index_master(action)
                                                : space_.index_summary(action.summary);
      if (!m[std::size_t(idx)]) throw protocol_error("masked action selected");
    }
    ++turns_;
    double reward = -1.0;

    maybe_change_goal();
    UserAct response = react(action);
    bool helpful = last_action_helpful_;
    if (action.summary.kind == SummaryKind::bye || response.type == UserActType::bye ||
        turns_ >= cfg_.max_turns)
      done_ = true;
    if (!helpful && cfg_.patience > 0) {
      if (++impatience_ >= cfg_.patience) done_ = true;
    } else if (helpful) {
      impatience_ = 0;
    }

    if (done_ && dialogue_success()) {
      success_ = true;
      reward += 20.0;
    }

    // observe through the error channel and track
    belief_.turn = turns_;
    belief_.last_system_kind = action.summary.kind;
    belief_.any_system_act = true;
    if (!done_ || response.type != UserActType::none) {
      ObservedUserAct obs = corrupt_semantics(response, cfg_.error_rate, ont_, rng_);
      apply_observation(obs);
    }

    StepResult r;
    r.reward = reward;
    r.belief = belief_;
    r.mask = execution_mask(belief_);
    r.done = done_;
    return r;
  }

  bool done() const { return done_; }
  bool last_success() const { return success_; }
  int turns() const { return turns_; }

  // ---- execution mask -----------------------------------------------------

  Mask execution_mask(const BeliefState& b) const {
    Mask summary(std::size_t(space_.n_summary()), 1);
    if (cfg_.mask_enabled) {
      bool any_grounded = false;
      for (int cs = 0; cs < ont_.n_constraints(); ++cs)
        if (b.grounded(cs)) any_grounded = true;
      bool offered = b.last_offered >= 0;
      auto set = [&](SummaryAction a, bool valid) {
        summary[std::size_t(space_.index_summary(a))] = valid ? 1 : 0;
      };
      for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
        bool mass_off_none = b.grounded(cs);
        set({SummaryKind::confirm, cs}, mass_off_none);
        set({SummaryKind::select_value, cs}, mass_off_none);
      }
      set({SummaryKind::inform_standard, -1}, any_grounded || offered);
      set({SummaryKind::inform_byname, -1}, b.name_mentioned);
      set({SummaryKind::inform_requested, -1}, offered);
      set({SummaryKind::inform_alternatives, -1}, offered);
    }
    if (cfg_.mode == ActionMode::summary) return summary;
    // broadcast summary validity across payloads
    Mask master(std::size_t(space_.n_master()), 1);
    for (int i = 0; i < space_.n_master(); ++i) {
      MasterAction a = space_.master_at(i);
      master[std::size_t(i)] = summary[std::size_t(space_.index_summary(a.summary))];
    }
    return master;
  }

  // ---- summary -> master payload heuristic --------------------------------

  // Payload: the name bit always, plus requested slots, plus constraint
  // slots the user has specified (for grounding).  Non-inform actions pass
  // through.
  MasterAction summary_to_master(const BeliefState& b, const SummaryAction& a) const {
    if (!is_inform(a.kind)) return {a, 0, false};
    std::uint16_t payload = 0;
    for (int r = 0; r < ont_.n_requestable(); ++r)
      if (b.requested[std::size_t(r)])
        payload |= std::uint16_t(1u << ont_.requestable_slots[std::size_t(r)]);
    for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
      int top = b.top_value(cs);
      if (top != b.none_index(cs) && top != b.dontcare_index(cs))
        payload |= std::uint16_t(1u << ont_.constraint_slots[std::size_t(cs)]);
    }
    return {a, payload, true};
  }

  // ---- featurization ------------------------------------------------------

  // per-slot distributions + one-hot last-system-act kind (incl. "none") +
  // requested indicators + offered flag + normalised turn count
  int feature_dim() const {
    int n = 0;
    for (int cs = 0; cs < ont_.n_constraints(); ++cs)
      n += int(ont_.values[std::size_t(cs)].size()) + 2;
    n += 10;  // 9 summary kinds + "no system act yet"
    n += ont_.n_requestable();
    n += 2;  // offered flag, turn
    return n;
  }

  Vec featurize(const BeliefState& b) const {
    Vec f;
    f.reserve(std::size_t(feature_dim()));
    for (const auto& d : b.slot_dist) f.insert(f.end(), d.begin(), d.end());
    Vec kind(10, 0.0);
    kind[b.any_system_act ? std::size_t(b.last_system_kind) + 1 : 0] = 1.0;
    f.insert(f.end(), kind.begin(), kind.end());
    for (char r : b.requested) f.push_back(r ? 1.0 : 0.0);
    f.push_back(b.last_offered >= 0 ? 1.0 : 0.0);
    f.push_back(double(b.turn) / double(cfg_.max_turns));
    return f;
  }

 private:
  Ontology ont_;
  EnvConfig cfg_;
  ActionSpace space_;
  Rng rng_{0};

  UserGoal goal_;
  std::vector<char> request_satisfied_;
  std::vector<UserAct> agenda_;  // stack of pending user acts
  BeliefState belief_;
  int offered_ = -1;
  bool offer_matched_ = false;   // user has seen a matching offer
  bool reqalts_done_ = false;
  bool done_ = false;
  bool success_ = false;
  int turns_ = 0;
  int impatience_ = 0;
  bool last_action_helpful_ = false;
  bool use_script_ = false;
  ScriptOptions scripted_;

  void sample_goal() {
    use_script_ = false;
    const int C = ont_.n_constraints();
    int target = rng_.uniform_int(int(ont_.entities.size()));
    int nc = 1 + rng_.uniform_int(std::min(3, C));
    std::vector<int> order(std::size_t(C), 0);
    for (int i = 0; i < C; ++i) order[std::size_t(i)] = i;
    for (int i = C - 1; i > 0; --i) std::swap(order[std::size_t(i)], order[std::size_t(rng_.uniform_int(i + 1))]);
    goal_.constraint_value.assign(std::size_t(C), -1);
    for (int i = 0; i < nc; ++i) {
      int cs = order[std::size_t(i)];
      goal_.constraint_value[std::size_t(cs)] = ont_.entity_value(target, cs);
    }
    const int R = ont_.n_requestable();
    int nr = rng_.uniform_int(std::min(3, R) + 1);
    std::vector<int> rorder(std::size_t(R), 0);
    for (int i = 0; i < R; ++i) rorder[std::size_t(i)] = i;
    for (int i = R - 1; i > 0; --i) std::swap(rorder[std::size_t(i)], rorder[std::size_t(rng_.uniform_int(i + 1))]);
    goal_.requests.assign(rorder.begin(), rorder.begin() + nr);
  }

  void begin_dialogue() {
    request_satisfied_.assign(goal_.requests.size(), 0);
    agenda_.clear();
    offered_ = -1;
    offer_matched_ = false;
    reqalts_done_ = false;
    done_ = false;
    success_ = false;
    turns_ = 0;
    impatience_ = 0;

    // agenda: constraints to volunteer, in random order (top = back)
    std::vector<int> constrained;
    for (int cs = 0; cs < ont_.n_constraints(); ++cs)
      if (goal_.constraint_value[std::size_t(cs)] >= 0) constrained.push_back(cs);
    for (int i = int(constrained.size()) - 1; i > 0; --i)
      std::swap(constrained[std::size_t(i)], constrained[std::size_t(rng_.uniform_int(i + 1))]);
    for (int cs : constrained)
      agenda_.push_back(make_inform(cs));

    // fresh belief
    belief_ = BeliefState{};
    belief_.slot_dist.resize(std::size_t(ont_.n_constraints()));
    for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
      Vec d(ont_.values[std::size_t(cs)].size() + 2, 0.0);
      d.back() = 1.0;  // all mass on "none"
      belief_.slot_dist[std::size_t(cs)] = d;
    }
    belief_.requested.assign(std::size_t(ont_.n_requestable()), 0);

    // opening user act
    bool opens = use_script_ ? scripted_.opens_with_constraints
                             : (rng_.uniform() < cfg_.user_opens_prob);
    UserAct opening;
    if (opens && !agenda_.empty()) {
      opening.type = UserActType::inform;
      int k = use_script_ ? int(agenda_.size()) : 1 + rng_.uniform_int(int(agenda_.size()));
      for (int i = 0; i < k; ++i) {
        opening.informs.push_back(agenda_.back().informs[0]);
        agenda_.pop_back();
      }
    } else {
      opening.type = UserActType::hello;
    }
    ObservedUserAct obs = corrupt_semantics(opening, cfg_.error_rate, ont_, rng_);
    apply_observation(obs);
  }

  UserAct make_inform(int cslot) const {
    UserAct a;
    a.type = UserActType::inform;
    a.informs.push_back({cslot, goal_.constraint_value[std::size_t(cslot)]});
    return a;
  }

  void maybe_change_goal() {
    if (offer_matched_ || use_script_) return;
    if (cfg_.goal_change_prob <= 0.0 || rng_.uniform() >= cfg_.goal_change_prob) return;
    int target = rng_.uniform_int(int(ont_.entities.size()));
    for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
      if (goal_.constraint_value[std::size_t(cs)] < 0) continue;
      int nv = ont_.entity_value(target, cs);
      if (nv != goal_.constraint_value[std::size_t(cs)]) {
        goal_.constraint_value[std::size_t(cs)] = nv;
        // user will mention the correction when it gets a chance
        agenda_.push_back(make_inform(cs));
      }
    }
  }

  // believed constraint (value string) per constraint slot; nullopt = no filter
  std::optional<std::string> believed_constraint(int cslot) const {
    int top = belief_.top_value(cslot);
    if (top == belief_.none_index(cslot) || top == belief_.dontcare_index(cslot))
      return std::nullopt;
    return ont_.values[std::size_t(cslot)][std::size_t(top)];
  }

  bool entity_matches_belief(int entity) const {
    for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
      auto want = believed_constraint(cs);
      if (!want) continue;
      if (ont_.entities[std::size_t(entity)]
              .slot_values[std::size_t(ont_.constraint_slots[std::size_t(cs)])] != *want)
        return false;
    }
    return true;
  }

  bool entity_matches_goal(int entity) const {
    for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
      int want = goal_.constraint_value[std::size_t(cs)];
      if (want < 0) continue;
      if (ont_.entity_value(entity, cs) != want) return false;
    }
    return true;
  }

  int first_match(int after = -1) const {
    const int n = int(ont_.entities.size());
    for (int k = 1; k <= n; ++k) {
      int e = (after + k) % n;
      if (entity_matches_belief(e)) return e;
    }
    return -1;
  }

  bool all_requests_satisfied() const {
    for (char s : request_satisfied_)
      if (!s) return false;
    return true;
  }

  bool dialogue_success() const {
    return offered_ >= 0 && entity_matches_goal(offered_) && all_requests_satisfied();
  }

  int first_violated_slot() const {
    for (int cs = 0; cs < ont_.n_constraints(); ++cs) {
      int want = goal_.constraint_value[std::size_t(cs)];
      if (want < 0) continue;
      if (ont_.entity_value(offered_, cs) != want) return cs;
    }
    return -1;
  }

  UserAct react(const MasterAction& action) {
    last_action_helpful_ = false;
    const SummaryKind kind = action.summary.kind;
    UserAct none_act;

    switch (kind) {
      case SummaryKind::bye:
        return none_act;

      case SummaryKind::request:
      case SummaryKind::confirm:
      case SummaryKind::select_value: {
        last_action_helpful_ = true;
        UserAct a;
        a.type = UserActType::inform;
        int cs = action.summary.slot;
        a.informs.push_back({cs, goal_.constraint_value[std::size_t(cs)]});
        // volunteering this constraint is no longer needed
        agenda_.erase(std::remove_if(agenda_.begin(), agenda_.end(),
                                     [&](const UserAct& p) {
                                       return !p.informs.empty() && p.informs[0].first == cs;
                                     }),
                      agenda_.end());
        return a;
      }

      case SummaryKind::reqmore: {
        if (!agenda_.empty()) {
          last_action_helpful_ = true;
          UserAct a = agenda_.back();
          agenda_.pop_back();
          return a;
        }
        if (offered_ >= 0 && entity_matches_goal(offered_)) {
          if (all_requests_satisfied()) {
            last_action_helpful_ = true;
            UserAct a;
            a.type = UserActType::bye;
            return a;
          }
          UserAct a;
          a.type = UserActType::request;
          a.requests.push_back(next_pending_request());
          return a;
        }
        // nothing new to say: restate a constraint
        for (int cs = 0; cs < ont_.n_constraints(); ++cs)
          if (goal_.constraint_value[std::size_t(cs)] >= 0) return make_inform(cs);
        return none_act;
      }

      case SummaryKind::inform_standard:
      case SummaryKind::inform_byname:
      case SummaryKind::inform_requested:
      case SummaryKind::inform_alternatives: {
        int entity = resolve_entity(kind);
        if (entity < 0) {
          // nothing in the database matches: user restates a constraint
          for (int cs = 0; cs < ont_.n_constraints(); ++cs)
            if (goal_.constraint_value[std::size_t(cs)] >= 0) return make_inform(cs);
          return none_act;
        }
        if (entity != offered_) {
          offered_ = entity;
          std::fill(request_satisfied_.begin(), request_satisfied_.end(), 0);
        }
        belief_.last_offered = offered_;
        belief_.name_mentioned = true;
        // the payload delivers information about the offered entity
        std::uint16_t payload =
            action.has_payload ? action.payload : summary_to_master(belief_, action.summary).payload;
        for (std::size_t r = 0; r < goal_.requests.size(); ++r) {
          int slot = ont_.requestable_slots[std::size_t(goal_.requests[r])];
          if (payload & (1u << slot)) request_satisfied_[r] = 1;
        }
        if (!entity_matches_goal(offered_)) {
          int cs = first_violated_slot();
          if (cs >= 0) return make_inform(cs);
          return none_act;
        }
        last_action_helpful_ = true;
        bool want_alt = use_script_ ? (scripted_.reqalts_on_first_offer && !reqalts_done_)
                                    : (!offer_matched_ && !reqalts_done_ &&
                                       rng_.uniform() < cfg_.reqalts_prob);
        offer_matched_ = true;
        if (want_alt) {
          reqalts_done_ = true;
          UserAct a;
          a.type = UserActType::reqalts;
          return a;
        }
        if (!all_requests_satisfied()) {
          UserAct a;
          a.type = UserActType::request;
          a.requests.push_back(next_pending_request());
          return a;
        }
        UserAct a;
        a.type = UserActType::bye;
        return a;
      }
    }
    return none_act;
  }

  int next_pending_request() const {
    for (std::size_t r = 0; r < goal_.requests.size(); ++r)
      if (!request_satisfied_[r]) return goal_.requests[r];
    return goal_.requests.empty() ? 0 : goal_.requests[0];
  }

  int resolve_entity(SummaryKind kind) const {
    switch (kind) {
      case SummaryKind::inform_standard:
        return first_match();
      case SummaryKind::inform_byname:
        return offered_ >= 0 ? offered_ : first_match();
      case SummaryKind::inform_requested:
        return offered_ >= 0 ? offered_ : first_match();
      case SummaryKind::inform_alternatives:
        return offered_ >= 0 ? first_match(offered_) : first_match();
      default:
        return -1;
    }
  }

  void apply_observation(const ObservedUserAct& obs) {
    belief_.last_user_type = obs.type;
    if (obs.type == UserActType::reqalts) belief_.alternatives_requested = true;
    for (const auto& oi : obs.informs) {
      Vec& d = belief_.slot_dist[std::size_t(oi.slot)];
      int idx;
      if (oi.value < 0)
        idx = belief_.dontcare_index(oi.slot);
      else if (oi.value < int(ont_.values[std::size_t(oi.slot)].size()))
        idx = oi.value;
      else
        continue;  // value does not exist for this slot, drop it
      double conf = obs.type_conf * oi.slot_conf * oi.value_conf;
      focus_update(d, {{idx, conf}});
    }
    for (const auto& orq : obs.requests)
      if (orq.slot >= 0 && orq.slot < int(belief_.requested.size()))
        belief_.requested[std::size_t(orq.slot)] = 1;
  }
};

// ---------------------------------------------------------------------------
// Trace format ("SYS: act" / "USR: act")
// ---------------------------------------------------------------------------

inline std::string summary_kind_name(SummaryKind k) {
  switch (k) {
    case SummaryKind::request: return "request";
    case SummaryKind::confirm: return "confirm";
    case SummaryKind::select_value: return "select";
    case SummaryKind::inform_standard: return "inform";
    case SummaryKind::inform_byname: return "inform_byname";
    case SummaryKind::inform_requested: return "inform_requested";
    case SummaryKind::inform_alternatives: return "inform_alternatives";
    case SummaryKind::reqmore: return "reqmore";
    case SummaryKind::bye: return "bye";
  }
  return "?";
}

inline std::string format_system_act(const Ontology& ont, const MasterAction& a) {
  std::ostringstream os;
  os << "SYS: " << summary_kind_name(a.summary.kind);
  if (a.summary.slot >= 0)
    os << "_" << ont.informable[std::size_t(ont.constraint_slots[std::size_t(a.summary.slot)])];
  os << "(";
  if (a.has_payload) {
    bool first = true;
    os << "name";
    first = false;
    for (std::size_t s = 0; s < ont.informable.size(); ++s)
      if (a.payload & (1u << s)) {
        if (!first) os << ",";
        os << ont.informable[s];
        first = false;
      }
  }
  os << ")";
  return os.str();
}

inline std::string format_user_act(const Ontology& ont, const UserAct& a) {
  std::ostringstream os;
  os << "USR: ";
  switch (a.type) {
    case UserActType::none: os << "none"; break;
    case UserActType::hello: os << "hello"; break;
    case UserActType::inform: os << "inform"; break;
    case UserActType::request: os << "request"; break;
    case UserActType::reqalts: os << "reqalts"; break;
    case UserActType::thankyou: os << "thankyou"; break;
    case UserActType::bye: os << "bye"; break;
  }
  os << "(";
  bool first = true;
  for (auto [slot, value] : a.informs) {
    if (!first) os << ",";
    os << ont.informable[std::size_t(ont.constraint_slots[std::size_t(slot)])] << "="
       << (value < 0 ? "dontcare" : ont.values[std::size_t(slot)][std::size_t(value)]);
    first = false;
  }
  for (int r : a.requests) {
    if (!first) os << ",";
    os << ont.informable[std::size_t(ont.requestable_slots[std::size_t(r)])];
    first = false;
  }
  os << ")";
  return os.str();
}

// Parses "SYS: kind[_slot](payload...)" lines into a MasterAction.
inline MasterAction parse_system_line(const Ontology& ont, const ActionSpace& space,
                                      const std::string& line) {
  auto pos = line.find("SYS:");
  if (pos == std::string::npos) throw input_error("trace line missing SYS: " + line);
  std::string body = line.substr(pos + 4);
  while (!body.empty() && body.front() == ' ') body.erase(body.begin());
  auto paren = body.find('(');
  std::string head = paren == std::string::npos ? body : body.substr(0, paren);
  std::string args = paren == std::string::npos
                         ? ""
                         : body.substr(paren + 1, body.find(')', paren) - paren - 1);
  auto slot_suffix = [&](const std::string& prefix) -> int {
    std::string s = head.substr(prefix.size() + 1);
    for (int cs = 0; cs < ont.n_constraints(); ++cs)
      if (ont.informable[std::size_t(ont.constraint_slots[std::size_t(cs)])] == s) return cs;
    throw input_error("trace: unknown slot " + s);
  };
  MasterAction a;
  if (head.rfind("request_", 0) == 0)
    a.summary = {SummaryKind::request, slot_suffix("request")};
  else if (head.rfind("confirm_", 0) == 0)
    a.summary = {SummaryKind::confirm, slot_suffix("confirm")};
  else if (head.rfind("select_", 0) == 0)
    a.summary = {SummaryKind::select_value, slot_suffix("select")};
  else if (head == "inform_byname")
    a.summary = {SummaryKind::inform_byname, -1};
  else if (head == "inform_requested")
    a.summary = {SummaryKind::inform_requested, -1};
  else if (head == "inform_alternatives")
    a.summary = {SummaryKind::inform_alternatives, -1};
  else if (head == "inform")
    a.summary = {SummaryKind::inform_standard, -1};
  else if (head == "reqmore")
    a.summary = {SummaryKind::reqmore, -1};
  else if (head == "bye")
    a.summary = {SummaryKind::bye, -1};
  else
    throw input_error("trace: unknown system act " + head);
  if (is_inform(a.summary.kind) && !args.empty()) {
    a.has_payload = true;
    std::stringstream ss(args);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item == "name") continue;
      auto it = std::find(ont.informable.begin(), ont.informable.end(), item);
      if (it == ont.informable.end()) throw input_error("trace: unknown payload slot " + item);
      a.payload |= std::uint16_t(1u << (it - ont.informable.begin()));
    }
  }
  (void)space;
  return a;
}

}  // namespace acerlab
