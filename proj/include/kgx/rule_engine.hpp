#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kgx/kg_store.hpp"
#include "kgx/rule.hpp"

namespace kgx {

// Assignment of entities to the body variables of a rule.
struct Instantiation {
    std::map<std::string, EntityId> bindings;

    bool operator==(const Instantiation &) const = default;
};

struct LabelTriple {
    std::string subject;
    std::string predicate;
    std::string object;

    bool operator==(const LabelTriple &) const = default;
};

// A rule with every variable replaced by an entity label.
struct GroundedRule {
    std::string rule_id;
    std::map<std::string, std::string> bindings;
    std::vector<LabelTriple> body;
    LabelTriple head;
    bool head_in_kg = false;

    bool operator==(const GroundedRule &) const = default;
};

// Support, head coverage and standard confidence of a rule. Variables range
// over the store's entities. The confidence denominator counts distinct head
// (subject, object) pairs for which the body holds.
RuleMetrics compute_metrics(const Rule &rule, const TripleStore &store);

inline constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

// Visits distinct body bindings. Atoms are joined in ascending order of
// candidate facts given the variables bound so far. Returning false from the
// visitor stops the enumeration.
void for_each_instantiation(const Rule &rule, const TripleStore &store,
                            const std::function<bool(const Instantiation &)> &visit);

std::vector<Instantiation> instantiate(const Rule &rule, const TripleStore &store,
                                       std::size_t limit = kUnlimited);

GroundedRule ground(const Rule &rule, const TripleStore &store, const Instantiation &inst);

// Same layout as the machine rule rendering, with labels in place of terms.
std::string render_grounded(const GroundedRule &g);

// Up to k distinct groundings, drawn uniformly by reservoir sampling over the
// instantiation stream. Output is deterministic per seed and ordered by
// position in the stream.
std::vector<GroundedRule> sample_instances(const Rule &rule, const TripleStore &store,
                                           std::size_t k, std::uint64_t seed);

struct MiningThresholds {
    double min_head_coverage = 0.1;
    double min_std_confidence = 0.1;
    std::size_t max_atoms = 3;
};

struct MinedRule {
    Rule rule;
    RuleMetrics metrics;
};

// Closed, connected, constant-free rules with a head `?a r ?b`, body atoms
// over ?a, ?b and at most one extra variable ?c. Body atoms never repeat and
// never equal the head. Output is ordered by head relation label, then
// machine text; body atoms are sorted by their machine text.
std::vector<MinedRule> mine_rules(const TripleStore &store, const MiningThresholds &thresholds,
                                  unsigned jobs = 1);

} // namespace kgx
