#include "kgx/rule_engine.hpp"

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>
#include <unordered_set>

#include "kgx/random.hpp"

namespace kgx {

namespace {

struct Slot {
    bool is_var = false;
    std::uint32_t var = 0;
    EntityId value = kNoEntity; // constant id; kNoEntity when absent from the store
};

struct CompiledAtom {
    PredicateId predicate = 0;
    bool known_predicate = false;
    Slot subject;
    Slot object;
};

struct CompiledRule {
    std::vector<std::string> variables; // body variables first
    std::size_t body_variable_count = 0;
    std::vector<CompiledAtom> body;
    CompiledAtom head;
    bool body_satisfiable = true;
};

CompiledRule compile(const Rule &rule, const TripleStore &store) {
    CompiledRule c;
    auto var_index = [&](const std::string &name) {
        const auto it = std::find(c.variables.begin(), c.variables.end(), name);
        if (it != c.variables.end())
            return static_cast<std::uint32_t>(it - c.variables.begin());
        c.variables.push_back(name);
        return static_cast<std::uint32_t>(c.variables.size() - 1);
    };
    auto slot = [&](const Term &t) {
        Slot s;
        if (t.is_variable()) {
            s.is_var = true;
            s.var = var_index(t.text);
        } else if (const auto id = store.entity(t.text)) {
            s.value = *id;
        }
        return s;
    };
    auto atom = [&](const Atom &a) {
        CompiledAtom out;
        if (const auto p = store.predicate(a.relation)) {
            out.predicate = *p;
            out.known_predicate = true;
        }
        out.subject = slot(a.subject);
        out.object = slot(a.object);
        return out;
    };
    for (const auto &a : rule.body) {
        c.body.push_back(atom(a));
        const auto &ca = c.body.back();
        if (!ca.known_predicate || (!ca.subject.is_var && ca.subject.value == kNoEntity) ||
            (!ca.object.is_var && ca.object.value == kNoEntity))
            c.body_satisfiable = false;
    }
    c.body_variable_count = c.variables.size();
    c.head = atom(rule.head);
    return c;
}

// Backtracking join over the body atoms of a compiled rule.
class Join {
  public:
    Join(const TripleStore &store, const CompiledRule &rule)
        : store_(store), atoms_(rule.body), binding_(rule.variables.size(), kNoEntity) {}

    std::vector<EntityId> &binding() { return binding_; }

    // Runs `visit` on every complete body binding. Returns false when the
    // visitor asked to stop.
    template <class Visit> bool run(Visit &&visit) {
        const std::uint32_t all = (1u << atoms_.size()) - 1;
        return step(all, visit);
    }

    // Distinct projections of the body bindings onto `vars` (at most two),
    // packed into 64-bit keys.
    std::vector<std::uint64_t> projections(const std::vector<std::uint32_t> &vars) {
        proj_vars_ = vars;
        std::unordered_set<std::uint64_t> seen;
        std::vector<std::uint64_t> out;
        const std::uint32_t all = (1u << atoms_.size()) - 1;
        project(all, seen, out);
        return out;
    }

  private:
    const TripleStore &store_;
    const std::vector<CompiledAtom> &atoms_;
    std::vector<EntityId> binding_;
    std::vector<std::uint32_t> proj_vars_;

    EntityId value(const Slot &s) const { return s.is_var ? binding_[s.var] : s.value; }

    std::size_t estimate(const CompiledAtom &a) const {
        const EntityId s = value(a.subject);
        const EntityId o = value(a.object);
        if (s != kNoEntity && o != kNoEntity)
            return 0;
        if (s != kNoEntity)
            return store_.objects(a.predicate, s).size();
        if (o != kNoEntity)
            return store_.subjects(a.predicate, o).size();
        return store_.fact_count(a.predicate);
    }

    std::size_t pick(std::uint32_t remaining) const {
        std::size_t best = 0;
        std::size_t best_cost = std::numeric_limits<std::size_t>::max();
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            if (!(remaining & (1u << i)))
                continue;
            const auto cost = estimate(atoms_[i]);
            if (cost < best_cost) {
                best = i;
                best_cost = cost;
            }
        }
        return best;
    }

    template <class Visit> bool step(std::uint32_t remaining, Visit &visit) {
        if (remaining == 0)
            return visit();
        const std::size_t i = pick(remaining);
        const auto &a = atoms_[i];
        const std::uint32_t rest = remaining & ~(1u << i);
        const EntityId s = value(a.subject);
        const EntityId o = value(a.object);

        if (s != kNoEntity && o != kNoEntity)
            return store_.contains(s, a.predicate, o) ? step(rest, visit) : true;

        if (s != kNoEntity) {
            for (const auto &f : store_.objects(a.predicate, s)) {
                binding_[a.object.var] = f.value;
                const bool go = step(rest, visit);
                binding_[a.object.var] = kNoEntity;
                if (!go)
                    return false;
            }
            return true;
        }
        if (o != kNoEntity) {
            for (const auto &f : store_.subjects(a.predicate, o)) {
                binding_[a.subject.var] = f.value;
                const bool go = step(rest, visit);
                binding_[a.subject.var] = kNoEntity;
                if (!go)
                    return false;
            }
            return true;
        }
        const bool reflexive = a.subject.var == a.object.var;
        for (const auto &f : store_.facts(a.predicate)) {
            if (reflexive && f.key != f.value)
                continue;
            binding_[a.subject.var] = f.key;
            binding_[a.object.var] = f.value;
            const bool go = step(rest, visit);
            binding_[a.subject.var] = kNoEntity;
            binding_[a.object.var] = kNoEntity;
            if (!go)
                return false;
        }
        return true;
    }

    bool exists(std::uint32_t remaining) {
        bool found = false;
        auto stop = [&] {
            found = true;
            return false;
        };
        step(remaining, stop);
        return found;
    }

    std::uint64_t key() const {
        std::uint64_t k = 0;
        for (const auto v : proj_vars_)
            k = (k << 32) | binding_[v];
        return k;
    }

    bool projected() const {
        return std::all_of(proj_vars_.begin(), proj_vars_.end(),
                           [&](std::uint32_t v) { return binding_[v] != kNoEntity; });
    }

    // Like step(), but once every projected variable is bound the remaining
    // atoms only need one witness.
    void project(std::uint32_t remaining, std::unordered_set<std::uint64_t> &seen,
                 std::vector<std::uint64_t> &out) {
        if (projected()) {
            const auto k = key();
            if (!seen.contains(k) && exists(remaining)) {
                seen.insert(k);
                out.push_back(k);
            }
            return;
        }
        const std::size_t i = pick(remaining);
        const auto &a = atoms_[i];
        const std::uint32_t rest = remaining & ~(1u << i);
        const EntityId s = value(a.subject);
        const EntityId o = value(a.object);

        if (s != kNoEntity && o != kNoEntity) {
            if (store_.contains(s, a.predicate, o))
                project(rest, seen, out);
        } else if (s != kNoEntity) {
            for (const auto &f : store_.objects(a.predicate, s)) {
                binding_[a.object.var] = f.value;
                project(rest, seen, out);
            }
            binding_[a.object.var] = kNoEntity;
        } else if (o != kNoEntity) {
            for (const auto &f : store_.subjects(a.predicate, o)) {
                binding_[a.subject.var] = f.value;
                project(rest, seen, out);
            }
            binding_[a.subject.var] = kNoEntity;
        } else {
            const bool reflexive = a.subject.var == a.object.var;
            for (const auto &f : store_.facts(a.predicate)) {
                if (reflexive && f.key != f.value)
                    continue;
                binding_[a.subject.var] = f.key;
                binding_[a.object.var] = f.value;
                project(rest, seen, out);
            }
            binding_[a.subject.var] = kNoEntity;
            binding_[a.object.var] = kNoEntity;
        }
    }
};

std::size_t count_reflexive(const TripleStore &store, PredicateId p) {
    std::size_t n = 0;
    for (const auto &f : store.facts(p))
        n += f.key == f.value ? 1 : 0;
    return n;
}


} // namespace

std::string render_grounded(const GroundedRule &g) {
    auto triple = [](const LabelTriple &t) {
        return t.subject + "\t" + t.predicate + "\t" + t.object;
    };
    std::string out;
    for (std::size_t i = 0; i < g.body.size(); ++i) {
        if (i > 0)
            out += " & ";
        out += triple(g.body[i]);
    }
    return out + " => " + triple(g.head);
}

RuleMetrics compute_metrics(const Rule &rule, const TripleStore &store) {
    RuleMetrics m;
    const CompiledRule c = compile(rule, store);
    if (!c.body_satisfiable)
        return m;

    const auto &head = c.head;
    const auto in_body = [&](const Slot &s) { return s.is_var && s.var < c.body_variable_count; };
    const auto free_var = [&](const Slot &s) { return s.is_var && s.var >= c.body_variable_count; };

    std::vector<std::uint32_t> proj;
    if (in_body(head.subject))
        proj.push_back(head.subject.var);
    if (in_body(head.object) && !(head.object.is_var && head.subject.is_var &&
                                  head.object.var == head.subject.var))
        proj.push_back(head.object.var);

    Join join(store, c);
    const auto keys = join.projections(proj);

    const std::size_t n_entities = store.entities().size();
    const std::size_t head_facts = head.known_predicate ? store.fact_count(head.predicate) : 0;

    for (const auto k : keys) {
        // Unpack in the order the projection was packed.
        EntityId vals[2] = {kNoEntity, kNoEntity};
        if (proj.size() == 2) {
            vals[0] = static_cast<EntityId>(k >> 32);
            vals[1] = static_cast<EntityId>(k & 0xFFFFFFFFu);
        } else if (proj.size() == 1) {
            vals[0] = static_cast<EntityId>(k & 0xFFFFFFFFu);
        }
        auto resolve = [&](const Slot &s) -> EntityId {
            if (!s.is_var)
                return s.value;
            for (std::size_t i = 0; i < proj.size(); ++i)
                if (proj[i] == s.var)
                    return vals[i];
            return kNoEntity;
        };

        const bool s_free = free_var(head.subject);
        const bool o_free = free_var(head.object);
        const EntityId s = resolve(head.subject);
        const EntityId o = resolve(head.object);

        if (!s_free && !o_free) {
            ++m.body_pairs;
            if (head.known_predicate && s != kNoEntity && o != kNoEntity &&
                store.contains(s, head.predicate, o))
                ++m.support;
        } else if (s_free && o_free) {
            if (head.subject.var == head.object.var) {
                m.body_pairs += n_entities;
                if (head.known_predicate)
                    m.support += count_reflexive(store, head.predicate);
            } else {
                m.body_pairs += n_entities * n_entities;
                m.support += head_facts;
            }
        } else {
            m.body_pairs += n_entities;
            if (!head.known_predicate)
                continue;
            if (o_free && s != kNoEntity)
                m.support += store.objects(head.predicate, s).size();
            else if (s_free && o != kNoEntity)
                m.support += store.subjects(head.predicate, o).size();
        }
    }

    if (head_facts > 0)
        m.head_coverage = static_cast<double>(m.support) / static_cast<double>(head_facts);
    if (m.body_pairs > 0)
        m.std_confidence = static_cast<double>(m.support) / static_cast<double>(m.body_pairs);
    return m;
}

void for_each_instantiation(const Rule &rule, const TripleStore &store,
                            const std::function<bool(const Instantiation &)> &visit) {
    const CompiledRule c = compile(rule, store);
    if (!c.body_satisfiable)
        return;
    Join join(store, c);
    auto emit = [&] {
        Instantiation inst;
        for (std::size_t v = 0; v < c.body_variable_count; ++v)
            inst.bindings[c.variables[v]] = join.binding()[v];
        return visit(inst);
    };
    join.run(emit);
}

std::vector<Instantiation> instantiate(const Rule &rule, const TripleStore &store,
                                       std::size_t limit) {
    std::vector<Instantiation> out;
    if (limit == 0)
        return out;
    for_each_instantiation(rule, store, [&](const Instantiation &inst) {
        out.push_back(inst);
        return out.size() < limit;
    });
    return out;
}

GroundedRule ground(const Rule &rule, const TripleStore &store, const Instantiation &inst) {
    GroundedRule g;
    g.rule_id = rule.id();
    for (const auto &[var, id] : inst.bindings)
        g.bindings[var] = store.entities().label(id);

    auto label = [&](const Term &t) -> std::string {
        if (!t.is_variable())
            return t.text;
        const auto it = g.bindings.find(t.text);
        return it != g.bindings.end() ? it->second : t.text;
    };
    for (const auto &a : rule.body)
        g.body.push_back({label(a.subject), a.relation, label(a.object)});

    // A head variable missing from the body takes the first entity that makes
    // the head a fact, when one exists.
    const auto p = store.predicate(rule.head.relation);
    auto bind_free = [&](const Term &free, const Term &other, bool free_is_subject) {
        if (!free.is_variable() || g.bindings.contains(free.text) || !p)
            return;
        const auto other_label = label(other);
        const auto other_id = store.entity(other_label);
        if (!other_id)
            return;
        const auto range = free_is_subject ? store.subjects(*p, *other_id)
                                           : store.objects(*p, *other_id);
        if (!range.empty())
            g.bindings[free.text] = store.entities().label(range.front().value);
    };
    bind_free(rule.head.object, rule.head.subject, false);
    bind_free(rule.head.subject, rule.head.object, true);

    g.head = {label(rule.head.subject), rule.head.relation, label(rule.head.object)};
    const auto s = store.entity(g.head.subject);
    const auto o = store.entity(g.head.object);
    g.head_in_kg = p && s && o && store.contains(*s, *p, *o);
    return g;
}

std::vector<GroundedRule> sample_instances(const Rule &rule, const TripleStore &store,
                                           std::size_t k, std::uint64_t seed) {
    std::vector<std::pair<std::uint64_t, Instantiation>> reservoir;
    if (k == 0)
        return {};
    std::mt19937_64 rng(seed);
    std::uint64_t seen = 0;
    for_each_instantiation(rule, store, [&](const Instantiation &inst) {
        if (reservoir.size() < k) {
            reservoir.emplace_back(seen, inst);
        } else {
            const auto j = uniform_below(rng, seen + 1);
            if (j < k)
                reservoir[j] = {seen, inst};
        }
        ++seen;
        return true;
    });
    std::sort(reservoir.begin(), reservoir.end(),
              [](const auto &a, const auto &b) { return a.first < b.first; });
    std::vector<GroundedRule> out;
    out.reserve(reservoir.size());
    for (const auto &[pos, inst] : reservoir)
        out.push_back(ground(rule, store, inst));
    return out;
}

// ---------------------------------------------------------------------------
// Mining

namespace {

Atom var_atom(const std::string &s, const std::string &rel, const std::string &o) {
    return Atom{Term::variable(s), rel, Term::variable(o)};
}

Rule canonical_rule(std::vector<Atom> body, Atom head) {
    std::sort(body.begin(), body.end(), [](const Atom &x, const Atom &y) {
        return render_atom(x) < render_atom(y);
    });
    return Rule{std::move(body), std::move(head)};
}

// Head facts (a, b) of `head` for which the anchor variable (a when
// `anchor_subject`, else b) has at least one edge of `p` in the given
// direction. Upper bound on the support of any rule containing that atom.
std::size_t anchored_support(const TripleStore &store, PredicateId head, PredicateId p,
                             bool anchor_subject, bool anchor_is_atom_subject) {
    std::size_t n = 0;
    for (const auto &f : store.facts(head)) {
        const EntityId anchor = anchor_subject ? f.key : f.value;
        const auto range = anchor_is_atom_subject ? store.objects(p, anchor)
                                                  : store.subjects(p, anchor);
        n += range.empty() ? 0 : 1;
    }
    return n;
}

std::vector<MinedRule> mine_head(const TripleStore &store, PredicateId r,
                                 const MiningThresholds &th) {
    std::vector<MinedRule> out;
    const std::size_t head_facts = store.fact_count(r);
    if (head_facts == 0)
        return out;
    const double denom = static_cast<double>(head_facts);
    const auto can_reach = [&](std::size_t support_bound) {
        return static_cast<double>(support_bound) / denom >= th.min_head_coverage;
    };
    const auto &preds = store.predicates();
    const Atom head = var_atom("?a", preds.label(r), "?b");

    auto consider = [&](Rule rule) -> std::optional<RuleMetrics> {
        const auto m = compute_metrics(rule, store);
        if (m.head_coverage >= th.min_head_coverage && m.std_confidence >= th.min_std_confidence)
            out.push_back({std::move(rule), m});
        return m;
    };

    if (th.max_atoms < 2)
        return out;

    // Body atoms over {?a, ?b}. Their two-atom rules double as support bounds.
    std::vector<Atom> ab_atoms;
    for (PredicateId p = 0; p < preds.size(); ++p) {
        if (store.fact_count(p) == 0)
            continue;
        for (const bool forward : {true, false}) {
            if (forward && p == r)
                continue;
            Atom atom = forward ? var_atom("?a", preds.label(p), "?b")
                                : var_atom("?b", preds.label(p), "?a");
            const auto m = consider(canonical_rule({atom}, head));
            if (can_reach(m->support))
                ab_atoms.push_back(std::move(atom));
        }
    }

    if (th.max_atoms < 3)
        return out;

    for (std::size_t i = 0; i < ab_atoms.size(); ++i)
        for (std::size_t j = i + 1; j < ab_atoms.size(); ++j)
            consider(canonical_rule({ab_atoms[i], ab_atoms[j]}, head));

    // Paths through a fresh variable ?c: one atom links ?a with ?c, the
    // other links ?b with ?c.
    std::vector<Atom> a_side, b_side;
    for (PredicateId p = 0; p < preds.size(); ++p) {
        if (store.fact_count(p) == 0)
            continue;
        const auto &rel = preds.label(p);
        if (can_reach(anchored_support(store, r, p, true, true)))
            a_side.push_back(var_atom("?a", rel, "?c"));
        if (can_reach(anchored_support(store, r, p, true, false)))
            a_side.push_back(var_atom("?c", rel, "?a"));
        if (can_reach(anchored_support(store, r, p, false, true)))
            b_side.push_back(var_atom("?b", rel, "?c"));
        if (can_reach(anchored_support(store, r, p, false, false)))
            b_side.push_back(var_atom("?c", rel, "?b"));
    }
    for (const auto &x : a_side)
        for (const auto &y : b_side)
            consider(canonical_rule({x, y}, head));
    return out;
}

} // namespace

std::vector<MinedRule> mine_rules(const TripleStore &store, const MiningThresholds &thresholds,
                                  unsigned jobs) {
    const std::size_t n = store.predicates().size();
    std::vector<std::vector<MinedRule>> per_head(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t p = next++; p < n; p = next++)
            per_head[p] = mine_head(store, static_cast<PredicateId>(p), thresholds);
    };
    const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(worker);
    }

    std::vector<std::pair<std::string, MinedRule>> keyed;
    for (auto &v : per_head)
        for (auto &m : v)
            keyed.emplace_back(render_rule(m.rule), std::move(m));
    std::sort(keyed.begin(), keyed.end(), [](const auto &a, const auto &b) {
        if (a.second.rule.head.relation != b.second.rule.head.relation)
            return a.second.rule.head.relation < b.second.rule.head.relation;
        return a.first < b.first;
    });
    std::vector<MinedRule> out;
    out.reserve(keyed.size());
    for (auto &[text, m] : keyed)
        out.push_back(std::move(m));
    return out;
}

} // namespace kgx
