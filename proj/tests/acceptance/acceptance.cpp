// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kgx/cli.hpp"
#include "kgx/dataset.hpp"
#include "kgx/eval_metrics.hpp"
#include "kgx/explain.hpp"
#include "kgx/judge.hpp"
#include "kgx/kg_store.hpp"
#include "kgx/random.hpp"
#include "kgx/rule.hpp"
#include "kgx/rule_engine.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace kgx;
using kgx::testkit::fixture_path;
using kgx::testkit::TempDir;
using nlohmann::json;

namespace {

// Tolerances.
constexpr double kMetricTol = 1e-12;
constexpr double kMeteorTol = 1e-9;
constexpr double kAgreementTol = 1e-9;
constexpr double kAlphaNoiseBand = 0.05;
constexpr double kScaleBudgetSeconds = 60.0;

constexpr std::size_t kOracleStores = 1000;
constexpr std::size_t kRoundTripRules = 10000;
constexpr std::size_t kScaleTriples = 310116;
constexpr std::size_t kScaleEntities = 14541;
constexpr std::size_t kScalePredicates = 237;
constexpr std::size_t kScaleRules = 1000;

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects the first few failure messages of a criterion.
struct Check {
    std::size_t failures = 0;
    std::vector<std::string> notes;

    void expect(bool ok, const std::string &what) {
        if (ok)
            return;
        if (++failures <= 3)
            notes.push_back(what);
    }
    Outcome outcome(std::string summary) const {
        if (failures == 0)
            return {true, std::move(summary)};
        std::string d = fmt::format("{} failure(s): ", failures);
        for (std::size_t i = 0; i < notes.size(); ++i)
            d += (i ? "; " : "") + notes[i];
        return {false, d};
    }
};

std::uint64_t below(std::mt19937_64 &rng, std::uint64_t n) { return uniform_below(rng, n); }
bool chance(std::mt19937_64 &rng, unsigned percent) { return below(rng, 100) < percent; }

int cli(const std::vector<std::string> &args, std::string *out = nullptr) {
    std::vector<std::string> argv = {"kgx"};
    argv.insert(argv.end(), args.begin(), args.end());
    std::ostringstream o, e;
    const int rc = kgx::cli::run(argv, o, e);
    if (out)
        *out = o.str();
    if (rc != 0)
        std::cerr << "kgx " << args.front() << " exited " << rc << ": " << e.str();
    return rc;
}

// ---------------------------------------------------------------------------
// Nested-loop oracle over raw label triples.

using LabelFact = std::tuple<std::string, std::string, std::string>;

class Oracle {
  public:
    explicit Oracle(const std::set<LabelFact> &facts) {
        for (const auto &[s, p, o] : facts) {
            ent_.emplace(s, 0);
            ent_.emplace(o, 0);
            pred_.emplace(p, 0);
        }
        int i = 0;
        for (auto &[label, id] : ent_)
            id = i++;
        i = 0;
        for (auto &[label, id] : pred_)
            id = i++;
        n_ = static_cast<int>(ent_.size());
        holds_.assign(pred_.size() * n_ * n_, 0);
        pred_facts_.assign(pred_.size(), 0);
        for (const auto &[s, p, o] : facts) {
            holds_[index(pred_.at(p), ent_.at(s), ent_.at(o))] = 1;
            ++pred_facts_[pred_.at(p)];
        }
    }

    std::vector<std::string> predicates() const {
        std::vector<std::string> v;
        for (const auto &[label, id] : pred_)
            v.push_back(label);
        return v;
    }

    RuleMetrics metrics(const Rule &rule) const {
        std::vector<std::string> vars;
        auto var_index = [&](const Term &t) {
            auto it = std::find(vars.begin(), vars.end(), t.text);
            if (it == vars.end()) {
                vars.push_back(t.text);
                return static_cast<int>(vars.size() - 1);
            }
            return static_cast<int>(it - vars.begin());
        };
        struct Slot {
            bool var;
            int value; // variable index, entity id, or -1 for an unknown constant
        };
        struct CAtom {
            Slot s, o;
            int p; // -1 for an unknown predicate
        };
        auto slot = [&](const Term &t) -> Slot {
            if (t.is_variable())
                return {true, var_index(t)};
            auto it = ent_.find(t.text);
            return {false, it == ent_.end() ? -1 : it->second};
        };
        auto catom = [&](const Atom &a) {
            CAtom c{slot(a.subject), slot(a.object), -1};
            if (auto it = pred_.find(a.relation); it != pred_.end())
                c.p = it->second;
            return c;
        };
        std::vector<CAtom> body;
        for (const auto &a : rule.body)
            body.push_back(catom(a));
        const CAtom head = catom(rule.head);

        const std::size_t v = vars.size();
        std::vector<int> val(v, 0);
        auto resolve = [&](const Slot &s) { return s.var ? val[s.value] : s.value; };
        auto holds = [&](const CAtom &a) {
            const int s = resolve(a.s), o = resolve(a.o);
            return a.p >= 0 && s >= 0 && o >= 0 && holds_[index(a.p, s, o)];
        };

        std::set<std::pair<int, int>> pairs;
        std::size_t support = 0;
        for (;;) {
            bool ok = true;
            for (const auto &a : body)
                if (!holds(a)) {
                    ok = false;
                    break;
                }
            if (ok) {
                // Unknown head constants keep a distinct out-of-range id.
                const int s = resolve(head.s) < 0 ? n_ : resolve(head.s);
                const int o = resolve(head.o) < 0 ? n_ : resolve(head.o);
                if (pairs.emplace(s, o).second && holds(head))
                    ++support;
            }
            std::size_t k = 0;
            while (k < v && ++val[k] == n_)
                val[k++] = 0;
            if (k == v)
                break;
        }
        RuleMetrics m;
        m.support = support;
        m.body_pairs = pairs.size();
        const std::size_t hf = head.p >= 0 ? pred_facts_[head.p] : 0;
        m.head_coverage = hf ? static_cast<double>(support) / static_cast<double>(hf) : 0.0;
        m.std_confidence = pairs.empty() ? 0.0
                                         : static_cast<double>(support) /
                                               static_cast<double>(pairs.size());
        return m;
    }

  private:
    std::map<std::string, int> ent_, pred_;
    int n_ = 0;
    std::vector<char> holds_;
    std::vector<std::size_t> pred_facts_;

    std::size_t index(int p, int s, int o) const {
        return (static_cast<std::size_t>(p) * n_ + s) * n_ + o;
    }
};

std::string atom_text(const Atom &a) {
    return a.subject.text + "\t" + a.relation + "\t" + a.object.text;
}

// Every closed, connected rule over ?a ?b ?c with head (?a r ?b), no
// constants, no atom repeating a variable, body not containing the head.
std::vector<std::pair<std::string, Rule>> oracle_candidates(const std::vector<std::string> &preds,
                                                            std::size_t max_atoms) {
    const std::array<std::string, 3> vars = {"?a", "?b", "?c"};
    std::vector<Atom> atoms;
    for (const auto &s : vars)
        for (const auto &o : vars)
            if (s != o)
                for (const auto &p : preds)
                    atoms.push_back({Term::variable(s), p, Term::variable(o)});

    auto closed_and_connected = [](const std::vector<Atom> &body, const Atom &head) {
        std::map<std::string, int> count;
        std::vector<const Atom *> all;
        for (const auto &a : body)
            all.push_back(&a);
        all.push_back(&head);
        for (const auto *a : all) {
            ++count[a->subject.text];
            ++count[a->object.text];
        }
        for (const auto &[v, n] : count)
            if (n < 2)
                return false;
        // Connectivity: grow from the head over shared variables.
        std::set<std::string> reached = {head.subject.text, head.object.text};
        std::vector<bool> used(all.size(), false);
        used.back() = true;
        for (bool grew = true; grew;) {
            grew = false;
            for (std::size_t i = 0; i < all.size(); ++i)
                if (!used[i] &&
                    (reached.count(all[i]->subject.text) || reached.count(all[i]->object.text))) {
                    used[i] = true;
                    reached.insert(all[i]->subject.text);
                    reached.insert(all[i]->object.text);
                    grew = true;
                }
        }
        return std::all_of(used.begin(), used.end(), [](bool b) { return b; });
    };

    std::vector<std::pair<std::string, Rule>> out;
    for (const auto &r : preds) {
        const Atom head{Term::variable("?a"), r, Term::variable("?b")};
        std::set<std::string> seen;
        auto offer = [&](std::vector<Atom> body) {
            for (const auto &a : body)
                if (a == head)
                    return;
            if (!closed_and_connected(body, head))
                return;
            std::sort(body.begin(), body.end(),
                      [](const Atom &x, const Atom &y) { return atom_text(x) < atom_text(y); });
            std::string text;
            for (std::size_t i = 0; i < body.size(); ++i)
                text += (i ? " & " : "") + atom_text(body[i]);
            text += " => " + atom_text(head);
            if (seen.insert(text).second)
                out.emplace_back(text, Rule{body, head});
        };
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            offer({atoms[i]});
            if (max_atoms >= 3)
                for (std::size_t j = i + 1; j < atoms.size(); ++j)
                    offer({atoms[i], atoms[j]});
        }
    }
    return out;
}

bool same_metrics(const RuleMetrics &a, const RuleMetrics &b) {
    return a.support == b.support && a.body_pairs == b.body_pairs &&
           std::abs(a.head_coverage - b.head_coverage) <= kMetricTol &&
           std::abs(a.std_confidence - b.std_confidence) <= kMetricTol;
}

std::string show(const RuleMetrics &m) {
    return fmt::format("({}, {}, {}, pairs {})", m.support, m.head_coverage, m.std_confidence,
                       m.body_pairs);
}

// Connected random rule with constants, free head variables and the odd
// reflexive atom or unknown label.
Rule random_rule(std::mt19937_64 &rng, const std::vector<std::string> &entities,
                 const std::vector<std::string> &preds) {
    std::vector<std::string> vars;
    auto fresh = [&] {
        vars.push_back(std::string("?") + static_cast<char>('a' + vars.size()));
        return vars.back();
    };
    auto existing = [&] { return vars[below(rng, vars.size())]; };
    auto other = [&]() -> Term {
        const auto roll = below(rng, 100);
        if (roll < 4)
            return Term::constant("no such entity");
        if (roll < 22)
            return Term::constant(entities[below(rng, entities.size())]);
        if (roll < 30 || vars.size() >= 4)
            return Term::variable(existing());
        return Term::variable(fresh());
    };
    auto relation = [&] {
        return chance(rng, 3) ? std::string("no_such_relation") : preds[below(rng, preds.size())];
    };
    auto atom = [&](bool first) {
        Term anchor = Term::variable(first ? fresh() : existing());
        Term rest = other();
        if (first && !rest.is_variable() && chance(rng, 50))
            rest = Term::variable(fresh());
        return chance(rng, 50) ? Atom{anchor, relation(), rest} : Atom{rest, relation(), anchor};
    };
    Rule r;
    const std::size_t body = 1 + below(rng, 2);
    for (std::size_t i = 0; i < body; ++i)
        r.body.push_back(atom(i == 0));
    r.head = atom(false);
    return r;
}

Outcome oracle_equivalence() {
    Check c;
    std::mt19937_64 rng(20240601);
    std::size_t rules_checked = 0, mined_checked = 0;
    for (std::size_t store_i = 0; store_i < kOracleStores; ++store_i) {
        const std::size_t n_ent = 3 + below(rng, 18);
        const std::size_t n_pred = 1 + below(rng, 6);
        const std::size_t n_facts = 1 + below(rng, 200);
        std::vector<std::string> ents, preds;
        for (std::size_t i = 0; i < n_ent; ++i)
            ents.push_back(fmt::format("e{}", i));
        for (std::size_t i = 0; i < n_pred; ++i)
            preds.push_back(fmt::format("/d/t/p{}", i));

        TripleStoreBuilder b;
        std::set<LabelFact> facts;
        for (std::size_t i = 0; i < n_facts; ++i) {
            const auto &s = ents[below(rng, n_ent)];
            const auto &o = chance(rng, 5) ? s : ents[below(rng, n_ent)];
            const auto &p = preds[below(rng, n_pred)];
            facts.emplace(s, p, o);
            b.add(s, p, o);
        }
        const TripleStore store = std::move(b).build();
        const Oracle oracle(facts);
        c.expect(store.fact_count() == facts.size(),
                 fmt::format("store {}: {} facts, oracle {}", store_i, store.fact_count(),
                             facts.size()));

        std::vector<std::string> present;
        for (const auto &[s, p, o] : facts) {
            present.push_back(s);
            present.push_back(o);
        }
        const auto store_preds = oracle.predicates();
        for (int k = 0; k < 3; ++k) {
            const Rule r = random_rule(rng, present, store_preds);
            const auto got = compute_metrics(r, store);
            const auto want = oracle.metrics(r);
            ++rules_checked;
            c.expect(same_metrics(got, want), fmt::format("store {} rule [{}]: {} vs oracle {}",
                                                          store_i, render_rule(r), show(got),
                                                          show(want)));
        }

        static const double hcs[] = {0.0, 0.05, 0.1, 0.3, 0.5};
        static const double confs[] = {0.0, 0.1, 0.3, 0.6};
        MiningThresholds th;
        th.min_head_coverage = hcs[below(rng, 5)];
        th.min_std_confidence = confs[below(rng, 4)];
        th.max_atoms = chance(rng, 20) ? 2 : 3;
        const auto mined = mine_rules(store, th, store_i % 4 == 0 ? 3 : 1);

        std::vector<std::tuple<std::string, std::string, RuleMetrics>> expected;
        for (const auto &[text, rule] : oracle_candidates(store_preds, th.max_atoms)) {
            const auto m = oracle.metrics(rule);
            if (m.head_coverage >= th.min_head_coverage && m.std_confidence >= th.min_std_confidence)
                expected.emplace_back(rule.head.relation, text, m);
        }
        std::sort(expected.begin(), expected.end(), [](const auto &x, const auto &y) {
            return std::tie(std::get<0>(x), std::get<1>(x)) <
                   std::tie(std::get<0>(y), std::get<1>(y));
        });
        c.expect(mined.size() == expected.size(),
                 fmt::format("store {}: mined {} rules, oracle {}", store_i, mined.size(),
                             expected.size()));
        for (std::size_t i = 0; i < std::min(mined.size(), expected.size()); ++i) {
            const auto text = render_rule(mined[i].rule);
            c.expect(text == std::get<1>(expected[i]),
                     fmt::format("store {} #{}: [{}] vs oracle [{}]", store_i, i, text,
                                 std::get<1>(expected[i])));
            c.expect(same_metrics(mined[i].metrics, std::get<2>(expected[i])),
                     fmt::format("store {} [{}]: {} vs oracle {}", store_i, text,
                                 show(mined[i].metrics), show(std::get<2>(expected[i]))));
            ++mined_checked;
        }
    }
    return c.outcome(fmt::format("{} stores, {} random rules, {} mined rules match the oracle",
                                 kOracleStores, rules_checked, mined_checked));
}

// ---------------------------------------------------------------------------

Outcome family5_cli() {
    Check c;
    const auto dir = fixture_path("family5");
    std::set<LabelFact> facts;
    for (const auto &line : testkit::read_lines(dir / "kg.tsv")) {
        std::istringstream in(line);
        std::string s, p, o;
        std::getline(in, s, '\t');
        std::getline(in, p, '\t');
        std::getline(in, o, '\t');
        facts.emplace(s, p, o);
    }
    const Rule r = parse_rule(testkit::read_lines(dir / "rules.tsv").at(0));
    const auto m = Oracle(facts).metrics(r);
    c.expect(m.support == 1 && m.head_coverage == 1.0 && m.std_confidence == 0.5,
             "oracle gives " + show(m));

    std::string out;
    c.expect(cli({"metrics", "--triples", (dir / "kg.tsv").string(), "--rules",
                  (dir / "rules.tsv").string()},
                 &out) == 0,
             "metrics command failed");
    const std::string expected = "rule\tsupport\thead_coverage\tstd_confidence\n"
                                 "?x\tmother_of\t?z & ?x\tspouse_of\t?y => ?y\tfather_of\t?z"
                                 "\t1\t1.0\t0.5\n";
    c.expect(out == expected, "TSV differs: " + json(out).dump());
    return c.outcome("support 1, head_coverage 1.0, std_confidence 0.5, TSV bit-exact");
}

// ---------------------------------------------------------------------------

Outcome scale_smoke() {
    Check c;
    std::mt19937_64 rng(237);
    std::vector<std::string> ents, preds;
    for (std::size_t i = 0; i < kScaleEntities; ++i)
        ents.push_back(fmt::format("/m/0{:05x}", i));
    for (std::size_t i = 0; i < kScalePredicates; ++i)
        preds.push_back(i % 9 == 0 ? fmt::format("/d{0}/t{0}/a{1}-/d{0}/t{0}/b{1}", i % 11, i)
                                   : fmt::format("/d{}/t{}/l{}", i % 11, i % 17, i));
    // Skewed entity and predicate popularity, so joins meet hubs and a few
    // relations hold tens of thousands of facts.
    auto skewed = [&](std::size_t n, double power) {
        const double u = static_cast<double>(below(rng, 1u << 30)) / (1u << 30);
        return std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::pow(u, power) * n));
    };
    auto entity = [&] { return skewed(kScaleEntities, 2.5); };
    auto predicate = [&] { return skewed(kScalePredicates, 2.0); };
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> facts;
    while (facts.size() < kScaleTriples)
        facts.emplace(entity(), predicate(), entity());
    std::string tsv;
    tsv.reserve(kScaleTriples * 40);
    for (const auto &[s, p, o] : facts)
        tsv += ents[s] + '\t' + preds[p] + '\t' + ents[o] + '\n';

    std::vector<std::string> rule_texts;
    auto atom = [&](const std::string &s, const std::string &o) {
        return s + '\t' + preds[predicate()] + '\t' + o;
    };
    for (std::size_t i = 0; i < kScaleRules; ++i) {
        const std::string head = " => " + atom("?a", "?b");
        switch (i % 6) {
        case 0:
            rule_texts.push_back(atom("?a", "?b") + head);
            break;
        case 1:
            rule_texts.push_back(atom("?b", "?a") + head);
            break;
        case 2:
            rule_texts.push_back(atom("?a", "?c") + " & " + atom("?c", "?b") + head);
            break;
        case 3:
            rule_texts.push_back(atom("?a", "?c") + " & " + atom("?b", "?c") + head);
            break;
        case 4:
            rule_texts.push_back(atom("?a", "?b") + " & " + atom("?b", "?a") + head);
            break;
        default: {
            const auto &e = ents[entity()];
            rule_texts.push_back(atom("?a", e) + " => " + atom("?a", ents[entity()]));
        }
        }
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::istringstream in(tsv);
    const TripleStore store = ingest_triples(in);
    std::size_t total_support = 0;
    for (const auto &t : rule_texts)
        total_support += compute_metrics(parse_rule(t), store).support;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    c.expect(store.fact_count() == kScaleTriples,
             fmt::format("ingested {} facts", store.fact_count()));
    c.expect(secs < kScaleBudgetSeconds, fmt::format("took {:.1f} s", secs));
    return c.outcome(fmt::format("{} triples + {} rules in {:.1f} s (budget {:.0f} s), "
                                 "total support {}",
                                 kScaleTriples, kScaleRules, secs, kScaleBudgetSeconds,
                                 total_support));
}

// ---------------------------------------------------------------------------

Outcome parser_round_trip() {
    Check c;
    std::mt19937_64 rng(61);
    static const char *words[] = {"Hydrogen", "peroxide", "NPO",  "Energomash", "World",
                                  "Series",   "New",      "York", "St.",        "Louis",
                                  "(band)",   "O'Neil",   "2004", "Jr.,",       "al-Amin"};
    static const char *dom[] = {"spaceflight", "sports", "people", "film", "location"};
    static const char *typ[] = {"rocket_engine", "sports_team", "person", "film", "country"};
    static const char *lab[] = {"manufactured_by", "team", "nationality", "directed_by", "events"};
    auto constant = [&] {
        std::string s = words[below(rng, 15)];
        for (auto n = below(rng, 4); n > 0; --n)
            s += std::string(" ") + words[below(rng, 15)];
        return s;
    };
    auto segment = [&] {
        return fmt::format("/{}/{}/{}", dom[below(rng, 5)], typ[below(rng, 5)], lab[below(rng, 5)]);
    };
    auto relation = [&]() -> std::string {
        switch (below(rng, 3)) {
        case 0:
            return segment();
        case 1: {
            // Concatenated label: both halves share domain/type, labels differ.
            const auto d = dom[below(rng, 5)];
            const auto t = typ[below(rng, 5)];
            const auto l1 = below(rng, 5);
            const auto l2 = (l1 + 1 + below(rng, 4)) % 5;
            return fmt::format("{}/{}/{}-/{}/{}/{}", d, t, lab[l1], d, t, lab[l2]);
        }
        default:
            return chance(rng, 50) ? segment() + "-" + segment() : std::string("mother_of");
        }
    };

    std::size_t with_space = 0, concatenated = 0;
    for (std::size_t i = 0; i < kRoundTripRules; ++i) {
        std::vector<std::string> vars;
        auto var = [&](bool fresh) {
            if (fresh || vars.empty())
                vars.push_back(std::string("?") + static_cast<char>('a' + vars.size()));
            return Term::variable(fresh ? vars.back() : vars[below(rng, vars.size())]);
        };
        auto atom = [&](bool first) {
            Term anchor = var(first);
            Term rest = chance(rng, 35) ? Term::constant(constant()) : var(chance(rng, 60));
            auto rel = relation();
            concatenated += rel.find("-/") != std::string::npos;
            return chance(rng, 50) ? Atom{anchor, rel, rest} : Atom{rest, rel, anchor};
        };
        Rule r;
        const auto body = 1 + below(rng, 2);
        for (std::size_t k = 0; k < body; ++k)
            r.body.push_back(atom(k == 0));
        r.head = atom(false);
        for (const auto &cst : r.constants())
            with_space += cst.find(' ') != std::string::npos;

        const auto text = render_rule(r);
        try {
            const Rule back = parse_rule(text);
            c.expect(back == r, "parse(render(r)) != r for " + json(text).dump());
            c.expect(render_rule(back) == text, "render(parse(t)) != t for " + json(text).dump());
        } catch (const std::exception &e) {
            c.expect(false, std::string(e.what()) + " for " + json(text).dump());
        }
    }
    return c.outcome(fmt::format("{} rules ({} constants with spaces, {} concatenated labels)",
                                 kRoundTripRules, with_space, concatenated));
}

// ---------------------------------------------------------------------------

Outcome metric_sanity() {
    Check c;
    const std::string s = "the rocket engine is manufactured by npo energomash";
    c.expect(std::abs(bleu(s, {s}) - 1.0) <= kMetricTol, "BLEU identity");
    c.expect(bleu("alpha beta gamma delta", {"one two three four"}) == 0.0, "BLEU disjoint");
    c.expect(std::abs(rouge_l(s, s).f1 - 1.0) <= kMetricTol, "ROUGE-L identity");
    c.expect(rouge_l("x y z", "p q").f1 == 0.0, "ROUGE-L disjoint");
    c.expect(meteor("a b", "c d") == 0.0, "METEOR disjoint");

    std::vector<std::string> vocab;
    for (int i = 0; i < 40; ++i)
        vocab.push_back(fmt::format("word{}", i));
    for (std::size_t m = 1; m <= 30; ++m) {
        std::string sent;
        for (std::size_t i = 0; i < m; ++i)
            sent += (i ? " " : "") + vocab[i];
        const double want = 1.0 - 0.5 * std::pow(1.0 / static_cast<double>(m), 3);
        c.expect(std::abs(meteor(sent, sent) - want) <= kMeteorTol,
                 fmt::format("METEOR identity m={}: {} vs {}", m, meteor(sent, sent), want));
    }

    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x, up, down;
        for (int i = 0; i < 20 + trial; ++i) {
            x.push_back(static_cast<double>(below(rng, 1000000)) / 7.0);
        }
        std::sort(x.begin(), x.end());
        x.erase(std::unique(x.begin(), x.end()), x.end());
        std::shuffle(x.begin(), x.end(), rng);
        for (double v : x) {
            up.push_back(std::exp(v / 1e5));
            down.push_back(-v * v);
        }
        c.expect(std::abs(spearman(x, up) - 1.0) <= kMetricTol, "spearman monotone");
        c.expect(std::abs(spearman(x, down) + 1.0) <= kMetricTol, "spearman reversed");
    }

    RatingMatrix unanimous;
    for (int i = 0; i < 30; ++i) {
        const double v = 1 + i % 5;
        unanimous.push_back({v, v, v});
    }
    for (auto level : {MeasurementLevel::nominal, MeasurementLevel::ordinal,
                       MeasurementLevel::interval})
        c.expect(std::abs(krippendorff_alpha(unanimous, level) - 1.0) <= kMetricTol,
                 "alpha unanimous");

    RatingMatrix noise;
    for (int i = 0; i < 10000; ++i)
        noise.push_back({static_cast<double>(1 + below(rng, 5)),
                         static_cast<double>(1 + below(rng, 5)),
                         static_cast<double>(1 + below(rng, 5))});
    const double a = krippendorff_alpha(noise, MeasurementLevel::ordinal);
    c.expect(std::abs(a) <= kAlphaNoiseBand, fmt::format("alpha on noise {}", a));
    return c.outcome(fmt::format("identity/disjoint cases hold, METEOR m=1..30 within {}, "
                                 "alpha(noise, 10000 items) = {:.4f}",
                                 kMeteorTol, a));
}

// ---------------------------------------------------------------------------
// End-to-end replay.

// Drops fields that carry wall-clock values.
void strip_volatile(json &j) {
    static const std::set<std::string> keys = {"created_at", "at", "lease_expires_ms"};
    if (j.is_object()) {
        for (const auto &k : keys)
            j.erase(k);
        for (auto &[k, v] : j.items())
            strip_volatile(v);
    } else if (j.is_array()) {
        for (auto &v : j)
            strip_volatile(v);
    }
}

std::string normalized(const std::filesystem::path &p) {
    std::string out;
    for (const auto &line : testkit::read_lines(p)) {
        if (line.front() != '{') {
            out += line + '\n';
            continue;
        }
        auto j = json::parse(line);
        strip_volatile(j);
        out += j.dump() + '\n';
    }
    return out;
}

std::vector<AnnotationRecord> annotate_pending(const std::string &log) {
    std::vector<AnnotationRecord> out;
    CurationStore store(log);
    std::size_t k = 0;
    for (const auto &item : store.items(ReviewStatus::pending)) {
        AnnotationRecord a;
        a.item_id = item.item_id;
        a.annotator_id = "annotator-1";
        a.clarity = 4;
        a.logicalness = 3;
        a.created_at = "2026-01-01T00:00:00Z";
        if (k++ % 2 == 0) {
            a.correctness = 5;
        } else {
            a.correctness = 4;
            a.edited_explanation = "Revised: " + item.draft.explanation;
        }
        out.push_back(a);
    }
    return out;
}

void write_annotations(const std::string &path, const std::vector<AnnotationRecord> &as) {
    std::string text;
    for (const auto &a : as)
        text += to_json(a).dump() + '\n';
    testkit::write_file(path, text);
}

struct SplitCheck {
    std::map<std::string, std::size_t> sizes;
    std::size_t human_in_train = 0;
    std::size_t human_total = 0;
};

SplitCheck read_splits(const std::string &tsv) {
    SplitCheck s;
    std::istringstream in(tsv);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        const auto split = line.substr(0, line.find('\t'));
        const bool human = line.substr(line.rfind('\t') + 1).starts_with("human-");
        ++s.sizes[split];
        s.human_total += human;
        s.human_in_train += human && split == "train";
    }
    return s;
}

std::map<std::string, std::string> run_pipeline(const TempDir &dir, Check &c) {
    const auto e2e = [](const char *f) { return fixture_path(std::string("e2e/") + f).string(); };
    const auto fixtures = fixture_path("e2e/llm").string();
    const auto rec = dir.file("records.jsonl"), ver = dir.file("verdicts.jsonl"),
               log = dir.file("curation.jsonl"), ann = dir.file("annotations.jsonl");
    c.expect(cli({"explain", "--mode", "replay", "--fixtures", fixtures, "--triples",
                  e2e("kg.tsv"), "--types", e2e("types.tsv"), "--rules", e2e("rules.tsv"),
                  "--strategy", "cot", "--model", "stub-generator", "--seed", "7", "--out",
                  rec}) == 0,
             "explain");
    c.expect(cli({"judge", "--mode", "replay", "--fixtures", fixtures, "--records", rec,
                  "--judge-model", "stub-judge", "--seed", "7", "--out", ver}) == 0,
             "judge");
    c.expect(cli({"dataset", "build", "--log", log, "--records", rec, "--verdicts", ver}) == 0,
             "dataset build");
    write_annotations(ann, annotate_pending(log));
    c.expect(cli({"dataset", "annotate", "--log", log, "--annotations", ann}) == 0,
             "dataset annotate");
    const std::vector<std::string> sizes = {"--train", "10", "--val", "5", "--test", "5",
                                            "--seed", "11"};
    auto with = [&](std::vector<std::string> a) {
        a.insert(a.end(), sizes.begin(), sizes.end());
        return a;
    };
    std::string splits;
    c.expect(cli(with({"dataset", "splits", "--log", log}), &splits) == 0, "dataset splits");
    testkit::write_file(dir.file("splits.tsv"), splits);
    for (const char *name : {"train", "val", "test"})
        c.expect(cli(with({"dataset", "export", "--log", log, "--split", name, "--out",
                           dir.file(std::string("export_") + name + ".jsonl")})) == 0,
                 std::string("export ") + name);

    std::map<std::string, std::string> files;
    for (const char *f : {"records.jsonl", "verdicts.jsonl", "curation.jsonl", "annotations.jsonl",
                          "splits.tsv", "export_train.jsonl", "export_val.jsonl",
                          "export_test.jsonl"})
        files[f] = normalized(dir.path() / f);
    return files;
}

// Synthetic 500-entry set: 450 judge-accepted, 50 queued for review.
std::size_t build_scaled_inputs(const TempDir &dir) {
    std::string records, verdicts;
    std::size_t review = 0;
    for (int i = 0; i < 500; ++i) {
        ExplanationRecord r;
        const auto rule = parse_rule(fmt::format("?a\t/syn/rel/p{}\t?b => ?a\t/syn/rel/q{}\t?b",
                                                 i % 37, i));
        r.rule_id = rule.id();
        r.rule_text = render_rule(rule);
        r.strategy = Strategy::cot;
        r.model_name = "stub-generator";
        r.explanation = fmt::format("If ?a has p{} ?b, then ?a has q{} ?b.", i % 37, i);
        r.prompt = "synthetic";
        r.created_at = "2026-01-01T00:00:00Z";
        r.generation_mode = GatewayMode::replay;
        records += to_json(r).dump() + '\n';

        JudgeVerdict v;
        v.item_id = r.item_id();
        v.judge_model = "stub-judge";
        const bool to_review = i % 10 == 3;
        review += to_review;
        for (int s : to_review ? std::vector<int>{4, 5, 3} : std::vector<int>{5, 5, 5}) {
            JudgeRun run;
            run.score = s;
            v.runs.push_back(run);
        }
        aggregate_runs(v);
        verdicts += to_json(v).dump() + '\n';
    }
    testkit::write_file(dir.file("records.jsonl"), records);
    testkit::write_file(dir.file("verdicts.jsonl"), verdicts);
    return review;
}

Outcome e2e_replay() {
    Check c;
    TempDir a, b;
    const auto first = run_pipeline(a, c);
    const auto second = run_pipeline(b, c);
    for (const auto &[name, content] : first) {
        c.expect(!content.empty(), name + " is empty");
        c.expect(second.at(name) == content, name + " differs between runs");
    }
    const auto small = read_splits(first.at("splits.tsv"));
    c.expect(small.sizes == std::map<std::string, std::size_t>{{"test", 5}, {"train", 10},
                                                                {"val", 5}},
             "20-rule split sizes");
    const auto annotated = testkit::read_lines(a.path() / "annotations.jsonl").size();
    c.expect(annotated > 0 && small.human_total == annotated,
             fmt::format("{} human entries in the 20-rule splits, {} annotated", small.human_total,
                         annotated));
    c.expect(small.human_in_train == 0, "human entry in train (20-rule set)");
    c.expect(testkit::read_lines(a.path() / "records.jsonl").size() == 20, "20 records");

    TempDir big;
    const auto review = build_scaled_inputs(big);
    const auto log = big.file("curation.jsonl");
    c.expect(cli({"dataset", "build", "--log", log, "--records", big.file("records.jsonl"),
                  "--verdicts", big.file("verdicts.jsonl")}) == 0,
             "scaled build");
    write_annotations(big.file("annotations.jsonl"), annotate_pending(log));
    c.expect(cli({"dataset", "annotate", "--log", log, "--annotations",
                  big.file("annotations.jsonl")}) == 0,
             "scaled annotate");
    std::string splits;
    c.expect(cli({"dataset", "splits", "--log", log, "--seed", "11"}, &splits) == 0,
             "scaled splits");
    const auto scaled = read_splits(splits);
    c.expect(scaled.sizes == std::map<std::string, std::size_t>{{"test", 50}, {"train", 400},
                                                                 {"val", 50}},
             "scaled split sizes");
    c.expect(scaled.human_total == review, fmt::format("{} human entries, expected {}",
                                                       scaled.human_total, review));
    c.expect(scaled.human_in_train == 0, "human entry in train (500-entry set)");
    std::map<std::string, std::size_t> exported;
    for (const char *name : {"train", "val", "test"}) {
        const auto out = big.file(std::string(name) + ".jsonl");
        c.expect(cli({"dataset", "export", "--log", log, "--split", name, "--seed", "11", "--out",
                      out}) == 0,
                 std::string("scaled export ") + name);
        exported[name] = testkit::read_lines(out).size();
    }
    c.expect(exported == std::map<std::string, std::size_t>{{"test", 50}, {"train", 400},
                                                             {"val", 50}},
             fmt::format("export lines {}/{}/{}", exported["train"], exported["val"],
                         exported["test"]));

    return c.outcome(fmt::format("{} artifacts identical across two runs; 20-rule splits "
                                 "10/5/5; 500-entry export 400/50/50 with {} human entries "
                                 "all in val/test",
                                 first.size(), review));
}

// ---------------------------------------------------------------------------

Outcome judge_conformance() {
    Check c;
    TempDir dir;
    const auto e2e = [](const char *f) { return fixture_path(std::string("e2e/") + f).string(); };
    c.expect(cli({"explain", "--mode", "replay", "--fixtures", fixture_path("e2e/llm").string(),
                  "--triples", e2e("kg.tsv"), "--types", e2e("types.tsv"), "--rules",
                  e2e("rules.tsv"), "--strategy", "cot", "--model", "stub-generator", "--seed",
                  "7", "--out", dir.file("records.jsonl")}) == 0,
             "explain");
    const auto records = read_records_file(dir.file("records.jsonl"));
    const std::string question =
        "Do all variable entities stated in the rule appear in the explanation?";

    auto transport = std::make_shared<testkit::StubTransport>();
    LlmGateway gateway(GatewayMode::live, nullptr, transport);
    ModelConfig judge;
    judge.model_name = "stub-judge";
    judge.endpoint = "http://127.0.0.1:9/v1/chat/completions";
    for (const auto &r : records) {
        const auto prompt = build_judge_prompt(
            r, r.sample_instances.empty() ? nullptr : &r.sample_instances.front(),
            r.variable_types);
        c.expect(prompt.find(question) != std::string::npos, "question missing for " + r.rule_id);
        c.expect(prompt.find(r.model_name) == std::string::npos,
                 "generator name leaks into the judge prompt");
        const auto v = judge_explanation(r, gateway, judge);
        c.expect(v.runs.size() == 3 && v.valid_runs() == 3, "three runs per item");
    }
    c.expect(transport->calls() == 3 * records.size(),
             fmt::format("{} judge calls for {} items", transport->calls(), records.size()));

    JudgeVerdict v;
    const std::vector<int> scores = {4, 5, 3};
    for (int s : scores) {
        JudgeRun run;
        run.score = s;
        v.runs.push_back(run);
    }
    aggregate_runs(v);
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / 3.0;
    const double spread = *std::max_element(scores.begin(), scores.end()) -
                          *std::min_element(scores.begin(), scores.end());
    c.expect(mean == 4.0 && spread == 2.0, "hand computation");
    c.expect(v.aggregate_score == mean && v.consistency_spread == spread,
             fmt::format("aggregate ({}, {})", v.aggregate_score, v.consistency_spread));
    return c.outcome(fmt::format("question present in {} prompts, {} calls (3 per item), "
                                 "{{4,5,3}} -> ({}, {})",
                                 records.size(), transport->calls(), v.aggregate_score,
                                 v.consistency_spread));
}

// ---------------------------------------------------------------------------

Outcome agreement_pipeline() {
    Check c;
    std::mt19937_64 rng(100);
    std::vector<JudgeVerdict> verdicts;
    std::vector<AnnotationRecord> human;
    std::vector<double> judge_scores, human_means;
    for (int i = 0; i < 100; ++i) {
        // Latent quality drives both raters; noise breaks the perfect order.
        const int latent = i / 20; // 0..4
        JudgeVerdict v;
        v.item_id = fmt::format("item-{:03d}", i);
        v.aggregate_score = std::clamp(1.0 + latent + (static_cast<double>(below(rng, 5)) - 2) / 3.0,
                                       1.0, 5.0);
        verdicts.push_back(v);
        double sum = 0;
        for (int k = 0; k < 3; ++k) {
            AnnotationRecord a;
            a.item_id = v.item_id;
            a.annotator_id = fmt::format("h{}", k);
            a.correctness = std::clamp(1 + latent + static_cast<int>(below(rng, 3)) - 1, 1, 5);
            sum += a.correctness;
            human.push_back(a);
        }
        judge_scores.push_back(v.aggregate_score);
        human_means.push_back(sum / 3.0);
    }
    const auto r = agreement(verdicts, human);
    const double rho =
        testkit::pearson(testkit::naive_ranks(judge_scores), testkit::naive_ranks(human_means));
    RatingMatrix m;
    for (std::size_t i = 0; i < judge_scores.size(); ++i)
        m.push_back({judge_scores[i], human_means[i]});
    const double alpha = testkit::alpha_oracle(m, MeasurementLevel::ordinal);
    c.expect(r.n_items == 100, "item count");
    c.expect(std::abs(r.spearman_rho - rho) <= kAgreementTol,
             fmt::format("spearman {} vs oracle {}", r.spearman_rho, rho));
    c.expect(std::abs(r.krippendorff_alpha - alpha) <= kAgreementTol,
             fmt::format("alpha {} vs oracle {}", r.krippendorff_alpha, alpha));
    c.expect(rho > 0.5, "rank structure should give strong positive correlation");
    return c.outcome(fmt::format("spearman {:.6f}, alpha {:.6f} match the oracles within {}",
                                 r.spearman_rho, r.krippendorff_alpha, kAgreementTol));
}

// ---------------------------------------------------------------------------

Outcome substituted_tables(const std::map<std::string, bool> &results) {
    Check c;
    for (const char *dep : {"oracle-equivalence", "metric-sanity", "e2e-replay", "agreement"})
        c.expect(results.at(dep), std::string("substitute suite failed: ") + dep);
    const auto readme = testkit::read_file(fixture_path("../../README.md"));
    c.expect(readme.find("## Live-mode runbook") != std::string::npos,
             "README lacks the live-mode runbook");
    return c.outcome("NOT REPRODUCIBLE offline (closed models, training, human raters); "
                     "substituted by the oracle, metric, replay and agreement suites plus the "
                     "README live-mode runbook");
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"oracle-equivalence", oracle_equivalence},
        {"family5-cli", family5_cli},
        {"scale-smoke", scale_smoke},
        {"parser-round-trip", parser_round_trip},
        {"metric-sanity", metric_sanity},
        {"e2e-replay", e2e_replay},
        {"judge-conformance", judge_conformance},
        {"agreement", agreement_pipeline},
    };
    std::map<std::string, bool> results;
    bool all = true;
    auto report = [&](const std::string &name, const std::function<Outcome()> &fn) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception &e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        results[name] = o.pass;
        all = all && o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    };
    for (const auto &[name, fn] : criteria)
        report(name, fn);
    report("reported-tables", [&] { return substituted_tables(results); });
    return all ? 0 : 1;
}
