#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgx/error.hpp"

namespace kgx {

// A rule argument: a variable ("?a") or a constant entity label.
struct Term {
    enum class Kind { variable, constant };

    Kind kind = Kind::variable;
    std::string text;

    static Term variable(std::string name) { return {Kind::variable, std::move(name)}; }
    static Term constant(std::string label) { return {Kind::constant, std::move(label)}; }

    bool is_variable() const noexcept { return kind == Kind::variable; }
    bool operator==(const Term &) const = default;
};

struct Atom {
    Term subject;
    std::string relation;
    Term object;

    bool operator==(const Atom &) const = default;
};

// Horn rule: body atoms (conjunction) imply the head atom.
struct Rule {
    std::vector<Atom> body;
    Atom head;

    std::size_t atom_count() const noexcept { return body.size() + 1; }
    // Distinct variables in order of first appearance (body, then head).
    std::vector<std::string> variables() const;
    std::vector<std::string> constants() const;
    std::vector<std::string> relations() const;
    // Stable hash of the machine rendering.
    std::string id() const;

    bool operator==(const Rule &) const = default;
};

struct RuleMetrics {
    std::size_t support = 0;
    double head_coverage = 0.0;
    double std_confidence = 0.0;
    // Distinct head (subject, object) pairs for which the body holds.
    std::size_t body_pairs = 0;
};

inline constexpr std::size_t kDefaultMaxAtoms = 3;

struct ParseOptions {
    std::size_t max_atoms = kDefaultMaxAtoms;
};

// Accepts `<atom> [& <atom>] => <atom>`. Atoms are tab-separated triples
// (constants may contain spaces), or whitespace-separated triples when the
// text holds no tab. Variables start with '?'.
Rule parse_rule(std::string_view text, const ParseOptions &options = {});

enum class RenderStyle { machine, pretty };

// machine: atoms as `s<TAB>p<TAB>o`, joined by " & ", body and head by " => ".
// pretty: IF ... AND ... THEN ... with humanized relation labels.
std::string render_rule(const Rule &rule, RenderStyle style = RenderStyle::machine);
std::string render_atom(const Atom &atom);
std::string pretty_relation(std::string_view relation);

struct ValidationPolicy {
    bool closed_required = false;
    std::size_t max_atoms = kDefaultMaxAtoms;
};

struct Violation {
    enum class Kind { atom_count, disconnected, not_closed, empty_relation, bad_variable };
    Kind kind;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const noexcept { return violations.empty(); }
    bool has(Violation::Kind k) const;
};

ValidationReport validate_rule(const Rule &rule, const ValidationPolicy &policy = {});

// True when the rules coincide up to a renaming of variables and a
// reordering of body atoms.
bool equivalent(const Rule &a, const Rule &b);

// One row of a rule file. Rows coming from a miner export also carry the
// metrics the miner reported.
struct RuleRow {
    Rule rule;
    std::size_t line = 0;
    std::optional<double> head_coverage;
    std::optional<double> std_confidence;
    std::optional<std::size_t> support;
};

// Column layout of a miner TSV export (0-based). Defaults follow AMIE 3:
// Rule, Head Coverage, Std Confidence, PCA Confidence, Positive Examples, ...
struct MinerColumns {
    std::size_t rule = 0;
    std::optional<std::size_t> head_coverage = 1;
    std::optional<std::size_t> std_confidence = 2;
    std::optional<std::size_t> support = 4;
};

enum class RuleFileFormat { automatic, machine, miner_tsv };

// Reads one rule per line. In automatic mode a line whose first tab-field
// already contains "=>" is treated as a miner export row; header and log
// lines of miner exports (no "=>") are skipped. Throws InputError.
std::vector<RuleRow> read_rules(std::istream &in, RuleFileFormat format = RuleFileFormat::automatic,
                                const MinerColumns &columns = {},
                                const ParseOptions &options = {});
std::vector<RuleRow> read_rules_file(const std::string &path,
                                     RuleFileFormat format = RuleFileFormat::automatic,
                                     const MinerColumns &columns = {},
                                     const ParseOptions &options = {});

} // namespace kgx
