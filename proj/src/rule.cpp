#include "kgx/rule.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <set>

#include "kgx/error.hpp"
#include "kgx/kg_store.hpp"
#include "kgx/text.hpp"

namespace kgx {

namespace {

bool valid_variable_name(std::string_view name) {
    if (name.size() < 2 || name.front() != '?')
        return false;
    return std::all_of(name.begin() + 1, name.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

Term make_term(std::string_view raw) {
    const auto t = text::trim(raw);
    if (t.empty())
        throw RuleParseError("empty term");
    if (t.front() == '?') {
        if (!valid_variable_name(t))
            throw RuleParseError("bad variable name '" + std::string(t) + "'");
        return Term::variable(std::string(t));
    }
    return Term::constant(std::string(t));
}

Atom make_atom(std::string_view s, std::string_view p, std::string_view o) {
    const auto rel = text::trim(p);
    if (rel.empty())
        throw RuleParseError("atom has an empty relation");
    return Atom{make_term(s), std::string(rel), make_term(o)};
}

std::pair<std::string_view, std::string_view> split_conjunction(std::string_view field) {
    auto pos = field.find(" & ");
    std::size_t width = 3;
    if (pos == std::string_view::npos) {
        pos = field.find('&');
        width = 1;
    }
    if (pos == std::string_view::npos)
        throw RuleParseError("atom does not have 3 fields (missing '&' between body atoms?)");
    return {field.substr(0, pos), field.substr(pos + width)};
}

std::vector<Atom> parse_tab_atoms(std::string_view part, bool allow_many) {
    const auto fields = text::split(part, '\t');
    if (fields.size() % 2 == 0 || fields.size() < 3)
        throw RuleParseError("atom does not have 3 fields");
    const std::size_t n = (fields.size() - 1) / 2;
    if (n > 1 && !allow_many)
        throw RuleParseError("head must be a single atom with 3 fields");
    std::vector<Atom> atoms;
    std::string_view subject = fields[0];
    for (std::size_t i = 0; i < n; ++i) {
        const auto relation = fields[2 * i + 1];
        std::string_view object = fields[2 * i + 2];
        std::string_view next_subject;
        if (i + 1 < n)
            std::tie(object, next_subject) = split_conjunction(object);
        atoms.push_back(make_atom(subject, relation, object));
        subject = next_subject;
    }
    return atoms;
}

// Splits on runs of `min_run` or more whitespace characters.
std::vector<std::string_view> split_ws(std::string_view s, std::size_t min_run) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    std::size_t start = 0;
    while (i < s.size()) {
        if (std::isspace(static_cast<unsigned char>(s[i]))) {
            std::size_t j = i;
            while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j])))
                ++j;
            if (j - i >= min_run) {
                if (i > start)
                    out.push_back(s.substr(start, i - start));
                start = j;
            }
            i = j;
        } else {
            ++i;
        }
    }
    if (start < s.size())
        out.push_back(s.substr(start));
    return out;
}

std::vector<std::string_view> ws_fields(std::string_view part, std::size_t min_run) {
    std::vector<std::string_view> fields;
    for (auto tok : split_ws(part, min_run)) {
        // "?b & ?c" survives a multi-space split as one token.
        while (true) {
            const auto pos = tok.find(" & ");
            if (pos == std::string_view::npos)
                break;
            fields.push_back(text::trim(tok.substr(0, pos)));
            tok = tok.substr(pos + 3);
        }
        tok = text::trim(tok);
        if (!tok.empty() && tok != "&")
            fields.push_back(tok);
    }
    return fields;
}

std::vector<Atom> atoms_from_fields(const std::vector<std::string_view> &fields) {
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i + 2 < fields.size(); i += 3)
        atoms.push_back(make_atom(fields[i], fields[i + 1], fields[i + 2]));
    return atoms;
}

std::pair<std::vector<Atom>, Atom> parse_ws_rule(std::string_view body, std::string_view head) {
    for (const std::size_t run : {std::size_t{2}, std::size_t{1}}) {
        const auto bf = ws_fields(body, run);
        const auto hf = ws_fields(head, run);
        if (!bf.empty() && bf.size() % 3 == 0 && hf.size() == 3)
            return {atoms_from_fields(bf), atoms_from_fields(hf).front()};
    }
    throw RuleParseError("atom does not have 3 fields");
}

// Connected components of the atom graph (atoms linked by shared variables).
std::size_t component_count(const Rule &rule) {
    std::vector<const Atom *> atoms;
    for (const auto &a : rule.body)
        atoms.push_back(&a);
    atoms.push_back(&rule.head);
    std::vector<std::size_t> parent(atoms.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    std::map<std::string, std::size_t> first_seen;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        for (const Term *t : {&atoms[i]->subject, &atoms[i]->object}) {
            if (!t->is_variable())
                continue;
            const auto [it, fresh] = first_seen.emplace(t->text, i);
            if (!fresh)
                parent[find(i)] = find(it->second);
        }
    }
    std::set<std::size_t> roots;
    for (std::size_t i = 0; i < atoms.size(); ++i)
        roots.insert(find(i));
    return roots.size();
}

} // namespace

std::vector<std::string> Rule::variables() const {
    std::vector<std::string> out;
    auto visit = [&](const Term &t) {
        if (t.is_variable() && std::find(out.begin(), out.end(), t.text) == out.end())
            out.push_back(t.text);
    };
    for (const auto &a : body) {
        visit(a.subject);
        visit(a.object);
    }
    visit(head.subject);
    visit(head.object);
    return out;
}

std::vector<std::string> Rule::constants() const {
    std::vector<std::string> out;
    auto visit = [&](const Term &t) {
        if (!t.is_variable() && std::find(out.begin(), out.end(), t.text) == out.end())
            out.push_back(t.text);
    };
    for (const auto &a : body) {
        visit(a.subject);
        visit(a.object);
    }
    visit(head.subject);
    visit(head.object);
    return out;
}

std::vector<std::string> Rule::relations() const {
    std::vector<std::string> out;
    auto visit = [&](const std::string &r) {
        if (std::find(out.begin(), out.end(), r) == out.end())
            out.push_back(r);
    };
    for (const auto &a : body)
        visit(a.relation);
    visit(head.relation);
    return out;
}

std::string Rule::id() const { return text::hex64(text::fnv1a64(render_rule(*this))); }

Rule parse_rule(std::string_view input, const ParseOptions &options) {
    const auto t = text::trim(input);
    const auto arrow = t.find("=>");
    if (arrow == std::string_view::npos)
        throw RuleParseError("missing '=>' between body and head");
    if (t.find("=>", arrow + 2) != std::string_view::npos)
        throw RuleParseError("more than one '=>'");
    const auto body_text = text::trim(t.substr(0, arrow));
    const auto head_text = text::trim(t.substr(arrow + 2));
    if (body_text.empty())
        throw RuleParseError("rule has an empty body");
    if (head_text.empty())
        throw RuleParseError("rule has an empty head");

    Rule rule;
    if (t.find('\t') != std::string_view::npos) {
        rule.body = parse_tab_atoms(body_text, true);
        rule.head = parse_tab_atoms(head_text, false).front();
    } else {
        std::tie(rule.body, rule.head) = parse_ws_rule(body_text, head_text);
    }

    if (rule.atom_count() > options.max_atoms)
        throw RuleParseError("too many atoms: " + std::to_string(rule.atom_count()) +
                             " exceeds the maximum of " + std::to_string(options.max_atoms));
    if (component_count(rule) > 1)
        throw RuleParseError("disconnected rule: atoms do not share variables");
    return rule;
}

std::string render_atom(const Atom &atom) {
    return atom.subject.text + "\t" + atom.relation + "\t" + atom.object.text;
}

std::string pretty_relation(std::string_view relation) {
    const auto label = parse_predicate_label(relation);
    if (!label.standard)
        return humanize(relation);
    std::string out;
    for (const auto &seg : label.segments) {
        if (!out.empty())
            out += " / ";
        out += humanize(seg.label);
    }
    return out;
}

std::string render_rule(const Rule &rule, RenderStyle style) {
    std::string out;
    if (style == RenderStyle::machine) {
        for (std::size_t i = 0; i < rule.body.size(); ++i) {
            if (i > 0)
                out += " & ";
            out += render_atom(rule.body[i]);
        }
        out += " => ";
        out += render_atom(rule.head);
        return out;
    }
    auto pretty_atom = [](const Atom &a) {
        return a.subject.text + " " + pretty_relation(a.relation) + " " + a.object.text;
    };
    for (std::size_t i = 0; i < rule.body.size(); ++i) {
        out += i == 0 ? "IF " : " AND ";
        out += pretty_atom(rule.body[i]);
    }
    out += " THEN ";
    out += pretty_atom(rule.head);
    return out;
}

bool ValidationReport::has(Violation::Kind k) const {
    return std::any_of(violations.begin(), violations.end(),
                       [k](const Violation &v) { return v.kind == k; });
}

ValidationReport validate_rule(const Rule &rule, const ValidationPolicy &policy) {
    ValidationReport report;
    if (rule.atom_count() > policy.max_atoms)
        report.violations.push_back({Violation::Kind::atom_count,
                                     std::to_string(rule.atom_count()) +
                                         " atoms exceed the maximum of " +
                                         std::to_string(policy.max_atoms)});
    auto check_atom = [&](const Atom &a) {
        if (a.relation.empty())
            report.violations.push_back({Violation::Kind::empty_relation, "atom has no relation"});
        for (const Term *t : {&a.subject, &a.object}) {
            if (t->is_variable() && !valid_variable_name(t->text))
                report.violations.push_back(
                    {Violation::Kind::bad_variable, "bad variable name '" + t->text + "'"});
        }
    };
    for (const auto &a : rule.body)
        check_atom(a);
    check_atom(rule.head);

    if (component_count(rule) > 1)
        report.violations.push_back(
            {Violation::Kind::disconnected, "atoms do not form a single connected component"});

    if (policy.closed_required) {
        std::map<std::string, std::size_t> atoms_per_var;
        auto count = [&](const Atom &a) {
            std::set<std::string> vars;
            for (const Term *t : {&a.subject, &a.object})
                if (t->is_variable())
                    vars.insert(t->text);
            for (const auto &v : vars)
                ++atoms_per_var[v];
        };
        for (const auto &a : rule.body)
            count(a);
        count(rule.head);
        for (const auto &[var, n] : atoms_per_var)
            if (n < 2)
                report.violations.push_back(
                    {Violation::Kind::not_closed, "variable " + var + " occurs in only one atom"});
    }
    return report;
}

bool equivalent(const Rule &a, const Rule &b) {
    if (a.body.size() != b.body.size())
        return false;
    const auto va = a.variables();
    auto vb = b.variables();
    if (va.size() != vb.size())
        return false;
    std::sort(vb.begin(), vb.end());

    auto rename = [](const Atom &atom, const std::map<std::string, std::string> &m) {
        Atom out = atom;
        if (out.subject.is_variable())
            out.subject.text = m.at(out.subject.text);
        if (out.object.is_variable())
            out.object.text = m.at(out.object.text);
        return render_atom(out);
    };
    std::multiset<std::string> body_b;
    for (const auto &atom : b.body)
        body_b.insert(render_atom(atom));
    const auto head_b = render_atom(b.head);

    do {
        std::map<std::string, std::string> m;
        for (std::size_t i = 0; i < va.size(); ++i)
            m[va[i]] = vb[i];
        if (rename(a.head, m) != head_b)
            continue;
        std::multiset<std::string> body_a;
        for (const auto &atom : a.body)
            body_a.insert(rename(atom, m));
        if (body_a == body_b)
            return true;
    } while (std::next_permutation(vb.begin(), vb.end()));
    return false;
}

std::vector<RuleRow> read_rules(std::istream &in, RuleFileFormat format,
                                const MinerColumns &columns, const ParseOptions &options) {
    std::vector<RuleRow> rows;
    std::string line;
    std::size_t line_no = 0;
    auto number = [&](const std::vector<std::string_view> &fields,
                      std::optional<std::size_t> col) -> std::optional<double> {
        if (!col || *col >= fields.size())
            return std::nullopt;
        const std::string v(text::trim(fields[*col]));
        try {
            std::size_t used = 0;
            const double d = std::stod(v, &used);
            if (used != v.size())
                throw std::invalid_argument(v);
            return d;
        } catch (const std::exception &) {
            throw InputError(line_no, "column " + std::to_string(*col) + " is not a number: '" +
                                          v + "'");
        }
    };

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (text::trim(line).empty() || line.front() == '#')
            continue;
        const auto fields = text::split(line, '\t');
        bool miner_row = format == RuleFileFormat::miner_tsv;
        if (format == RuleFileFormat::automatic) {
            if (line.find("=>") == std::string::npos)
                continue;
            miner_row = fields.front().find("=>") != std::string_view::npos;
        }
        RuleRow row;
        row.line = line_no;
        try {
            if (miner_row) {
                if (columns.rule >= fields.size() ||
                    fields[columns.rule].find("=>") == std::string_view::npos)
                    continue;
                row.rule = parse_rule(fields[columns.rule], options);
                row.head_coverage = number(fields, columns.head_coverage);
                row.std_confidence = number(fields, columns.std_confidence);
                if (const auto s = number(fields, columns.support))
                    row.support = static_cast<std::size_t>(*s);
            } else {
                row.rule = parse_rule(line, options);
            }
        } catch (const RuleParseError &e) {
            throw InputError(line_no, e.what());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<RuleRow> read_rules_file(const std::string &path, RuleFileFormat format,
                                     const MinerColumns &columns, const ParseOptions &options) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open rules file: " + path);
    return read_rules(in, format, columns, options);
}

} // namespace kgx
