#include "kgx/eval_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgx/kg_store.hpp"
#include "kgx/llm_gateway.hpp"
#include "kgx/stemmer.hpp"
#include "kgx/text.hpp"

namespace kgx {

namespace {

bool word_boundary(const std::string &s, std::size_t pos) {
    if (pos == 0 || pos >= s.size())
        return true;
    return !std::isalnum(static_cast<unsigned char>(s[pos - 1])) ||
           !std::isalnum(static_cast<unsigned char>(s[pos]));
}

// Whole-word occurrence of `needle` inside `hay`.
bool contains_phrase(const std::string &hay, const std::string &needle) {
    if (needle.empty())
        return false;
    std::size_t pos = hay.find(needle);
    while (pos != std::string::npos) {
        if (word_boundary(hay, pos) && word_boundary(hay, pos + needle.size()))
            return true;
        pos = hay.find(needle, pos + 1);
    }
    return false;
}

std::vector<std::string> relation_tokens(const std::string &relation) {
    std::vector<std::string> all;
    for (const auto &label : parse_predicate_label(relation).final_labels())
        for (auto &t : text::tokenize(label))
            all.push_back(std::move(t));
    std::vector<std::string> content;
    for (const auto &t : all)
        if (!text::is_stop_word(t))
            content.push_back(t);
    return content.empty() ? all : content;
}

std::string relation_phrase(const std::string &relation) {
    return text::normalize(pretty_relation(relation));
}

// Runs of two or more capitalized words.
std::vector<std::string> capitalized_spans(const std::string &s) {
    std::vector<std::string> spans;
    std::vector<std::string> current;
    auto flush = [&] {
        if (current.size() >= 2) {
            std::string span = current.front();
            for (std::size_t i = 1; i < current.size(); ++i)
                span += " " + current[i];
            spans.push_back(span);
        }
        current.clear();
    };
    std::istringstream in(s);
    std::string word;
    while (in >> word) {
        const bool breaks_after = !word.empty() && std::string_view(",.;:!?)").find(word.back()) !=
                                                       std::string_view::npos;
        while (!word.empty() && !std::isalnum(static_cast<unsigned char>(word.back())))
            word.pop_back();
        while (!word.empty() && !std::isalnum(static_cast<unsigned char>(word.front())))
            word.erase(word.begin());
        if (!word.empty() && std::isupper(static_cast<unsigned char>(word.front())))
            current.push_back(word);
        else
            flush();
        if (breaks_after)
            flush();
    }
    flush();
    return spans;
}

} // namespace

FaithfulnessReport faithfulness(const Rule &rule, const std::string &explanation,
                                const FaithfulnessOptions &options) {
    FaithfulnessReport report;
    const std::string norm = text::normalize(explanation);

    std::vector<std::string> constants;
    for (const auto &c : rule.constants()) {
        const auto n = text::normalize(c);
        constants.push_back(n);
        if (!n.empty() && norm.find(n) == std::string::npos)
            report.missed_entities.push_back(c);
    }

    std::set<std::string> stems;
    for (const auto &t : text::tokenize(explanation))
        stems.insert(porter_stem(t));
    const auto relations = rule.relations();
    for (const auto &r : relations) {
        const auto tokens = relation_tokens(r);
        if (tokens.empty())
            continue;
        std::size_t present = 0;
        for (const auto &t : tokens)
            present += stems.contains(porter_stem(t)) ? 1 : 0;
        if (static_cast<double>(present) <
            options.relation_token_fraction * static_cast<double>(tokens.size()))
            report.missed_relations.push_back(r);
    }

    auto overlaps_constant = [&](const std::string &n) {
        return std::any_of(constants.begin(), constants.end(), [&](const std::string &c) {
            return !c.empty() && (n.find(c) != std::string::npos || c.find(n) != std::string::npos);
        });
    };
    std::set<std::string> flagged;
    for (const auto &span : capitalized_spans(explanation)) {
        const auto n = text::normalize(span);
        if (!overlaps_constant(n) && flagged.insert(n).second)
            report.hallucinated_entities.push_back(span);
    }
    for (const auto &e : options.known_entities) {
        const auto n = text::normalize(e);
        if (n.size() < 3 || overlaps_constant(n) || flagged.contains(n))
            continue;
        if (contains_phrase(norm, n)) {
            flagged.insert(n);
            report.hallucinated_entities.push_back(e);
        }
    }

    std::vector<std::string> rule_phrases;
    for (const auto &r : relations)
        rule_phrases.push_back(relation_phrase(r));
    for (const auto &r : options.known_relations) {
        if (std::find(relations.begin(), relations.end(), r) != relations.end())
            continue;
        const auto phrase = relation_phrase(r);
        const bool in_rule = std::any_of(rule_phrases.begin(), rule_phrases.end(),
                                         [&](const std::string &p) {
                                             return p.find(phrase) != std::string::npos;
                                         });
        if (!in_rule && contains_phrase(norm, phrase))
            report.hallucinated_relations.push_back(r);
    }
    return report;
}

// ---------------------------------------------------------------------------
// BLEU

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string> &toks,
                                                             std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> counts;
    if (toks.size() < n)
        return counts;
    for (std::size_t i = 0; i + n <= toks.size(); ++i)
        ++counts[std::vector<std::string>(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                          toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

} // namespace

void BleuStats::add(const std::string &candidate, const std::vector<std::string> &references,
                    std::size_t max_n) {
    if (references.empty())
        throw Error("BLEU needs at least one reference");
    max_n = std::clamp<std::size_t>(max_n, 1, kMaxOrder);
    const auto cand = text::tokenize(candidate);
    std::vector<std::vector<std::string>> refs;
    for (const auto &r : references)
        refs.push_back(text::tokenize(r));

    for (std::size_t n = 1; n <= max_n; ++n) {
        const auto cc = ngram_counts(cand, n);
        std::map<std::vector<std::string>, std::size_t> max_ref;
        for (const auto &r : refs)
            for (const auto &[g, c] : ngram_counts(r, n))
                max_ref[g] = std::max(max_ref[g], c);
        std::size_t clipped = 0;
        for (const auto &[g, c] : cc) {
            const auto it = max_ref.find(g);
            if (it != max_ref.end())
                clipped += std::min(c, it->second);
        }
        matches[n - 1] += clipped;
        totals[n - 1] += cand.size() >= n ? cand.size() - n + 1 : 0;
    }

    candidate_length += cand.size();
    // Closest reference length; ties go to the shorter reference.
    std::size_t best = refs.front().size();
    for (const auto &r : refs) {
        const auto d = [&](std::size_t len) {
            return len > cand.size() ? len - cand.size() : cand.size() - len;
        };
        if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best))
            best = r.size();
    }
    reference_length += best;
}

double BleuStats::score(std::size_t max_n) const {
    max_n = std::clamp<std::size_t>(max_n, 1, kMaxOrder);
    if (candidate_length == 0 || matches[0] == 0)
        return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < max_n; ++n) {
        double p = 0.0;
        if (n > 0 && matches[n] == 0)
            p = 1.0 / static_cast<double>(totals[n] + 1);
        else
            p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        log_sum += std::log(p);
    }
    const double c = static_cast<double>(candidate_length);
    const double r = static_cast<double>(reference_length);
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum / static_cast<double>(max_n));
}

double bleu(const std::string &candidate, const std::vector<std::string> &references,
            std::size_t max_n) {
    BleuStats stats;
    stats.add(candidate, references, max_n);
    return stats.score(max_n);
}

// ---------------------------------------------------------------------------
// ROUGE-L

RougeScore rouge_l(const std::string &candidate, const std::string &reference) {
    const auto c = text::tokenize(candidate);
    const auto r = text::tokenize(reference);
    RougeScore s;
    if (c.empty() || r.empty())
        return s;
    std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
    for (std::size_t i = 1; i <= c.size(); ++i) {
        for (std::size_t j = 1; j <= r.size(); ++j)
            cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[r.size()]);
    s.precision = lcs / static_cast<double>(c.size());
    s.recall = lcs / static_cast<double>(r.size());
    if (s.precision + s.recall > 0)
        s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

// ---------------------------------------------------------------------------
// METEOR

namespace {

// Aligns unmatched candidate tokens to unmatched reference tokens with equal
// keys, preferring the reference position right after the previous alignment
// so that contiguous runs stay together.
void align_stage(const std::vector<std::string> &ck, const std::vector<std::string> &rk,
                 std::vector<int> &cand_to_ref, std::vector<bool> &ref_used) {
    int prev_ref = -1;
    for (std::size_t i = 0; i < ck.size(); ++i) {
        if (cand_to_ref[i] >= 0) {
            prev_ref = cand_to_ref[i];
            continue;
        }
        int chosen = -1;
        int first_after = -1;
        int first_any = -1;
        for (std::size_t j = 0; j < rk.size(); ++j) {
            if (ref_used[j] || rk[j] != ck[i])
                continue;
            const int jj = static_cast<int>(j);
            if (jj == prev_ref + 1) {
                chosen = jj;
                break;
            }
            if (first_any < 0)
                first_any = jj;
            if (jj > prev_ref && first_after < 0)
                first_after = jj;
        }
        if (chosen < 0)
            chosen = first_after >= 0 ? first_after : first_any;
        if (chosen >= 0) {
            cand_to_ref[i] = chosen;
            ref_used[static_cast<std::size_t>(chosen)] = true;
            prev_ref = chosen;
        }
    }
}

} // namespace

double meteor(const std::string &candidate, const std::string &reference) {
    const auto c = text::tokenize(candidate);
    const auto r = text::tokenize(reference);
    if (c.empty() || r.empty())
        return 0.0;
    std::vector<int> cand_to_ref(c.size(), -1);
    std::vector<bool> ref_used(r.size(), false);
    align_stage(c, r, cand_to_ref, ref_used);

    std::vector<std::string> cs, rs;
    for (const auto &t : c)
        cs.push_back(porter_stem(t));
    for (const auto &t : r)
        rs.push_back(porter_stem(t));
    align_stage(cs, rs, cand_to_ref, ref_used);

    std::size_t matches = 0;
    std::size_t chunks = 0;
    int prev_i = -2;
    int prev_j = -2;
    for (std::size_t i = 0; i < c.size(); ++i) {
        const int j = cand_to_ref[i];
        if (j < 0)
            continue;
        ++matches;
        if (!(static_cast<int>(i) == prev_i + 1 && j == prev_j + 1))
            ++chunks;
        prev_i = static_cast<int>(i);
        prev_j = j;
    }
    if (matches == 0)
        return 0.0;
    const double m = static_cast<double>(matches);
    const double p = m / static_cast<double>(c.size());
    const double rc = m / static_cast<double>(r.size());
    const double fmean = 10.0 * p * rc / (rc + 9.0 * p);
    const double frag = static_cast<double>(chunks) / m;
    const double penalty = 0.5 * frag * frag * frag;
    return fmean * (1.0 - penalty);
}

// ---------------------------------------------------------------------------
// Agreement

std::vector<double> average_ranks(const std::vector<double> &xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(xs.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && xs[order[j + 1]] == xs[order[i]])
            ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double> &xs, const std::vector<double> &ys) {
    if (xs.size() != ys.size())
        throw StatisticsError("spearman: inputs differ in length");
    if (xs.size() < 3)
        throw StatisticsError("spearman: need at least 3 pairs");
    const auto rx = average_ranks(xs);
    const auto ry = average_ranks(ys);
    const double n = static_cast<double>(rx.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        throw StatisticsError("spearman: undefined for a constant input");
    return sxy / std::sqrt(sxx * syy);
}

double krippendorff_alpha(const RatingMatrix &ratings, MeasurementLevel level) {
    std::vector<double> values;
    for (const auto &unit : ratings) {
        std::size_t m = 0;
        for (const auto &v : unit)
            m += v ? 1 : 0;
        if (m < 2)
            continue;
        for (const auto &v : unit)
            if (v)
                values.push_back(*v);
    }
    if (values.empty())
        throw StatisticsError("krippendorff_alpha: no item was rated by two raters");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    const std::size_t v = values.size();
    auto index = [&](double x) {
        return static_cast<std::size_t>(std::lower_bound(values.begin(), values.end(), x) -
                                        values.begin());
    };

    std::vector<std::vector<double>> o(v, std::vector<double>(v, 0.0));
    for (const auto &unit : ratings) {
        std::vector<std::size_t> vals;
        for (const auto &x : unit)
            if (x)
                vals.push_back(index(*x));
        if (vals.size() < 2)
            continue;
        const double w = 1.0 / static_cast<double>(vals.size() - 1);
        for (std::size_t a = 0; a < vals.size(); ++a)
            for (std::size_t b = 0; b < vals.size(); ++b)
                if (a != b)
                    o[vals[a]][vals[b]] += w;
    }
    std::vector<double> nc(v, 0.0);
    for (std::size_t c = 0; c < v; ++c)
        nc[c] = std::accumulate(o[c].begin(), o[c].end(), 0.0);
    const double n = std::accumulate(nc.begin(), nc.end(), 0.0);

    auto delta2 = [&](std::size_t c, std::size_t k) -> double {
        if (c == k)
            return 0.0;
        switch (level) {
        case MeasurementLevel::nominal:
            return 1.0;
        case MeasurementLevel::interval: {
            const double d = values[c] - values[k];
            return d * d;
        }
        case MeasurementLevel::ordinal: {
            const auto lo = std::min(c, k);
            const auto hi = std::max(c, k);
            double s = 0.0;
            for (std::size_t g = lo; g <= hi; ++g)
                s += nc[g];
            s -= (nc[lo] + nc[hi]) / 2.0;
            return s * s;
        }
        }
        return 0.0;
    };

    double observed = 0.0;
    double expected = 0.0;
    for (std::size_t c = 0; c < v; ++c) {
        for (std::size_t k = 0; k < v; ++k) {
            const double d = delta2(c, k);
            observed += o[c][k] * d;
            expected += nc[c] * nc[k] * d;
        }
    }
    // A single observed value: no disagreement is possible.
    if (expected == 0.0)
        return 1.0;
    return 1.0 - (n - 1.0) * observed / expected;
}

PerplexityResult external_perplexity(const std::string &explanation,
                                     const std::string &scorer_endpoint) {
    PerplexityResult out;
    if (scorer_endpoint.empty()) {
        out.warning = "no perplexity scorer configured";
        return out;
    }
    HttpTransport transport(std::chrono::seconds(30));
    const auto res = transport.post_json(scorer_endpoint,
                                         nlohmann::json{{"text", explanation}}.dump(), {});
    if (res.status != 200) {
        out.warning = "perplexity scorer unreachable: " +
                      (res.status == 0 ? res.error : "HTTP " + std::to_string(res.status));
        return out;
    }
    const auto j = nlohmann::json::parse(res.body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("perplexity") ||
        !j["perplexity"].is_number()) {
        out.warning = "malformed perplexity scorer reply";
        return out;
    }
    out.perplexity = j["perplexity"].get<double>();
    return out;
}

} // namespace kgx
