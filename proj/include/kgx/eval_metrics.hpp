#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "kgx/error.hpp"
#include "kgx/rule.hpp"

namespace kgx {

// ---------------------------------------------------------------------------
// Faithfulness: automated proxy for the human-counted miss/hallucination metrics.

struct FaithfulnessOptions {
    // Fraction of a relation's final-label tokens (stop words removed) that
    // must appear in the explanation.
    double relation_token_fraction = 0.5;
    // Optional dictionaries of known entity labels and relation labels; hits
    // in the explanation that are absent from the rule count as hallucinated.
    std::set<std::string> known_entities;
    std::set<std::string> known_relations;
};

struct FaithfulnessReport {
    std::vector<std::string> missed_entities;
    std::vector<std::string> missed_relations;
    std::vector<std::string> hallucinated_entities;
    std::vector<std::string> hallucinated_relations;

    std::size_t missed_entity_count() const { return missed_entities.size(); }
    std::size_t missed_relation_count() const { return missed_relations.size(); }
    std::size_t hallucinated_entity_count() const { return hallucinated_entities.size(); }
    std::size_t hallucinated_relation_count() const { return hallucinated_relations.size(); }
};

FaithfulnessReport faithfulness(const Rule &rule, const std::string &explanation,
                                const FaithfulnessOptions &options = {});

// ---------------------------------------------------------------------------
// Text-overlap metrics. Tokens are lowercased alphanumeric runs.

// Sufficient statistics for BLEU; add() accumulates one sentence so corpus
// scores come from summed counts.
struct BleuStats {
    static constexpr std::size_t kMaxOrder = 4;
    std::array<std::size_t, kMaxOrder> matches{};
    std::array<std::size_t, kMaxOrder> totals{};
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;

    void add(const std::string &candidate, const std::vector<std::string> &references,
             std::size_t max_n = kMaxOrder);
    // Brevity-penalized geometric mean of clipped n-gram precisions. Orders
    // n >= 2 with no match use add-one smoothing; zero unigram matches give 0.
    double score(std::size_t max_n = kMaxOrder) const;
};

double bleu(const std::string &candidate, const std::vector<std::string> &references,
            std::size_t max_n = 4);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// LCS-based ROUGE-L.
RougeScore rouge_l(const std::string &candidate, const std::string &reference);

// Unigram alignment (exact, then Porter stems), harmonic F-mean weighted
// towards recall and a fragmentation penalty. No synonym matching.
double meteor(const std::string &candidate, const std::string &reference);

// ---------------------------------------------------------------------------
// Agreement statistics.

class StatisticsError : public Error {
  public:
    using Error::Error;
};

// Average ranks (1-based) with ties sharing the mean rank.
std::vector<double> average_ranks(const std::vector<double> &xs);

// Pearson correlation of average ranks. Throws StatisticsError on size
// mismatch, fewer than 3 pairs, or a constant input.
double spearman(const std::vector<double> &xs, const std::vector<double> &ys);

enum class MeasurementLevel { nominal, ordinal, interval };

// ratings[item][rater]; nullopt marks a missing rating.
using RatingMatrix = std::vector<std::vector<std::optional<double>>>;

// Krippendorff's alpha from the coincidence matrix of pairable values.
// Throws StatisticsError when no item has two ratings.
double krippendorff_alpha(const RatingMatrix &ratings,
                          MeasurementLevel level = MeasurementLevel::ordinal);

struct AgreementReport {
    double spearman_rho = 0.0;
    double krippendorff_alpha = 0.0;
    std::size_t n_items = 0;
    std::string method_notes;
};

// ---------------------------------------------------------------------------

struct PerplexityResult {
    std::optional<double> perplexity; // nullopt when skipped
    std::string warning;
    bool skipped() const noexcept { return !perplexity.has_value(); }
};

// POSTs {"text": ...} to the scorer and passes its {"perplexity": x} through.
// Skips with a warning when no endpoint is configured, the endpoint is
// unreachable, or the reply is malformed.
PerplexityResult external_perplexity(const std::string &explanation,
                                     const std::string &scorer_endpoint);

} // namespace kgx
