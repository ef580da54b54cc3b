#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgx/annotation.hpp"
#include "kgx/explain.hpp"
#include "kgx/judge.hpp"

namespace kgx {

enum class Provenance { judge_accepted, human_edited, human_approved };
std::string to_string(Provenance p);
Provenance parse_provenance(const std::string &s);

struct HumanScores {
    double correctness = 0;
    double clarity = 0;
    double logicalness = 0;
    bool operator==(const HumanScores &) const = default;
};

struct DatasetEntry {
    std::string item_id;
    std::string rule_text;
    std::vector<TypedVariable> variable_types;
    std::optional<GroundedRule> sample_instance;
    std::string explanation; // final text
    Provenance provenance = Provenance::judge_accepted;
    std::optional<double> judge_aggregate;
    std::optional<HumanScores> human_scores;
    std::string editor_id; // set for human-edited entries

    bool human() const noexcept { return provenance != Provenance::judge_accepted; }
};

nlohmann::ordered_json to_json(const DatasetEntry &e);
DatasetEntry dataset_entry_from_json(const nlohmann::json &j);

// Draft entry carrying the record's explanation and first instance.
DatasetEntry draft_entry(const ExplanationRecord &record,
                         const std::optional<JudgeVerdict> &verdict);

enum class ReviewStatus { pending, in_review, resolved };
std::string to_string(ReviewStatus s);
ReviewStatus parse_review_status(const std::string &s);

struct ReviewItem {
    std::string item_id;
    DatasetEntry draft;
    ReviewStatus status = ReviewStatus::pending;
    std::vector<AnnotationRecord> annotations;
    std::optional<JudgeVerdict> verdict;
    std::string claimed_by;
    std::int64_t lease_expires_ms = 0; // unix epoch milliseconds
};

nlohmann::ordered_json to_json(const ReviewItem &item);

enum class GateDecision { accept, review };
std::string to_string(GateDecision d);

struct GateConfig {
    double threshold = 4.5;
    double max_spread = 1.0;
};

// accept iff aggregate >= threshold and spread <= max_spread.
GateDecision gate(const JudgeVerdict &verdict, const GateConfig &config = {});

struct AnnotationPolicy {
    // 1 resolves on the first annotation; 3 waits for three distinct
    // annotators and averages their scores.
    std::size_t required_annotations = 1;
};

class AnnotationRejected : public ValidationError {
  public:
    using ValidationError::ValidationError;
};

// Validates and appends the annotation; resolves the item once the policy is
// met. The final text is the latest edit, or the draft when nobody edited.
// Throws AnnotationRejected with the reason.
ReviewItem apply_annotation(ReviewItem item, const AnnotationRecord &annotation,
                            const AnnotationPolicy &policy = {});

// Resolved item -> dataset entry.
DatasetEntry resolved_entry(const ReviewItem &item);

struct SplitSizes {
    std::size_t train = 400;
    std::size_t val = 50;
    std::size_t test = 50;
    std::size_t total() const noexcept { return train + val + test; }
};

struct SplitSet {
    std::vector<DatasetEntry> train;
    std::vector<DatasetEntry> val;
    std::vector<DatasetEntry> test;
    const std::vector<DatasetEntry> &get(const std::string &name) const;
};

class SplitError : public Error {
  public:
    using Error::Error;
};

// Deduplicates by rule text (a human entry wins over a judge-accepted one),
// then draws the splits with a seeded shuffle. Human entries only go to val
// and test; train is filled from judge-accepted entries. Throws SplitError
// naming the shortfall.
SplitSet build_splits(const std::vector<DatasetEntry> &entries, const SplitSizes &sizes,
                      std::uint64_t seed);

// One chat-format training example per line: the dataset background as the
// system message, the generation prompt as the user message and the final
// explanation as the assistant message.
std::string export_jsonl(const std::vector<DatasetEntry> &split, DatasetProfile profile);

// Counts for dashboards.
struct CurationStats {
    std::map<std::string, std::size_t> by_status;
    std::map<std::string, std::size_t> by_provenance;
    std::size_t entries = 0;
};
nlohmann::ordered_json to_json(const CurationStats &s);

struct CurationOptions {
    AnnotationPolicy policy;
    std::chrono::milliseconds lease{std::chrono::minutes(30)};
    // Milliseconds since the epoch; replaceable for tests.
    std::function<std::int64_t()> now_ms;
    std::function<std::string()> clock = utc_timestamp;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};
class ConflictError : public Error {
  public:
    using Error::Error;
};

// Review queue and accepted entries, persisted as an append-only JSONL
// event log that is replayed on open. Every change is written and flushed
// before it becomes visible. Thread-safe.
class CurationStore {
  public:
    explicit CurationStore(std::filesystem::path log_path, CurationOptions options = {});

    bool contains(const std::string &item_id) const;
    // Adds a judge-accepted entry or a pending review item. Items already
    // present are left alone; returns false for them.
    bool add_accepted(const DatasetEntry &entry, const JudgeVerdict &verdict);
    bool add_review(const ReviewItem &item);

    // Claims the oldest pending item (or one whose lease has expired).
    std::optional<ReviewItem> claim_next(const std::string &annotator);
    // Claims a specific pending item. Throws NotFoundError or ConflictError.
    ReviewItem claim(const std::string &item_id, const std::string &annotator);
    // Throws NotFoundError, ConflictError (not claimed by this annotator or
    // lease expired) or AnnotationRejected.
    ReviewItem submit(const std::string &item_id, AnnotationRecord annotation);

    std::optional<ReviewItem> item(const std::string &item_id) const;
    std::vector<ReviewItem> items(std::optional<ReviewStatus> status = std::nullopt) const;
    // Judge-accepted entries and resolved items, in insertion order.
    std::vector<DatasetEntry> entries() const;
    CurationStats stats() const;

    const std::filesystem::path &log_path() const noexcept { return log_path_; }

  private:
    struct Slot {
        std::optional<DatasetEntry> accepted;
        std::optional<ReviewItem> review;
    };

    std::filesystem::path log_path_;
    CurationOptions options_;
    mutable std::mutex mutex_;
    std::ofstream log_;
    std::vector<std::string> order_;
    std::map<std::string, Slot> slots_;

    void replay();
    void apply_event(const nlohmann::json &event);
    void append(nlohmann::ordered_json event);
    std::int64_t now() const;
    ReviewStatus effective_status(const ReviewItem &item, std::int64_t now) const;
    ReviewItem claim_locked(ReviewItem &item, const std::string &annotator, std::int64_t now);
};

// Gates every record that has a verdict: accepted ones become entries,
// the rest (and records without a verdict) become review items.
struct BuildSummary {
    std::size_t accepted = 0;
    std::size_t review = 0;
    std::size_t existing = 0;
};
BuildSummary build_dataset(CurationStore &store, const std::vector<ExplanationRecord> &records,
                           const std::vector<JudgeVerdict> &verdicts, const GateConfig &gate);

} // namespace kgx
