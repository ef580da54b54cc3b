#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace kgx {

using EntityId = std::uint32_t;
using PredicateId = std::uint32_t;
using TypeId = std::uint32_t;

inline constexpr EntityId kNoEntity = static_cast<EntityId>(-1);

struct Triple {
    EntityId subject = 0;
    PredicateId predicate = 0;
    EntityId object = 0;

    auto operator<=>(const Triple &) const = default;
};

// A (key, value) pair inside a predicate index. For the subject index the key
// is the subject and the value the object; the object index is the mirror.
struct EntityPair {
    EntityId key = 0;
    EntityId value = 0;

    auto operator<=>(const EntityPair &) const = default;
};

// Bidirectional label <-> dense id mapping.
class Dictionary {
  public:
    std::uint32_t intern(std::string_view label);
    std::optional<std::uint32_t> find(std::string_view label) const;
    const std::string &label(std::uint32_t id) const { return labels_.at(id); }
    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string> &labels() const noexcept { return labels_; }

  private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

class TripleStoreBuilder;

// Immutable, predicate-indexed fact set. Safe for concurrent reads.
class TripleStore {
  public:
    TripleStore() = default;

    const Dictionary &entities() const noexcept { return entities_; }
    const Dictionary &predicates() const noexcept { return predicates_; }

    std::size_t fact_count() const noexcept { return fact_count_; }
    std::size_t fact_count(PredicateId p) const;

    // All (subject, object) pairs of p, sorted by subject then object.
    std::span<const EntityPair> facts(PredicateId p) const;
    // (object, subject) pairs of p, sorted by object then subject.
    std::span<const EntityPair> facts_by_object(PredicateId p) const;

    // Pairs (s, o) with the given subject; .value holds the object.
    std::span<const EntityPair> objects(PredicateId p, EntityId s) const;
    // Pairs (o, s) with the given object; .value holds the subject.
    std::span<const EntityPair> subjects(PredicateId p, EntityId o) const;

    bool contains(EntityId s, PredicateId p, EntityId o) const;

    std::optional<EntityId> entity(std::string_view label) const { return entities_.find(label); }
    std::optional<PredicateId> predicate(std::string_view label) const {
        return predicates_.find(label);
    }

    // Every fact, grouped by predicate id.
    std::vector<Triple> triples() const;

  private:
    friend class TripleStoreBuilder;

    struct PredicateIndex {
        std::vector<EntityPair> by_subject;
        std::vector<EntityPair> by_object;
    };

    Dictionary entities_;
    Dictionary predicates_;
    std::vector<PredicateIndex> index_;
    std::size_t fact_count_ = 0;
};

class TripleStoreBuilder {
  public:
    void add(std::string_view subject, std::string_view predicate, std::string_view object);
    TripleStore build() &&;

  private:
    TripleStore store_;
    std::vector<std::vector<EntityPair>> pending_;
};

// Reads `subject<TAB>predicate<TAB>object` lines. Extra fields are ignored,
// blank lines and lines starting with '#' are skipped.
TripleStore ingest_triples(std::istream &in);
TripleStore ingest_triples_file(const std::string &path);

struct LabelSegment {
    std::string domain;
    std::string type;
    std::string label;
    bool leading_slash = true;
};

// A relation label split into its /domain/type/label segments. Concatenated
// labels (two relations merged through a removed mediator node) have two
// segments joined by "-/".
struct PredicateLabel {
    std::string raw;
    std::vector<LabelSegment> segments;
    bool standard = false;

    bool concatenated() const noexcept { return standard && segments.size() == 2; }
    // Final label component of each segment; the raw text for opaque labels.
    std::vector<std::string> final_labels() const;
    std::string join() const;
};

PredicateLabel parse_predicate_label(std::string_view raw);

// "side_effect_19" -> "side_effect"; nullopt unless the label ends in _<digits>.
std::optional<std::string> infer_type_from_id(std::string_view entity_label);

// Underscores to spaces.
std::string humanize(std::string_view label);

// Multi-valued entity -> type assignments. Entities unknown to the store get
// ids past the store's entity range.
class TypeCatalog {
  public:
    TypeCatalog() = default;
    explicit TypeCatalog(const TripleStore &store);

    void add(std::string_view entity_label, std::string_view type_label);

    bool empty() const noexcept { return assignments_ == 0; }
    std::size_t assignment_count() const noexcept { return assignments_; }
    bool single_type() const noexcept { return single_type_; }
    void set_single_type(bool v) noexcept { single_type_ = v; }

    std::span<const TypeId> types_of(EntityId e) const;
    std::vector<std::string> type_labels_of(std::string_view entity_label) const;
    std::optional<EntityId> entity_id(std::string_view entity_label) const;

    const Dictionary &types() const noexcept { return types_; }
    const std::string &type_label(TypeId t) const { return types_.label(t); }
    // Number of entities carrying the type; smaller means more specific.
    std::size_t population(TypeId t) const;

    // Majority (subject-type, object-type) per predicate, filled by
    // derive_signatures().
    const std::unordered_map<PredicateId, std::pair<std::string, std::string>> &
    signatures() const noexcept {
        return signatures_;
    }
    void derive_signatures(const TripleStore &store);

  private:
    const TripleStore *store_ = nullptr;
    Dictionary extra_entities_;
    Dictionary types_;
    std::vector<std::vector<TypeId>> entity_types_;
    std::vector<std::size_t> population_;
    std::unordered_map<PredicateId, std::pair<std::string, std::string>> signatures_;
    std::size_t assignments_ = 0;
    bool single_type_ = false;

    EntityId resolve(std::string_view entity_label);
};

TypeCatalog ingest_entity_types(std::istream &in, const TripleStore &store);
TypeCatalog ingest_entity_types_file(const std::string &path, const TripleStore &store);

// ogbl-biokg convention: one type per entity, read off the id prefix.
TypeCatalog synthesize_types_from_ids(const TripleStore &store);

// Most frequent type among the given entities. Ties go to the more specific
// type (smaller catalog population), then lexicographically. Returns every
// type sharing the top count when `all_ties` is set.
std::vector<TypeId> type_vote(const TypeCatalog &catalog, std::span<const EntityId> entities,
                              bool all_ties = false);

} // namespace kgx
