#include "kgx/kg_store.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <istream>
#include <map>

#include "kgx/error.hpp"
#include "kgx/text.hpp"

namespace kgx {

namespace {

std::span<const EntityPair> key_range(const std::vector<EntityPair> &pairs, EntityId key) {
    const auto lo = std::lower_bound(pairs.begin(), pairs.end(), EntityPair{key, 0});
    const auto hi = std::upper_bound(lo, pairs.end(), EntityPair{key, kNoEntity});
    return {lo, hi};
}

void strip_cr(std::string &line) {
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
}

bool skippable(std::string_view line) {
    return text::trim(line).empty() || line.front() == '#';
}

} // namespace

std::uint32_t Dictionary::intern(std::string_view label) {
    std::string key(label);
    const auto it = ids_.find(key);
    if (it != ids_.end())
        return it->second;
    const auto id = static_cast<std::uint32_t>(labels_.size());
    labels_.push_back(key);
    ids_.emplace(std::move(key), id);
    return id;
}

std::optional<std::uint32_t> Dictionary::find(std::string_view label) const {
    const auto it = ids_.find(std::string(label));
    if (it == ids_.end())
        return std::nullopt;
    return it->second;
}

std::size_t TripleStore::fact_count(PredicateId p) const {
    return p < index_.size() ? index_[p].by_subject.size() : 0;
}

std::span<const EntityPair> TripleStore::facts(PredicateId p) const {
    if (p >= index_.size())
        return {};
    return index_[p].by_subject;
}

std::span<const EntityPair> TripleStore::facts_by_object(PredicateId p) const {
    if (p >= index_.size())
        return {};
    return index_[p].by_object;
}

std::span<const EntityPair> TripleStore::objects(PredicateId p, EntityId s) const {
    if (p >= index_.size())
        return {};
    return key_range(index_[p].by_subject, s);
}

std::span<const EntityPair> TripleStore::subjects(PredicateId p, EntityId o) const {
    if (p >= index_.size())
        return {};
    return key_range(index_[p].by_object, o);
}

bool TripleStore::contains(EntityId s, PredicateId p, EntityId o) const {
    if (p >= index_.size())
        return false;
    const auto &v = index_[p].by_subject;
    return std::binary_search(v.begin(), v.end(), EntityPair{s, o});
}

std::vector<Triple> TripleStore::triples() const {
    std::vector<Triple> out;
    out.reserve(fact_count_);
    for (PredicateId p = 0; p < index_.size(); ++p)
        for (const auto &f : index_[p].by_subject)
            out.push_back({f.key, p, f.value});
    return out;
}

void TripleStoreBuilder::add(std::string_view subject, std::string_view predicate,
                             std::string_view object) {
    const EntityId s = store_.entities_.intern(subject);
    const PredicateId p = store_.predicates_.intern(predicate);
    const EntityId o = store_.entities_.intern(object);
    if (p >= pending_.size())
        pending_.resize(p + 1);
    pending_[p].push_back({s, o});
}

TripleStore TripleStoreBuilder::build() && {
    store_.index_.resize(pending_.size());
    store_.fact_count_ = 0;
    for (std::size_t p = 0; p < pending_.size(); ++p) {
        auto &facts = pending_[p];
        std::sort(facts.begin(), facts.end());
        facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
        auto &idx = store_.index_[p];
        idx.by_object.reserve(facts.size());
        for (const auto &f : facts)
            idx.by_object.push_back({f.value, f.key});
        std::sort(idx.by_object.begin(), idx.by_object.end());
        store_.fact_count_ += facts.size();
        idx.by_subject = std::move(facts);
    }
    pending_.clear();
    return std::move(store_);
}

TripleStore ingest_triples(std::istream &in) {
    TripleStoreBuilder builder;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skippable(line))
            continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() < 3)
            throw InputError(line_no, "expected subject<TAB>predicate<TAB>object, got " +
                                          std::to_string(fields.size()) + " field(s)");
        if (fields[0].empty() || fields[1].empty() || fields[2].empty())
            throw InputError(line_no, "empty subject, predicate or object");
        builder.add(fields[0], fields[1], fields[2]);
    }
    return std::move(builder).build();
}

TripleStore ingest_triples_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open triples file: " + path);
    return ingest_triples(in);
}

// ---------------------------------------------------------------------------
// Predicate labels

namespace {

std::optional<LabelSegment> parse_segment(std::string_view part) {
    LabelSegment seg;
    seg.leading_slash = !part.empty() && part.front() == '/';
    if (seg.leading_slash)
        part.remove_prefix(1);
    const auto comps = text::split(part, '/');
    if (comps.size() != 3)
        return std::nullopt;
    for (const auto c : comps)
        if (c.empty())
            return std::nullopt;
    seg.domain = comps[0];
    seg.type = comps[1];
    seg.label = comps[2];
    return seg;
}

std::string render_segment(const LabelSegment &seg) {
    std::string out = seg.leading_slash ? "/" : "";
    out += seg.domain + "/" + seg.type + "/" + seg.label;
    return out;
}

} // namespace

PredicateLabel parse_predicate_label(std::string_view raw) {
    PredicateLabel out;
    out.raw = raw;

    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = raw.find("-/", start);
        if (pos == std::string_view::npos) {
            parts.push_back(raw.substr(start));
            break;
        }
        parts.push_back(raw.substr(start, pos - start));
        // The slash after the hyphen opens the next segment.
        start = pos + 1;
    }

    if (parts.size() <= 2) {
        std::vector<LabelSegment> segs;
        for (const auto part : parts) {
            auto seg = parse_segment(part);
            if (!seg)
                break;
            segs.push_back(std::move(*seg));
        }
        const bool complete = segs.size() == parts.size();
        const bool distinct = segs.size() != 2 || segs[0].label != segs[1].label;
        if (complete && distinct) {
            out.segments = std::move(segs);
            out.standard = true;
            return out;
        }
    }

    LabelSegment opaque;
    opaque.label = std::string(raw);
    opaque.leading_slash = false;
    out.segments.push_back(std::move(opaque));
    out.standard = false;
    return out;
}

std::vector<std::string> PredicateLabel::final_labels() const {
    std::vector<std::string> out;
    for (const auto &s : segments)
        out.push_back(s.label);
    return out;
}

std::string PredicateLabel::join() const {
    if (!standard)
        return raw;
    std::string out = render_segment(segments.front());
    for (std::size_t i = 1; i < segments.size(); ++i) {
        // render_segment starts with '/', which supplies the slash in "-/".
        out += "-";
        out += render_segment(segments[i]);
    }
    return out;
}

std::optional<std::string> infer_type_from_id(std::string_view entity_label) {
    const auto us = entity_label.rfind('_');
    if (us == std::string_view::npos || us == 0 || us + 1 == entity_label.size())
        return std::nullopt;
    for (std::size_t i = us + 1; i < entity_label.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(entity_label[i])))
            return std::nullopt;
    return std::string(entity_label.substr(0, us));
}

std::string humanize(std::string_view label) {
    std::string out(label);
    std::replace(out.begin(), out.end(), '_', ' ');
    return out;
}

// ---------------------------------------------------------------------------
// Type catalog

TypeCatalog::TypeCatalog(const TripleStore &store) : store_(&store) {}

EntityId TypeCatalog::resolve(std::string_view entity_label) {
    if (store_ != nullptr) {
        if (const auto id = store_->entity(entity_label))
            return *id;
        return static_cast<EntityId>(store_->entities().size() +
                                     extra_entities_.intern(entity_label));
    }
    return extra_entities_.intern(entity_label);
}

std::optional<EntityId> TypeCatalog::entity_id(std::string_view entity_label) const {
    if (store_ != nullptr) {
        if (const auto id = store_->entity(entity_label))
            return *id;
        if (const auto extra = extra_entities_.find(entity_label))
            return static_cast<EntityId>(store_->entities().size() + *extra);
        return std::nullopt;
    }
    return extra_entities_.find(entity_label);
}

void TypeCatalog::add(std::string_view entity_label, std::string_view type_label) {
    const EntityId e = resolve(entity_label);
    const TypeId t = types_.intern(type_label);
    if (e >= entity_types_.size())
        entity_types_.resize(e + 1);
    if (t >= population_.size())
        population_.resize(t + 1, 0);
    auto &types = entity_types_[e];
    const auto pos = std::lower_bound(types.begin(), types.end(), t);
    if (pos != types.end() && *pos == t)
        return;
    types.insert(pos, t);
    ++population_[t];
    ++assignments_;
}

std::span<const TypeId> TypeCatalog::types_of(EntityId e) const {
    if (e >= entity_types_.size())
        return {};
    return entity_types_[e];
}

std::vector<std::string> TypeCatalog::type_labels_of(std::string_view entity_label) const {
    std::vector<std::string> out;
    if (const auto e = entity_id(entity_label))
        for (const TypeId t : types_of(*e))
            out.push_back(types_.label(t));
    std::sort(out.begin(), out.end());
    return out;
}

std::size_t TypeCatalog::population(TypeId t) const {
    return t < population_.size() ? population_[t] : 0;
}

std::vector<TypeId> type_vote(const TypeCatalog &catalog, std::span<const EntityId> entities,
                              bool all_ties) {
    std::map<TypeId, std::size_t> counts;
    for (const EntityId e : entities)
        for (const TypeId t : catalog.types_of(e))
            ++counts[t];
    if (counts.empty())
        return {};
    std::vector<std::pair<TypeId, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [&](const auto &a, const auto &b) {
        if (a.second != b.second)
            return a.second > b.second;
        const auto pa = catalog.population(a.first);
        const auto pb = catalog.population(b.first);
        if (pa != pb)
            return pa < pb;
        return catalog.type_label(a.first) < catalog.type_label(b.first);
    });
    std::vector<TypeId> out{ranked.front().first};
    if (all_ties)
        for (std::size_t i = 1; i < ranked.size() && ranked[i].second == ranked.front().second;
             ++i)
            out.push_back(ranked[i].first);
    return out;
}

void TypeCatalog::derive_signatures(const TripleStore &store) {
    signatures_.clear();
    std::vector<EntityId> subjects, objects;
    for (PredicateId p = 0; p < store.predicates().size(); ++p) {
        subjects.clear();
        objects.clear();
        for (const auto &f : store.facts(p)) {
            subjects.push_back(f.key);
            objects.push_back(f.value);
        }
        const auto st = type_vote(*this, subjects);
        const auto ot = type_vote(*this, objects);
        if (!st.empty() && !ot.empty())
            signatures_[p] = {type_label(st.front()), type_label(ot.front())};
    }
}

TypeCatalog ingest_entity_types(std::istream &in, const TripleStore &store) {
    TypeCatalog catalog(store);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (skippable(line))
            continue;
        const auto fields = text::split(line, '\t');
        if (fields.size() < 2 || fields[0].empty() || fields[1].empty())
            throw InputError(line_no, "expected entity<TAB>type");
        catalog.add(fields[0], fields[1]);
    }
    return catalog;
}

TypeCatalog ingest_entity_types_file(const std::string &path, const TripleStore &store) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open types file: " + path);
    return ingest_entity_types(in, store);
}

TypeCatalog synthesize_types_from_ids(const TripleStore &store) {
    TypeCatalog catalog(store);
    catalog.set_single_type(true);
    for (const auto &label : store.entities().labels())
        if (const auto t = infer_type_from_id(label))
            catalog.add(label, *t);
    return catalog;
}

} // namespace kgx
