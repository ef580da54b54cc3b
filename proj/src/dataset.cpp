#include "kgx/dataset.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "kgx/random.hpp"
#include "kgx/text.hpp"

namespace kgx {

using nlohmann::json;
using nlohmann::ordered_json;

std::string to_string(Provenance p) {
    switch (p) {
    case Provenance::judge_accepted:
        return "judge-accepted";
    case Provenance::human_edited:
        return "human-edited";
    case Provenance::human_approved:
        return "human-approved";
    }
    return "judge-accepted";
}

Provenance parse_provenance(const std::string &s) {
    if (s == "judge-accepted")
        return Provenance::judge_accepted;
    if (s == "human-edited")
        return Provenance::human_edited;
    if (s == "human-approved")
        return Provenance::human_approved;
    throw Error("unknown provenance: " + s);
}

std::string to_string(ReviewStatus s) {
    switch (s) {
    case ReviewStatus::pending:
        return "pending";
    case ReviewStatus::in_review:
        return "in-review";
    case ReviewStatus::resolved:
        return "resolved";
    }
    return "pending";
}

ReviewStatus parse_review_status(const std::string &s) {
    if (s == "pending")
        return ReviewStatus::pending;
    if (s == "in-review" || s == "in_review")
        return ReviewStatus::in_review;
    if (s == "resolved")
        return ReviewStatus::resolved;
    throw Error("unknown review status: " + s);
}

std::string to_string(GateDecision d) { return d == GateDecision::accept ? "accept" : "review"; }

ordered_json to_json(const DatasetEntry &e) {
    ordered_json types = ordered_json::array();
    for (const auto &t : e.variable_types)
        types.push_back(ordered_json(to_json(t)));
    ordered_json j;
    j["item_id"] = e.item_id;
    j["rule_text"] = e.rule_text;
    j["variable_types"] = types;
    j["sample_instance"] = e.sample_instance ? ordered_json(to_json(*e.sample_instance))
                                             : ordered_json(nullptr);
    j["explanation"] = e.explanation;
    j["provenance"] = to_string(e.provenance);
    j["judge_aggregate"] =
        e.judge_aggregate ? ordered_json(*e.judge_aggregate) : ordered_json(nullptr);
    if (e.human_scores)
        j["human_scores"] = {{"correctness", e.human_scores->correctness},
                             {"clarity", e.human_scores->clarity},
                             {"logicalness", e.human_scores->logicalness}};
    else
        j["human_scores"] = nullptr;
    j["editor_id"] = e.editor_id;
    return j;
}

DatasetEntry dataset_entry_from_json(const json &j) {
    DatasetEntry e;
    e.item_id = j.at("item_id").get<std::string>();
    e.rule_text = j.at("rule_text").get<std::string>();
    for (const auto &t : j.value("variable_types", json::array()))
        e.variable_types.push_back(typed_variable_from_json(t));
    if (j.contains("sample_instance") && !j["sample_instance"].is_null())
        e.sample_instance = grounded_rule_from_json(j["sample_instance"]);
    e.explanation = j.at("explanation").get<std::string>();
    e.provenance = parse_provenance(j.value("provenance", "judge-accepted"));
    if (j.contains("judge_aggregate") && !j["judge_aggregate"].is_null())
        e.judge_aggregate = j["judge_aggregate"].get<double>();
    if (j.contains("human_scores") && !j["human_scores"].is_null()) {
        const auto &h = j["human_scores"];
        e.human_scores = HumanScores{h.at("correctness").get<double>(),
                                     h.at("clarity").get<double>(),
                                     h.at("logicalness").get<double>()};
    }
    e.editor_id = j.value("editor_id", "");
    return e;
}

DatasetEntry draft_entry(const ExplanationRecord &record,
                         const std::optional<JudgeVerdict> &verdict) {
    DatasetEntry e;
    e.item_id = record.item_id();
    e.rule_text = record.rule_text;
    e.variable_types = record.variable_types;
    if (!record.sample_instances.empty())
        e.sample_instance = record.sample_instances.front();
    e.explanation = record.explanation;
    e.provenance = Provenance::judge_accepted;
    if (verdict)
        e.judge_aggregate = verdict->aggregate_score;
    return e;
}

ordered_json to_json(const ReviewItem &item) {
    ordered_json draft = to_json(item.draft);
    try {
        draft["rule_pretty"] = render_rule(parse_rule(item.draft.rule_text), RenderStyle::pretty);
    } catch (const std::exception &) {
        draft["rule_pretty"] = item.draft.rule_text;
    }
    ordered_json annotations = ordered_json::array();
    for (const auto &a : item.annotations)
        annotations.push_back(to_json(a));
    ordered_json j;
    j["item_id"] = item.item_id;
    j["status"] = to_string(item.status);
    j["claimed_by"] = item.claimed_by;
    j["lease_expires_ms"] = item.lease_expires_ms;
    j["draft"] = draft;
    j["verdict"] = item.verdict ? to_json(*item.verdict) : ordered_json(nullptr);
    j["annotations"] = annotations;
    return j;
}

namespace {

ReviewItem review_item_from_json(const json &j) {
    ReviewItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.draft = dataset_entry_from_json(j.at("draft"));
    if (j.contains("verdict") && !j["verdict"].is_null())
        item.verdict = judge_verdict_from_json(j["verdict"]);
    return item;
}

} // namespace

GateDecision gate(const JudgeVerdict &verdict, const GateConfig &config) {
    if (config.threshold < 1.0 || config.threshold > 5.0)
        throw Error("gate threshold must lie in [1, 5]");
    return verdict.aggregate_score >= config.threshold &&
                   verdict.consistency_spread <= config.max_spread
               ? GateDecision::accept
               : GateDecision::review;
}

ReviewItem apply_annotation(ReviewItem item, const AnnotationRecord &annotation,
                            const AnnotationPolicy &policy) {
    if (item.status == ReviewStatus::resolved)
        throw AnnotationRejected("item " + item.item_id + " is already resolved");
    AnnotationRecord a = annotation;
    if (a.item_id.empty())
        a.item_id = item.item_id;
    if (a.item_id != item.item_id)
        throw AnnotationRejected("annotation is for item " + a.item_id + ", not " +
                                 item.item_id);
    try {
        validate_annotation(a);
    } catch (const ValidationError &e) {
        throw AnnotationRejected(e.what());
    }
    for (const auto &prev : item.annotations)
        if (prev.annotator_id == a.annotator_id)
            throw AnnotationRejected("annotator " + a.annotator_id +
                                     " already annotated item " + item.item_id);

    item.annotations.push_back(std::move(a));
    item.claimed_by.clear();
    item.lease_expires_ms = 0;
    const std::size_t required = std::max<std::size_t>(1, policy.required_annotations);
    item.status =
        item.annotations.size() >= required ? ReviewStatus::resolved : ReviewStatus::pending;
    return item;
}

DatasetEntry resolved_entry(const ReviewItem &item) {
    if (item.status != ReviewStatus::resolved || item.annotations.empty())
        throw Error("item " + item.item_id + " is not resolved");
    DatasetEntry e = item.draft;
    HumanScores s;
    for (const auto &a : item.annotations) {
        s.correctness += a.correctness;
        s.clarity += a.clarity;
        s.logicalness += a.logicalness;
    }
    const double n = static_cast<double>(item.annotations.size());
    s.correctness /= n;
    s.clarity /= n;
    s.logicalness /= n;
    e.human_scores = s;
    e.provenance = Provenance::human_approved;
    e.editor_id.clear();
    for (const auto &a : item.annotations) {
        if (a.edited_explanation && !text::trim(*a.edited_explanation).empty()) {
            e.explanation = std::string(text::trim(*a.edited_explanation));
            e.provenance = Provenance::human_edited;
            e.editor_id = a.annotator_id;
        }
    }
    return e;
}

const std::vector<DatasetEntry> &SplitSet::get(const std::string &name) const {
    if (name == "train")
        return train;
    if (name == "val")
        return val;
    if (name == "test")
        return test;
    throw Error("unknown split: " + name + " (expected train, val or test)");
}

SplitSet build_splits(const std::vector<DatasetEntry> &entries, const SplitSizes &sizes,
                      std::uint64_t seed) {
    std::map<std::string, const DatasetEntry *> by_rule;
    for (const auto &e : entries) {
        auto [it, inserted] = by_rule.emplace(e.rule_text, &e);
        if (!inserted && !it->second->human() && e.human())
            it->second = &e;
    }
    std::vector<const DatasetEntry *> human;
    std::vector<const DatasetEntry *> machine;
    for (const auto &[rule, e] : by_rule)
        (e->human() ? human : machine).push_back(e);
    auto by_item = [](const DatasetEntry *a, const DatasetEntry *b) {
        return a->item_id < b->item_id;
    };
    std::sort(human.begin(), human.end(), by_item);
    std::sort(machine.begin(), machine.end(), by_item);

    const std::size_t unique = human.size() + machine.size();
    if (unique < sizes.total())
        throw SplitError("splits need " + std::to_string(sizes.total()) +
                         " entries with distinct rules, have " + std::to_string(unique) +
                         " (short by " + std::to_string(sizes.total() - unique) + ")");
    if (machine.size() < sizes.train)
        throw SplitError("train split needs " + std::to_string(sizes.train) +
                         " judge-accepted entries, have " + std::to_string(machine.size()) +
                         " (short by " + std::to_string(sizes.train - machine.size()) + ")");

    std::mt19937_64 rng(seed);
    stable_shuffle(machine, rng);
    stable_shuffle(human, rng);

    SplitSet out;
    for (std::size_t i = 0; i < sizes.train; ++i)
        out.train.push_back(*machine[i]);
    const std::size_t held_out = sizes.val + sizes.test;
    std::vector<const DatasetEntry *> pool(
        human.begin(), human.begin() + static_cast<std::ptrdiff_t>(std::min(human.size(), held_out)));
    for (std::size_t i = sizes.train; pool.size() < held_out; ++i)
        pool.push_back(machine[i]);
    stable_shuffle(pool, rng);
    for (std::size_t i = 0; i < pool.size(); ++i)
        (i < sizes.val ? out.val : out.test).push_back(*pool[i]);
    return out;
}

std::string export_jsonl(const std::vector<DatasetEntry> &split, DatasetProfile profile) {
    const std::string system(text::trim(build_background(profile)));
    std::string out;
    for (const auto &e : split) {
        const auto spec = make_prompt_spec(parse_rule(e.rule_text), Strategy::zero_shot,
                                           std::nullopt, profile, {});
        ordered_json line;
        line["messages"] = ordered_json::array(
            {ordered_json{{"role", "system"}, {"content", system}},
             ordered_json{{"role", "user"},
                          {"content", std::string(text::trim(render_prompt(spec, false)))}},
             ordered_json{{"role", "assistant"}, {"content", e.explanation}}});
        out += line.dump();
        out += '\n';
    }
    return out;
}

ordered_json to_json(const CurationStats &s) {
    ordered_json j;
    j["by_status"] = s.by_status;
    j["by_provenance"] = s.by_provenance;
    j["entries"] = s.entries;
    return j;
}

// ---------------------------------------------------------------------------

CurationStore::CurationStore(std::filesystem::path log_path, CurationOptions options)
    : log_path_(std::move(log_path)), options_(std::move(options)) {
    if (!options_.now_ms)
        options_.now_ms = [] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                .count();
        };
    if (!options_.clock)
        options_.clock = utc_timestamp;
    if (log_path_.has_parent_path())
        std::filesystem::create_directories(log_path_.parent_path());
    replay();
    log_.open(log_path_, std::ios::binary | std::ios::app);
    if (!log_)
        throw Error("cannot open event log: " + log_path_.string());
}

std::int64_t CurationStore::now() const { return options_.now_ms(); }

void CurationStore::replay() {
    std::ifstream in(log_path_, std::ios::binary);
    if (!in)
        return;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty())
            continue;
        try {
            apply_event(json::parse(line));
        } catch (const std::exception &e) {
            throw InputError(line_no, "event log " + log_path_.string() + ": " + e.what());
        }
    }
}

void CurationStore::apply_event(const json &ev) {
    const auto type = ev.at("type").get<std::string>();
    if (type == "accepted") {
        auto entry = dataset_entry_from_json(ev.at("entry"));
        const auto id = entry.item_id;
        if (slots_.emplace(id, Slot{std::move(entry), std::nullopt}).second)
            order_.push_back(id);
    } else if (type == "review") {
        auto item = review_item_from_json(ev.at("item"));
        const auto id = item.item_id;
        if (slots_.emplace(id, Slot{std::nullopt, std::move(item)}).second)
            order_.push_back(id);
    } else if (type == "claim") {
        auto &item = slots_.at(ev.at("item_id").get<std::string>()).review.value();
        item.status = ReviewStatus::in_review;
        item.claimed_by = ev.at("annotator").get<std::string>();
        item.lease_expires_ms = ev.at("lease_expires_ms").get<std::int64_t>();
    } else if (type == "annotation") {
        const auto a = annotation_from_json(ev.at("annotation"));
        auto &item = slots_.at(a.item_id).review.value();
        item = apply_annotation(std::move(item), a, options_.policy);
    } else if (type == "resolved") {
        // Derived from the annotations; kept in the log for auditing.
    } else {
        throw Error("unknown event type: " + type);
    }
}

void CurationStore::append(ordered_json event) {
    ordered_json line;
    line["at"] = options_.clock();
    for (auto &[k, v] : event.items())
        line[k] = v;
    log_ << line.dump() << '\n';
    log_.flush();
    if (!log_)
        throw Error("failed to write event log: " + log_path_.string());
}

bool CurationStore::contains(const std::string &item_id) const {
    std::lock_guard lock(mutex_);
    return slots_.contains(item_id);
}

bool CurationStore::add_accepted(const DatasetEntry &entry, const JudgeVerdict &verdict) {
    std::lock_guard lock(mutex_);
    if (slots_.contains(entry.item_id))
        return false;
    ordered_json ev;
    ev["type"] = "accepted";
    ev["entry"] = to_json(entry);
    ev["verdict"] = to_json(verdict);
    append(ev);
    slots_.emplace(entry.item_id, Slot{entry, std::nullopt});
    order_.push_back(entry.item_id);
    return true;
}

bool CurationStore::add_review(const ReviewItem &item) {
    std::lock_guard lock(mutex_);
    if (slots_.contains(item.item_id))
        return false;
    ReviewItem fresh;
    fresh.item_id = item.item_id;
    fresh.draft = item.draft;
    fresh.verdict = item.verdict;
    ordered_json body;
    body["item_id"] = fresh.item_id;
    body["draft"] = to_json(fresh.draft);
    body["verdict"] = fresh.verdict ? to_json(*fresh.verdict) : ordered_json(nullptr);
    ordered_json ev;
    ev["type"] = "review";
    ev["item"] = body;
    append(ev);
    slots_.emplace(fresh.item_id, Slot{std::nullopt, fresh});
    order_.push_back(fresh.item_id);
    return true;
}

ReviewStatus CurationStore::effective_status(const ReviewItem &item, std::int64_t t) const {
    if (item.status == ReviewStatus::in_review && item.lease_expires_ms <= t)
        return ReviewStatus::pending;
    return item.status;
}

ReviewItem CurationStore::claim_locked(ReviewItem &item, const std::string &annotator,
                                       std::int64_t t) {
    const auto expires = t + options_.lease.count();
    ordered_json ev;
    ev["type"] = "claim";
    ev["item_id"] = item.item_id;
    ev["annotator"] = annotator;
    ev["lease_expires_ms"] = expires;
    append(ev);
    item.status = ReviewStatus::in_review;
    item.claimed_by = annotator;
    item.lease_expires_ms = expires;
    return item;
}

namespace {

bool annotated_by(const ReviewItem &item, const std::string &annotator) {
    return std::any_of(item.annotations.begin(), item.annotations.end(),
                       [&](const AnnotationRecord &a) { return a.annotator_id == annotator; });
}

} // namespace

std::optional<ReviewItem> CurationStore::claim_next(const std::string &annotator) {
    if (annotator.empty())
        throw ValidationError("annotator id is required");
    std::lock_guard lock(mutex_);
    const auto t = now();
    for (const auto &id : order_) {
        auto &slot = slots_.at(id);
        if (!slot.review || effective_status(*slot.review, t) != ReviewStatus::pending ||
            annotated_by(*slot.review, annotator))
            continue;
        return claim_locked(*slot.review, annotator, t);
    }
    return std::nullopt;
}

ReviewItem CurationStore::claim(const std::string &item_id, const std::string &annotator) {
    if (annotator.empty())
        throw ValidationError("annotator id is required");
    std::lock_guard lock(mutex_);
    const auto it = slots_.find(item_id);
    if (it == slots_.end() || !it->second.review)
        throw NotFoundError("no review item " + item_id);
    auto &item = *it->second.review;
    const auto t = now();
    if (effective_status(item, t) != ReviewStatus::pending)
        throw ConflictError("item " + item_id + " is " + to_string(effective_status(item, t)));
    if (annotated_by(item, annotator))
        throw ConflictError("annotator " + annotator + " already annotated item " + item_id);
    return claim_locked(item, annotator, t);
}

ReviewItem CurationStore::submit(const std::string &item_id, AnnotationRecord annotation) {
    std::lock_guard lock(mutex_);
    const auto it = slots_.find(item_id);
    if (it == slots_.end() || !it->second.review)
        throw NotFoundError("no review item " + item_id);
    auto &item = *it->second.review;
    const auto t = now();
    if (item.status == ReviewStatus::resolved)
        throw ConflictError("item " + item_id + " is already resolved");
    if (effective_status(item, t) != ReviewStatus::in_review ||
        item.claimed_by != annotation.annotator_id)
        throw ConflictError("item " + item_id + " is not claimed by annotator " +
                            annotation.annotator_id);
    if (annotation.item_id.empty())
        annotation.item_id = item_id;
    if (annotation.created_at.empty())
        annotation.created_at = options_.clock();

    auto updated = apply_annotation(item, annotation, options_.policy); // throws on rejection
    ordered_json ev;
    ev["type"] = "annotation";
    ev["annotation"] = to_json(annotation);
    append(ev);
    if (updated.status == ReviewStatus::resolved) {
        ordered_json res;
        res["type"] = "resolved";
        res["item_id"] = item_id;
        res["entry"] = to_json(resolved_entry(updated));
        append(res);
    }
    item = std::move(updated);
    return item;
}

std::optional<ReviewItem> CurationStore::item(const std::string &item_id) const {
    std::lock_guard lock(mutex_);
    const auto it = slots_.find(item_id);
    if (it == slots_.end())
        return std::nullopt;
    if (it->second.review) {
        auto copy = *it->second.review;
        copy.status = effective_status(copy, now());
        return copy;
    }
    // Judge-accepted entries are presented as resolved items without annotations.
    ReviewItem view;
    view.item_id = item_id;
    view.draft = *it->second.accepted;
    view.status = ReviewStatus::resolved;
    return view;
}

std::vector<ReviewItem> CurationStore::items(std::optional<ReviewStatus> status) const {
    std::lock_guard lock(mutex_);
    const auto t = now();
    std::vector<ReviewItem> out;
    for (const auto &id : order_) {
        const auto &slot = slots_.at(id);
        if (!slot.review)
            continue;
        auto copy = *slot.review;
        copy.status = effective_status(copy, t);
        if (!status || copy.status == *status)
            out.push_back(std::move(copy));
    }
    return out;
}

std::vector<DatasetEntry> CurationStore::entries() const {
    std::lock_guard lock(mutex_);
    std::vector<DatasetEntry> out;
    for (const auto &id : order_) {
        const auto &slot = slots_.at(id);
        if (slot.accepted)
            out.push_back(*slot.accepted);
        else if (slot.review && slot.review->status == ReviewStatus::resolved)
            out.push_back(resolved_entry(*slot.review));
    }
    return out;
}

CurationStats CurationStore::stats() const {
    CurationStats s;
    for (const auto st : {ReviewStatus::pending, ReviewStatus::in_review, ReviewStatus::resolved})
        s.by_status[to_string(st)] = 0;
    for (const auto p :
         {Provenance::judge_accepted, Provenance::human_edited, Provenance::human_approved})
        s.by_provenance[to_string(p)] = 0;
    for (const auto &item : items())
        ++s.by_status[to_string(item.status)];
    for (const auto &e : entries())
        ++s.by_provenance[to_string(e.provenance)];
    s.entries = 0;
    for (const auto &[k, n] : s.by_provenance)
        s.entries += n;
    return s;
}

BuildSummary build_dataset(CurationStore &store, const std::vector<ExplanationRecord> &records,
                           const std::vector<JudgeVerdict> &verdicts, const GateConfig &config) {
    std::map<std::string, const JudgeVerdict *> by_item;
    for (const auto &v : verdicts)
        by_item.emplace(v.item_id, &v);
    BuildSummary summary;
    for (const auto &r : records) {
        const auto id = r.item_id();
        const auto it = by_item.find(id);
        std::optional<JudgeVerdict> verdict;
        if (it != by_item.end())
            verdict = *it->second;
        auto draft = draft_entry(r, verdict);
        bool added = false;
        if (verdict && gate(*verdict, config) == GateDecision::accept) {
            added = store.add_accepted(draft, *verdict);
            summary.accepted += added ? 1 : 0;
        } else {
            ReviewItem item;
            item.item_id = id;
            item.draft = std::move(draft);
            item.verdict = verdict;
            added = store.add_review(item);
            summary.review += added ? 1 : 0;
        }
        summary.existing += added ? 0 : 1;
    }
    return summary;
}

} // namespace kgx
