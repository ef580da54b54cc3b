#include "kgx/annotation.hpp"

#include <fstream>

#include "kgx/text.hpp"

namespace kgx {

namespace {

void check_range(const char *field, int v, int lo, int hi) {
    if (v < lo || v > hi)
        throw ValidationError(std::string(field) + " must be in " + std::to_string(lo) + ".." +
                              std::to_string(hi) + ", got " + std::to_string(v));
}

} // namespace

void validate_annotation(const AnnotationRecord &a) {
    if (a.item_id.empty())
        throw ValidationError("item_id is required");
    if (a.annotator_id.empty())
        throw ValidationError("annotator_id is required");
    check_range("correctness", a.correctness, 1, 5);
    check_range("clarity", a.clarity, 1, 5);
    check_range("logicalness", a.logicalness, 1, 3);
    for (const auto &[name, v] : {std::pair{"missed_entities", a.missed_entities},
                                  std::pair{"missed_relations", a.missed_relations},
                                  std::pair{"hallucinated_entities", a.hallucinated_entities},
                                  std::pair{"hallucinated_relations", a.hallucinated_relations}})
        if (v < 0)
            throw ValidationError(std::string(name) + " must not be negative");
    const bool has_edit =
        a.edited_explanation && !text::trim(*a.edited_explanation).empty();
    if (a.correctness < 5 && !has_edit)
        throw ValidationError("correctness below 5 requires an edited explanation");
}

nlohmann::ordered_json to_json(const AnnotationRecord &a) {
    nlohmann::ordered_json j;
    j["item_id"] = a.item_id;
    j["annotator_id"] = a.annotator_id;
    j["correctness"] = a.correctness;
    j["clarity"] = a.clarity;
    j["logicalness"] = a.logicalness;
    j["missed_entities"] = a.missed_entities;
    j["missed_relations"] = a.missed_relations;
    j["hallucinated_entities"] = a.hallucinated_entities;
    j["hallucinated_relations"] = a.hallucinated_relations;
    if (a.edited_explanation)
        j["edited_explanation"] = *a.edited_explanation;
    else
        j["edited_explanation"] = nullptr;
    j["created_at"] = a.created_at;
    return j;
}

AnnotationRecord annotation_from_json(const nlohmann::json &j) {
    if (!j.is_object())
        throw ValidationError("annotation must be a JSON object");
    AnnotationRecord a;
    auto str = [&](const char *key, std::string &out) {
        if (!j.contains(key) || j[key].is_null())
            return;
        if (!j[key].is_string())
            throw ValidationError(std::string(key) + " must be a string");
        out = j[key].get<std::string>();
    };
    auto integer = [&](const char *key, int &out) {
        if (!j.contains(key) || j[key].is_null())
            return;
        if (!j[key].is_number_integer())
            throw ValidationError(std::string(key) + " must be an integer");
        out = j[key].get<int>();
    };
    str("item_id", a.item_id);
    str("annotator_id", a.annotator_id);
    integer("correctness", a.correctness);
    integer("clarity", a.clarity);
    integer("logicalness", a.logicalness);
    integer("missed_entities", a.missed_entities);
    integer("missed_relations", a.missed_relations);
    integer("hallucinated_entities", a.hallucinated_entities);
    integer("hallucinated_relations", a.hallucinated_relations);
    if (j.contains("edited_explanation") && !j["edited_explanation"].is_null()) {
        if (!j["edited_explanation"].is_string())
            throw ValidationError("edited_explanation must be a string");
        a.edited_explanation = j["edited_explanation"].get<std::string>();
    }
    str("created_at", a.created_at);
    return a;
}

std::vector<AnnotationRecord> read_annotations_file(const std::string &path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open annotations file: " + path);
    std::vector<AnnotationRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty())
            continue;
        try {
            out.push_back(annotation_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception &e) {
            throw InputError(line_no, std::string("bad annotation: ") + e.what());
        }
    }
    return out;
}

} // namespace kgx
