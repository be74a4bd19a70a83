#include "glidesim/classad.hpp"

#include <fmt/format.h>

namespace glidesim {

const AttrValue* AttributeSet::find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

bool RequirementExpr::mentions(const std::string& key) const {
    for (const auto& p : conjuncts) {
        if (p.key == key) return true;
    }
    return false;
}

namespace {

std::string literal_text(const AttrValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>) {
                return x ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(x);
            } else if constexpr (std::is_same_v<T, std::string>) {
                return fmt::format("\"{}\"", x);
            } else {
                std::string out = "{";
                bool first = true;
                for (const auto& s : x) {
                    if (!first) out += ",";
                    out += fmt::format("\"{}\"", s);
                    first = false;
                }
                return out + "}";
            }
        },
        v);
}

}  // namespace

std::string RequirementExpr::to_string() const {
    if (conjuncts.empty()) return "true";
    std::string out;
    for (std::size_t i = 0; i < conjuncts.size(); ++i) {
        const auto& p = conjuncts[i];
        if (i) out += " && ";
        const char* op = "==";
        switch (p.op) {
            case PredicateOp::Equal: op = "=="; break;
            case PredicateOp::MetaEqual: op = "=?="; break;
            case PredicateOp::Contains: op = "contains"; break;
            case PredicateOp::LessEqual: op = "<="; break;
        }
        out += fmt::format("{} {} {}", p.key, op, literal_text(p.literal));
    }
    return out;
}

bool evaluate(const Predicate& pred, const AttributeSet& ad) {
    const AttrValue* value = ad.find(pred.key);
    switch (pred.op) {
        case PredicateOp::Equal:
        case PredicateOp::MetaEqual:
            // Both forms are false against an undefined attribute. =?= is the
            // identity test, so it is also false (not undefined) across types.
            if (!value) return false;
            return *value == pred.literal;
        case PredicateOp::Contains: {
            if (!value) return false;
            const auto* needle = std::get_if<std::string>(&pred.literal);
            if (!needle) return false;
            if (const auto* set = std::get_if<StringSet>(value)) return set->count(*needle) != 0;
            if (const auto* s = std::get_if<std::string>(value)) return *s == *needle;
            return false;
        }
        case PredicateOp::LessEqual: {
            if (!value) return false;
            const auto* lhs = std::get_if<std::int64_t>(value);
            const auto* rhs = std::get_if<std::int64_t>(&pred.literal);
            return lhs && rhs && *lhs <= *rhs;
        }
    }
    return false;
}

bool evaluate(const RequirementExpr& expr, const AttributeSet& ad) {
    for (const auto& p : expr.conjuncts) {
        if (!evaluate(p, ad)) return false;
    }
    return true;
}

}  // namespace glidesim
