#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <variant>
#include <vector>

namespace glidesim {

using StringSet = std::set<std::string>;
using AttrValue = std::variant<bool, std::int64_t, std::string, StringSet>;

/// Case-sensitive attribute map. Absent keys are undefined.
class AttributeSet {
public:
    AttributeSet() = default;
    AttributeSet(std::initializer_list<std::pair<const std::string, AttrValue>> init) : entries_(init) {}

    void set(std::string key, AttrValue value) { entries_.insert_or_assign(std::move(key), std::move(value)); }
    const AttrValue* find(const std::string& key) const;
    bool contains(const std::string& key) const { return entries_.count(key) != 0; }
    const std::map<std::string, AttrValue>& entries() const { return entries_; }

private:
    std::map<std::string, AttrValue> entries_;
};

enum class PredicateOp : std::uint8_t {
    Equal,       // key == literal; undefined or mismatched type is false
    MetaEqual,   // key =?= literal; identity comparison, never undefined
    Contains,    // key ∋ literal; key is a string set (or a single string)
    LessEqual,   // key <= literal; integer attributes only
};

struct Predicate {
    std::string key;
    PredicateOp op = PredicateOp::Equal;
    AttrValue literal;
};

/// Conjunction of predicates. Evaluation is total: it never throws.
struct RequirementExpr {
    std::vector<Predicate> conjuncts;

    RequirementExpr& require(std::string key, PredicateOp op, AttrValue literal) {
        conjuncts.push_back(Predicate{std::move(key), op, std::move(literal)});
        return *this;
    }
    bool mentions(const std::string& key) const;
    std::string to_string() const;
};

bool evaluate(const RequirementExpr& expr, const AttributeSet& ad);
bool evaluate(const Predicate& pred, const AttributeSet& ad);

namespace attr {
inline constexpr const char* kIsGlidein = "IS_GLIDEIN";
inline constexpr const char* kDesiredSites = "DESIRED_SITES";
inline constexpr const char* kSite = "SITE";
}  // namespace attr

}  // namespace glidesim
