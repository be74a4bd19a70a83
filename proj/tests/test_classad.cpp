#include "doctest.h"

#include "glidesim/classad.hpp"

using namespace glidesim;

namespace {
RequirementExpr glidein_expr() {
    RequirementExpr e;
    e.require(attr::kIsGlidein, PredicateOp::MetaEqual, true);
    e.require(attr::kDesiredSites, PredicateOp::Contains, std::string("BlueWaters"));
    return e;
}
}  // namespace

TEST_CASE("glidein expression matches a BlueWaters ad") {
    AttributeSet ad{{attr::kIsGlidein, true},
                    {attr::kSite, std::string("BlueWaters")},
                    {attr::kDesiredSites, StringSet{"BlueWaters"}}};
    CHECK(evaluate(glidein_expr(), ad));
}

TEST_CASE("missing IS_GLIDEIN fails") {
    AttributeSet ad{{attr::kDesiredSites, StringSet{"BlueWaters"}}};
    CHECK_FALSE(evaluate(glidein_expr(), ad));
}

TEST_CASE("empty expression matches anything") {
    CHECK(evaluate(RequirementExpr{}, AttributeSet{}));
    CHECK(evaluate(RequirementExpr{}, AttributeSet{{"X", std::int64_t{3}}}));
}

TEST_CASE("== on undefined or mismatched type is false, =?= is definedness safe") {
    Predicate eq{"A", PredicateOp::Equal, std::int64_t{1}};
    Predicate meta_false{"A", PredicateOp::MetaEqual, false};
    CHECK_FALSE(evaluate(eq, AttributeSet{}));
    CHECK_FALSE(evaluate(eq, AttributeSet{{"A", std::string("1")}}));
    CHECK(evaluate(eq, AttributeSet{{"A", std::int64_t{1}}}));
    CHECK_FALSE(evaluate(meta_false, AttributeSet{}));
    CHECK(evaluate(meta_false, AttributeSet{{"A", false}}));
}

TEST_CASE("contains and less-equal") {
    Predicate in{"S", PredicateOp::Contains, std::string("x")};
    CHECK(evaluate(in, AttributeSet{{"S", StringSet{"x", "y"}}}));
    CHECK(evaluate(in, AttributeSet{{"S", std::string("x")}}));
    CHECK_FALSE(evaluate(in, AttributeSet{{"S", StringSet{"y"}}}));
    Predicate le{"M", PredicateOp::LessEqual, std::int64_t{10}};
    CHECK(evaluate(le, AttributeSet{{"M", std::int64_t{10}}}));
    CHECK_FALSE(evaluate(le, AttributeSet{{"M", std::int64_t{11}}}));
    CHECK_FALSE(evaluate(le, AttributeSet{}));
}

TEST_CASE("mentions and to_string") {
    const auto e = glidein_expr();
    CHECK(e.mentions(attr::kIsGlidein));
    CHECK_FALSE(e.mentions("OTHER"));
    CHECK_FALSE(e.to_string().empty());
}
