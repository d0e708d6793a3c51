#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "factlearn/errors.hpp"
#include "factlearn/relational.hpp"
#include "support.hpp"

using namespace factlearn;
using namespace testsupport;

namespace {

std::filesystem::path write_tmp(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / ("factlearn_rel_" + name);
  std::ofstream(p) << content;
  return p;
}

std::vector<std::vector<double>> rows_of(const Relation& r) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < r.size(); ++i) out.emplace_back(r.row(i).begin(), r.row(i).end());
  return out;
}

}  // namespace

TEST(LoadCsv, ParsesAndInterns) {
  Dictionaries dicts;
  auto p = write_tmp("two.csv", "sku,price\nA1,2.5\nB7,4\n");
  auto r = load_csv(p, "Items", {cat("sku"), cont("price")}, dicts);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(dicts.find("sku")->size(), 2u);
  EXPECT_EQ(r.at(0, 0), 0.0);
  EXPECT_EQ(r.at(1, 0), 1.0);
  EXPECT_EQ(r.at(1, 1), 4.0);
  EXPECT_EQ(dicts.find("sku")->label(1), "B7");
}

TEST(LoadCsv, HeaderOnlyGivesEmptyRelation) {
  Dictionaries dicts;
  auto r = load_csv(write_tmp("empty.csv", "sku,price\n"), "Items", {cat("sku"), cont("price")}, dicts);
  EXPECT_EQ(r.size(), 0u);
  EXPECT_TRUE(r.empty());
}

TEST(LoadCsv, RejectsBadInput) {
  Dictionaries dicts;
  std::vector<Attribute> schema{cat("sku"), cont("price")};
  EXPECT_THROW(load_csv(write_tmp("bad.csv", "sku,price\nx,abc\n"), "I", schema, dicts), InputError);
  EXPECT_THROW(load_csv(write_tmp("nan.csv", "sku,price\nx,NaN\n"), "I", schema, dicts), InputError);
  EXPECT_THROW(load_csv(write_tmp("blank.csv", "sku,price\nx,\n"), "I", schema, dicts), InputError);
  EXPECT_THROW(load_csv(write_tmp("arity.csv", "sku,price\nx,1,2\n"), "I", schema, dicts), InputError);
  EXPECT_THROW(load_csv(write_tmp("hdr.csv", "sku,cost\nx,1\n"), "I", schema, dicts), InputError);
  EXPECT_THROW(load_csv("/nonexistent/file.csv", "I", schema, dicts), InputError);
}

TEST(Dictionary, RoundTrips) {
  Dictionary d;
  for (std::string s : {"saigon", "hanoi", "saigon", "oxford"}) d.intern(s);
  EXPECT_EQ(d.size(), 3u);
  for (std::string s : {"saigon", "hanoi", "oxford"}) EXPECT_EQ(d.label(*d.find(s)), s);
  EXPECT_EQ(*d.find("hanoi"), 1u);
}

TEST(Database, KindsMustAgree) {
  Database db;
  db.add(Relation("R", {cat("A")}));
  EXPECT_THROW(db.add(Relation("S", {cont("A")})), SchemaError);
}

TEST(SortForOrder, Lexicographic) {
  auto db = make_db({{"R", {cont("A"), cont("B"), cont("C")}, {{"2", "1", "0"}, {"1", "2", "0"}}},
                     {"S", {cont("B"), cont("D")}, {{"1", "1"}}}});
  auto vo = VariableOrder::build(node("A", {node("B", {node("C"), node("D")})}), db);
  auto sorted = sort_for_order(db.relation("R"), vo);
  EXPECT_EQ(rows_of(sorted), (std::vector<std::vector<double>>{{1, 2, 0}, {2, 1, 0}}));
  EXPECT_TRUE(is_sorted_for_order(sorted, vo));
  auto again = sort_for_order(sorted, vo);
  EXPECT_EQ(rows_of(again), rows_of(sorted));
}

TEST(SortForOrder, ReordersColumnsByOrderPosition) {
  auto db = make_db({{"R", {cont("C"), cont("A")}, {{"5", "2"}, {"1", "1"}}}});
  auto vo = VariableOrder::build(node("A", {node("C")}), db);
  auto sorted = sort_for_order(db.relation("R"), vo);
  EXPECT_EQ(sorted.attributes()[0].name, "A");
  EXPECT_EQ(rows_of(sorted), (std::vector<std::vector<double>>{{1, 1}, {2, 5}}));
}

TEST(SortForOrder, PreservesMultiset) {
  Generator gen(3);
  auto inst = gen.random_schema();
  auto vo = VariableOrder::build(inst.order, inst.db);
  for (const auto& r : inst.db.relations()) {
    auto s = sort_for_order(r, vo);
    auto a = rows_of(r), b = rows_of(s);
    ASSERT_EQ(a.size(), b.size());
    std::vector<std::size_t> perm;
    for (const auto& attr : s.attributes()) perm.push_back(*r.column_of(attr.name));
    for (auto& row : a) {
      std::vector<double> p;
      for (auto c : perm) p.push_back(row[c]);
      row = p;
    }
    std::sort(a.begin(), a.end());
    EXPECT_EQ(a, b);
  }
}

TEST(VariableOrder, RejectsRelationOffPath) {
  auto db = make_db({{"R", {cont("A"), cont("B")}, {}}, {"S", {cont("B"), cont("D")}, {}},
                     {"T", {cont("A"), cont("D")}, {}}});
  EXPECT_THROW(VariableOrder::build(node("A", {node("B"), node("D")}), db), SchemaError);
}

TEST(VariableOrder, DependencySets) {
  // R(A,B), S(B,D): D depends on B only, so it is cacheable.
  auto db = make_db({{"R", {cat("A"), cat("B")}, {}}, {"S", {cat("B"), cat("D")}, {}}});
  auto vo = VariableOrder::build(node("A", {node("B", {node("D")})}), db);
  const auto& d = vo.node(vo.index_of("D"));
  ASSERT_EQ(d.ancestors.size(), 2u);
  ASSERT_EQ(d.dependencies.size(), 1u);
  EXPECT_EQ(vo.node(d.dependencies[0]).variable, "B");
  EXPECT_TRUE(vo.cacheable(vo.index_of("D")));
  EXPECT_FALSE(vo.cacheable(vo.index_of("B")));
}

TEST(VariableOrder, ExplicitDependencyOverrideIsValidated) {
  auto db = make_db({{"R", {cat("A"), cat("B")}, {}}, {"S", {cat("B"), cat("D")}, {}}});
  auto spec = node("A", {node("B", {node("D")})});
  spec.children[0].children[0].dependencies = std::vector<std::string>{"A", "B"};
  auto vo = VariableOrder::build(spec, db);
  EXPECT_FALSE(vo.cacheable(vo.index_of("D")));
  spec.children[0].children[0].dependencies = std::vector<std::string>{"A"};
  EXPECT_THROW(VariableOrder::build(spec, db), SchemaError);
}

TEST(Fds, CityCountryHolds) {
  auto db = make_db({{"Cities", {cat("city"), cat("country")}, {{"saigon", "vietnam"}, {"hanoi", "vietnam"}}}});
  EXPECT_TRUE(validate_fds(db, FdCatalog(std::vector<SimpleFd>{{"city", {"country"}}})).ok());
}

TEST(Fds, ViolationIsReported) {
  auto db = make_db({{"Cities", {cat("city"), cat("country")}, {{"saigon", "vietnam"}, {"saigon", "england"}}}});
  auto v = validate_fds(db, FdCatalog(std::vector<SimpleFd>{{"city", {"country"}}}));
  ASSERT_FALSE(v.ok());
  EXPECT_EQ(v.violations[0].determinant_label, "saigon");
  EXPECT_EQ(v.violations[0].target, "country");
  EXPECT_NE(v.report().find("saigon"), std::string::npos);
}

TEST(Fds, CatalogRejectsDegenerateGroups) {
  EXPECT_THROW(FdCatalog(std::vector<SimpleFd>{{"city", {}}}), SchemaError);
  EXPECT_THROW(FdCatalog(std::vector<SimpleFd>{{"city", {"country"}}, {"store", {"country"}}}), SchemaError);
  FdCatalog c({{"city", {"country", "pop"}}});
  EXPECT_TRUE(c.is_determinant("city"));
  EXPECT_TRUE(c.is_determined("pop"));
  EXPECT_EQ(c.group_of("country"), 0u);
}
