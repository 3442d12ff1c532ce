#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "denoparse/dataset.hpp"
#include "denoparse/errors.hpp"

using namespace denoparse;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct TempFile {
    std::string path;
    explicit TempFile(const char* name) {
        path = (std::filesystem::temp_directory_path() / name).string();
    }
    ~TempFile() { std::remove(path.c_str()); }
};

std::string key_of(const DatasetRecord& r) { return r.utterance.to_string(); }

// Rewrites one tab field of one line; for loader-rejection tests.
void tamper(const std::string& src, const std::string& dst, std::size_t line_idx,
            std::size_t field_idx, const std::string& replacement) {
    std::ifstream is(src);
    std::ofstream os(dst, std::ios::trunc);
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        if (n++ == line_idx) {
            std::vector<std::string> fields;
            std::stringstream ss(line);
            std::string f;
            while (std::getline(ss, f, '\t')) fields.push_back(f);
            REQUIRE(field_idx < fields.size());
            fields[field_idx] = replacement;
            for (std::size_t i = 0; i < fields.size(); ++i)
                os << fields[i] << (i + 1 < fields.size() ? "\t" : "");
            os << '\n';
        } else {
            os << line << '\n';
        }
    }
}

}  // namespace

TEST_CASE("legal space covers 100 + 2000 + 40000 expressions") {
    std::vector<FlatExpr> space = legal_space();
    REQUIRE(space.size() == 42100);

    std::map<std::size_t, int> by_count;  // operand count -> expressions
    for (const FlatExpr& f : space) ++by_count[f.operands.size()];
    CHECK(by_count[2] == 100);
    CHECK(by_count[3] == 2000);
    CHECK(by_count[4] == 40000);

    std::set<std::string> distinct;
    for (const FlatExpr& f : space) distinct.insert(Utterance::from_flat(f).to_string());
    CHECK(distinct.size() == space.size());
}

TEST_CASE("records carry the precedence reading and its value") {
    auto utt = Utterance::parse("five plus three times two");
    REQUIRE(utt);
    DatasetRecord r = record_from_flat(utt->flat());

    CHECK(r.denotation == Rational(11));
    CHECK(tgt_to_string(r.gold(GrammarMode::WithBrackets)) == "Go [ 5 + ( 3 * 2 ) ] End");
    CHECK(tgt_to_string(r.gold(GrammarMode::NoBrackets)) == "Go 5 + 3 * 2 End");

    auto div = Utterance::parse("one divide two divide four");
    REQUIRE(div);
    DatasetRecord d = record_from_flat(div->flat());
    CHECK(d.denotation == Rational(1, 8));
}

TEST_CASE("generation is deterministic, disjoint and duplicate-free") {
    auto [train_a, test_a] = generate_datasets(7, 300, 200);
    auto [train_b, test_b] = generate_datasets(7, 300, 200);

    REQUIRE(train_a.size() == 200);
    REQUIRE(test_a.size() == 100);

    std::set<std::string> train_keys, test_keys;
    for (std::size_t i = 0; i < train_a.size(); ++i) {
        CHECK(key_of(train_a.records[i]) == key_of(train_b.records[i]));
        train_keys.insert(key_of(train_a.records[i]));
    }
    for (std::size_t i = 0; i < test_a.size(); ++i) {
        CHECK(key_of(test_a.records[i]) == key_of(test_b.records[i]));
        test_keys.insert(key_of(test_a.records[i]));
    }
    CHECK(train_keys.size() == train_a.size());
    CHECK(test_keys.size() == test_a.size());
    for (const auto& k : test_keys) CHECK(train_keys.count(k) == 0);

    auto [train_c, test_c] = generate_datasets(8, 300, 200);
    int moved = 0;
    for (std::size_t i = 0; i < train_c.size(); ++i) {
        if (key_of(train_c.records[i]) != key_of(train_a.records[i])) ++moved;
    }
    CHECK(moved > 150);  // a different seed reshuffles nearly everything
}

TEST_CASE("every generated record executes to its stored denotation") {
    auto [train, test] = generate_datasets(3, 250, 150);
    for (const Dataset* ds : {&train, &test}) {
        for (const DatasetRecord& r : ds->records) {
            auto bracketed = parse_logical_form(r.gold(GrammarMode::WithBrackets),
                                                GrammarMode::WithBrackets);
            auto flat = parse_logical_form(r.gold(GrammarMode::NoBrackets),
                                           GrammarMode::NoBrackets);
            REQUIRE(bracketed);
            REQUIRE(flat);
            CHECK(evaluate(*bracketed) == r.denotation);
            CHECK(evaluate(*flat) == r.denotation);
            CHECK(is_precedence_canonical(r.tree));
        }
    }
}

TEST_CASE("save/load round-trips and the bytes are stable") {
    auto [train, test] = generate_datasets(11, 120, 80);
    TempFile f("denoparse_dataset_roundtrip.tsv");
    save_dataset(f.path, train);
    Dataset back = load_dataset(f.path);

    REQUIRE(back.size() == train.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back.records[i].utterance == train.records[i].utterance);
        CHECK(back.records[i].denotation == train.records[i].denotation);
        CHECK(back.records[i].gold(GrammarMode::WithBrackets) ==
              train.records[i].gold(GrammarMode::WithBrackets));
    }

    TempFile g("denoparse_dataset_again.tsv");
    save_dataset(g.path, back);
    CHECK(slurp(f.path) == slurp(g.path));
}

TEST_CASE("the loader rejects corrupted records") {
    auto [train, test] = generate_datasets(5, 40, 40);
    TempFile good("denoparse_dataset_good.tsv");
    save_dataset(good.path, train);
    TempFile bad("denoparse_dataset_bad.tsv");

    CHECK_THROWS_AS(load_dataset("/nonexistent/denoparse.tsv"), IoError);

    SUBCASE("wrong field count") {
        std::ofstream os(bad.path, std::ios::trunc);
        os << "one plus two\tGo [ 1 + 2 ] End\t3/1\n";
        os.close();
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
    SUBCASE("unparseable utterance") {
        tamper(good.path, bad.path, 2, 0, "one plus banana");
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
    SUBCASE("bracketed and flat forms disagree") {
        tamper(good.path, bad.path, 0, 2, "Go 1 + 1 End");
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
    SUBCASE("denotation mismatch") {
        tamper(good.path, bad.path, 1, 3, "999/7");
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
    SUBCASE("malformed rational") {
        tamper(good.path, bad.path, 1, 3, "three");
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
    SUBCASE("form that does not match the utterance") {
        std::ofstream os(bad.path, std::ios::trunc);
        os << "one plus two\tGo [ 1 + 3 ] End\tGo 1 + 3 End\t4/1\n";
        os.close();
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
    SUBCASE("non-canonical bracketing") {
        // (5 + 3) * 2 flattens to the same words but is not the precedence
        // reading, so its flat rendering disagrees.
        std::ofstream os(bad.path, std::ios::trunc);
        os << "five plus three times two\tGo ( [ 5 + 3 ] * 2 ) End\tGo 5 + 3 * 2 End\t16/1\n";
        os.close();
        CHECK_THROWS_AS(load_dataset(bad.path), ValidationError);
    }
}

TEST_CASE("generation bounds are validated") {
    CHECK_THROWS_AS(generate_datasets(0, 42101, 10), ValidationError);
    CHECK_THROWS_AS(generate_datasets(0, 50, 51), ValidationError);
}
