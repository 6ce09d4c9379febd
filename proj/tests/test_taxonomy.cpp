#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "hyolo/rng.hpp"
#include "hyolo/taxonomy.hpp"

using namespace hyolo;

namespace {

// The worked three-level tree: R; A,B,C; D,F,G,H; I,J,L,M,N,O,P.
const char* kFigTree =
    "depth=3 pad=false\n"
    "ROOT > A\n"
    "ROOT > B\n"
    "ROOT > C\n"
    "A > D\n"
    "B > F\n"
    "B > G\n"
    "C > H\n"
    "D > I\n"
    "D > J\n"
    "F > L\n"
    "F > M\n"
    "G > N\n"
    "H > O\n"
    "H > P\n";

std::set<std::string> names_of(const Taxonomy& tax, const AncestorSet& set) {
    std::set<std::string> out;
    for (int id : set.members) out.insert(tax.node(id).name);
    return out;
}

// Random tree generator for property tests: every new node attaches to a
// uniformly chosen existing node shallower than the target depth, then the
// tree is padded to uniform depth.
RawTaxonomy random_raw_tree(Rng& rng, int max_nodes, int target_depth) {
    RawTaxonomy raw;
    raw.declared_depth = target_depth;
    raw.pad = true;
    std::vector<std::pair<std::string, int>> nodes = {{"ROOT", 0}};
    const int n = rng.uniform_int(2, max_nodes);
    for (int i = 0; i < n; ++i) {
        int pi = rng.uniform_int(0, static_cast<int>(nodes.size()) - 1);
        for (int tries = 0; nodes[pi].second >= target_depth && tries < 50; ++tries)
            pi = rng.uniform_int(0, static_cast<int>(nodes.size()) - 1);
        if (nodes[pi].second >= target_depth) continue;
        const std::string name = "n" + std::to_string(i);
        raw.edges.emplace_back(nodes[pi].first, name);
        nodes.emplace_back(name, nodes[pi].second + 1);
    }
    if (raw.edges.empty()) raw.edges.emplace_back("ROOT", "n0");
    return raw;
}

} // namespace

TEST_CASE("worked example tree parses with expected level sizes") {
    const Taxonomy tax = parse_taxonomy(kFigTree);
    CHECK(tax.depth() == 3);
    CHECK(tax.level_size(0) == 3);
    CHECK(tax.level_size(1) == 4);
    CHECK(tax.level_size(2) == 7);
    CHECK(tax.node_count() == 15); // root + 14
}

TEST_CASE("ancestor sets match the worked examples") {
    const Taxonomy tax = parse_taxonomy(kFigTree);
    CHECK(names_of(tax, tax.ancestors(tax.find("M"))) == std::set<std::string>{"B", "F", "M"});
    CHECK(names_of(tax, tax.ancestors(tax.find("N"))) == std::set<std::string>{"B", "G", "N"});
    CHECK(names_of(tax, tax.ancestors(tax.find("A"))) == std::set<std::string>{"A"});
    CHECK_THROWS_AS(tax.ancestors(tax.root()), RootHasNoAncestorSet);
    CHECK_THROWS_AS(tax.find("nope"), UnknownNode);
}

TEST_CASE("ancestor set size equals node depth and excludes the root") {
    const Taxonomy tax = parse_taxonomy(kFigTree);
    for (int id = 0; id < tax.node_count(); ++id) {
        if (id == tax.root()) continue;
        const AncestorSet a = tax.ancestors(id);
        CHECK(static_cast<int>(a.size()) == tax.node(id).depth);
        CHECK(!a.contains(tax.root()));
        CHECK(a.contains(id));
    }
}

TEST_CASE("is_child follows the drawn edges") {
    const Taxonomy tax = parse_taxonomy(kFigTree);
    const auto idx = [&](const char* name) { return tax.node(tax.find(name)).level_index; };
    CHECK(tax.is_child(1, idx("F"), idx("B")));
    CHECK_FALSE(tax.is_child(2, idx("N"), idx("F")));
    CHECK(tax.is_child(2, idx("N"), idx("G")));
    CHECK_THROWS_AS(tax.is_child(0, 0, 0), LevelOutOfRange);
    CHECK_THROWS_AS(tax.is_child(1, 99, 0), IndexOutOfRange);
}

TEST_CASE("leaf_path walks the root-to-leaf indices") {
    const Taxonomy tax = parse_taxonomy(kFigTree);
    const auto path = tax.leaf_path(tax.find("L"));
    REQUIRE(path.size() == 3);
    CHECK(path[0] == tax.node(tax.find("B")).level_index);
    CHECK(path[1] == tax.node(tax.find("F")).level_index);
    CHECK(path[2] == tax.node(tax.find("L")).level_index);
    CHECK_THROWS_AS(tax.leaf_path(tax.find("B")), NotALeaf);

    const Taxonomy flat = parse_taxonomy("depth=1 pad=false\nROOT > only\n");
    CHECK(flat.leaf_path(flat.find("only")) == std::vector<int>{0});
}

TEST_CASE("validation rejects each malformed structure") {
    CHECK_THROWS_AS(parse_taxonomy("depth=1 pad=false\nROOT > A\nX > X\n"), SelfParent);
    CHECK_THROWS_AS(parse_taxonomy("depth=2 pad=false\nROOT > A\nA > B\nB > A\n"), CycleDetected);
    CHECK_THROWS_AS(parse_taxonomy("depth=2 pad=false\nA > B\nB > A\nROOT > A\n"), CycleDetected);
    CHECK_THROWS_AS(parse_taxonomy("depth=1 pad=false\nROOT > A\nX > Y\n"), MultipleRoots);
    CHECK_THROWS_AS(parse_taxonomy("depth=2 pad=false\nROOT > A\nROOT > B\nA > C\nB > C\n"),
                    DuplicateNode);
    CHECK_THROWS_AS(parse_taxonomy("depth=1 pad=false\nROOT > A\nROOT > A\n"), DuplicateNode);
    CHECK_THROWS_AS(parse_taxonomy("depth=2 pad=false\nROOT > A\nROOT > B\nA > C\n"),
                    RaggedDepthWithoutPadding);
    CHECK_THROWS_AS(parse_taxonomy("depth=1 pad=false\nROOT > A\nA > B\n"), DepthMismatch);
    CHECK_THROWS_AS(parse_taxonomy("ROOT > A\n"), TaxonomyParseError);
    CHECK_THROWS_AS(parse_taxonomy("depth=1 pad=false\n"), TaxonomyParseError);
}

TEST_CASE("padding repeats short leaves down to the declared depth") {
    // leaf at depth 2 inside a depth-3 tree: one synthetic child appears
    const Taxonomy tax = parse_taxonomy(
        "depth=3 pad=true\n"
        "ROOT > a\n"
        "a > b\n"
        "b > c\n"
        "ROOT > x\n"
        "x > y\n");
    CHECK(tax.depth() == 3);
    CHECK(tax.has_node("y~1"));
    CHECK(tax.node(tax.find("y~1")).parent == tax.find("y"));
    CHECK(tax.level_size(2) == 2);

    // already-uniform tree: identity
    const Taxonomy same = parse_taxonomy(kFigTree);
    RawTaxonomy raw = parse_raw_taxonomy(kFigTree);
    const Taxonomy padded = pad_to_uniform_depth(raw);
    CHECK(padded.node_count() == same.node_count());
    CHECK(serialize_taxonomy(padded) == serialize_taxonomy(same));
}

TEST_CASE("padded node count equals original plus the depth deficits") {
    Rng rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        const int depth = rng.uniform_int(2, 5);
        RawTaxonomy raw = random_raw_tree(rng, 40, depth);

        // Independent deficit count from the raw edges.
        std::map<std::string, int> node_depth;
        std::set<std::string> has_child;
        node_depth["ROOT"] = 0;
        for (const auto& [p, c] : raw.edges) {
            node_depth[c] = node_depth[p] + 1;
            has_child.insert(p);
        }
        long deficits = 0;
        for (const auto& [name, d] : node_depth)
            if (name != "ROOT" && !has_child.count(name)) deficits += depth - d;

        const Taxonomy tax = pad_to_uniform_depth(raw);
        CHECK(tax.node_count() ==
              static_cast<int>(node_depth.size()) + static_cast<int>(deficits));
        for (int l = 0; l < tax.depth(); ++l)
            for (int i = 0; i < tax.level_size(l); ++i)
                CHECK(tax.node(tax.node_at(l, i)).depth == l + 1);
    }
}

TEST_CASE("leaf_path agrees with brute-force parent walking") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const int depth = rng.uniform_int(2, 5);
        const Taxonomy tax = pad_to_uniform_depth(random_raw_tree(rng, 60, depth));
        for (int i = 0; i < tax.level_size(depth - 1); ++i) {
            const int leaf = tax.node_at(depth - 1, i);
            std::vector<int> oracle;
            for (int cur = leaf; cur != tax.root(); cur = tax.node(cur).parent)
                oracle.push_back(tax.node(cur).level_index);
            std::reverse(oracle.begin(), oracle.end());
            CHECK(tax.leaf_path(leaf) == oracle);
        }
    }
}

TEST_CASE("leaf_path is mutually consistent with is_child") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Taxonomy tax = pad_to_uniform_depth(random_raw_tree(rng, 50, 4));
        for (int i = 0; i < tax.level_size(tax.depth() - 1); ++i) {
            const auto path = tax.leaf_path(tax.node_at(tax.depth() - 1, i));
            CHECK(tax.path_consistent(path));
        }
    }
}

TEST_CASE("canonical serialization round-trips") {
    const Taxonomy tax = parse_taxonomy(kFigTree);
    const std::string canon = serialize_taxonomy(tax);
    const Taxonomy again = parse_taxonomy(canon);
    CHECK(serialize_taxonomy(again) == canon);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Taxonomy t = pad_to_uniform_depth(random_raw_tree(rng, 40, 3));
        const std::string c = serialize_taxonomy(t);
        CHECK(serialize_taxonomy(parse_taxonomy(c)) == c);
    }
}

TEST_CASE("comments and blank lines are ignored") {
    const Taxonomy tax = parse_taxonomy(
        "# header comment\n"
        "depth=1 pad=false  # trailing\n"
        "\n"
        "ROOT > A # edge\n");
    CHECK(tax.level_size(0) == 1);
}
