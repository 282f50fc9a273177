#include <gtest/gtest.h>

#include <random>

#include "ebtree/baselines.hpp"
#include "ebtree/errors.hpp"
#include "ebtree/tree.hpp"
#include "support.hpp"

using namespace ebtree;
using fixture::check_invariants;
using fixture::entries;
using fixture::entry;
using fixture::ids;

namespace {

std::shared_ptr<MemoryNodeStore> new_store() { return std::make_shared<MemoryNodeStore>(); }

Node internal_with_sizes(std::vector<std::uint64_t> sizes) {
    Node n;
    n.leaf = false;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        n.digests.push_back(entry(100 + i).digest);
        n.blocks.push_back(BlockRef{100 + i});
    }
    n.children.resize(sizes.size());
    n.child_digests.resize(sizes.size());
    n.child_counts.resize(sizes.size(), 1);
    n.sizes = std::move(sizes);
    update_attributes(n);
    return n;
}

std::vector<std::uint64_t> children_ids(const Tree& tree, const Node& n) {
    std::vector<std::uint64_t> out;
    for (auto c : n.children) {
        const Node child = *tree.store()->get(c);
        for (auto b : child.blocks) out.push_back(b.id);
        out.push_back(0);  // separator
    }
    return out;
}

Node root_of(const Tree& t) { return *t.store()->get(t.root()); }

std::vector<std::uint64_t> block_ids(const Node& n) {
    std::vector<std::uint64_t> out;
    for (auto b : n.blocks) out.push_back(b.id);
    return out;
}

}  // namespace

TEST(Route, SpecExamples) {
    const Node n = internal_with_sizes({2, 3, 2});
    EXPECT_EQ(route(n, 3), (Route{Route::Kind::kBlock, 0, 0}));
    EXPECT_EQ(route(n, 5), (Route{Route::Kind::kChild, 1, 2}));
    EXPECT_EQ(route(n, 9), (Route{Route::Kind::kChild, 2, 2}));
    EXPECT_EQ(route(n, 1), (Route{Route::Kind::kChild, 0, 1}));
    EXPECT_EQ(route(n, 7), (Route{Route::Kind::kBlock, 1, 0}));
    EXPECT_THROW(route(n, 0), RangeError);
    EXPECT_THROW(route(n, 10), RangeError);
}

TEST(Route, LeafAndInsertRouting) {
    Node leaf;
    leaf.digests = {entry(1).digest, entry(2).digest};
    leaf.blocks = {BlockRef{1}, BlockRef{2}};
    update_attributes(leaf);
    EXPECT_EQ(route(leaf, 2), (Route{Route::Kind::kBlock, 1, 0}));
    EXPECT_THROW(route(leaf, 3), RangeError);

    const Node n = internal_with_sizes({2, 3, 2});
    // Insert at rank 3 lands at the end of child 0; rank 10 at the end of child 2.
    EXPECT_EQ(route_for_insert(n, 3), (Route{Route::Kind::kChild, 0, 3}));
    EXPECT_EQ(route_for_insert(n, 4), (Route{Route::Kind::kChild, 1, 1}));
    EXPECT_EQ(route_for_insert(n, 10), (Route{Route::Kind::kChild, 2, 3}));
    EXPECT_THROW(route_for_insert(n, 11), RangeError);
    EXPECT_THROW(route_for_insert(n, 0), RangeError);
}

TEST(Tree, RejectsDegreeBelowTwo) { EXPECT_THROW(Tree(new_store(), 1), ConfigError); }

TEST(Tree, EmptyTree) {
    const Tree t(new_store(), 2);
    EXPECT_TRUE(t.empty());
    EXPECT_EQ(t.root_digest(), baselines::empty_tree_digest());
    EXPECT_THROW(t.get(1), RangeError);
    EXPECT_THROW(t.erase(1), RangeError);
    EXPECT_THROW(t.sibling_path(1), RangeError);
    EXPECT_THROW(t.insert(2, entry(1)), RangeError);
    EXPECT_EQ(check_invariants(t), std::nullopt);
}

TEST(Tree, SingletonGetAndErase) {
    const Tree t = Tree(new_store(), 2).insert(1, entry(1));
    EXPECT_EQ(t.size(), 1u);
    EXPECT_EQ(t.get(1), entry(1));
    EXPECT_THROW(t.get(0), RangeError);
    const Tree e = t.erase(1);
    EXPECT_TRUE(e.empty());
    EXPECT_EQ(e.root_digest(), baselines::empty_tree_digest());
}

TEST(Tree, NineBlockAppendFixture) {
    Tree t(new_store(), 2);
    for (std::uint64_t i = 1; i <= 9; ++i) t = t.insert(i, entry(i));
    EXPECT_EQ(t.get(4), entry(4));
    EXPECT_EQ(ids(t), (std::vector<std::uint64_t>{1, 2, 3, 4, 5, 6, 7, 8, 9}));
    EXPECT_EQ(check_invariants(t), std::nullopt);
    // Independent oracle: separate append-only B-tree over the same serialization.
    EXPECT_EQ(t.root_digest().hex(), "3d34f1eb6cd97ee1d31c9006ec85e6ab7ce05fbab93734b982f488ca04cfa32f");
}

TEST(Tree, InsertSplitsFullRoot) {
    Tree t(new_store(), 2);
    for (std::uint64_t i = 1; i <= 3; ++i) t = t.insert(i, entry(i));
    t = t.insert(4, entry(4));
    const Node root = root_of(t);
    EXPECT_EQ(block_ids(root), (std::vector<std::uint64_t>{2}));
    EXPECT_EQ(children_ids(t, root), (std::vector<std::uint64_t>{1, 0, 3, 4, 0}));
}

TEST(Tree, InsertReroutesOntoPromotedMedian) {
    // t=2, full root [1,2,3]; inserting at rank 2 must put the new block before 2.
    Tree t(new_store(), 2);
    for (std::uint64_t i = 1; i <= 3; ++i) t = t.insert(i, entry(i));
    t = t.insert(2, entry(99));
    EXPECT_EQ(ids(t), (std::vector<std::uint64_t>{1, 99, 2, 3}));
    EXPECT_EQ(check_invariants(t), std::nullopt);
}

TEST(Tree, DeleteFromLeftmostLeafRotatesLeft) {
    Tree t(new_store(), 2);
    for (std::uint64_t i = 1; i <= 4; ++i) t = t.insert(i, entry(i));
    ASSERT_EQ(block_ids(root_of(t)), (std::vector<std::uint64_t>{2}));
    const Tree d = t.erase(1);
    EXPECT_EQ(ids(d), (std::vector<std::uint64_t>{2, 3, 4}));
    EXPECT_EQ(block_ids(root_of(d)), (std::vector<std::uint64_t>{3}));
    EXPECT_EQ(children_ids(d, root_of(d)), (std::vector<std::uint64_t>{2, 0, 4, 0}));
    EXPECT_EQ(check_invariants(d), std::nullopt);
}

TEST(Tree, RootCollapsesAfterMerge) {
    Tree t(new_store(), 2);
    for (std::uint64_t i = 1; i <= 4; ++i) t = t.insert(i, entry(i));
    t = t.erase(4);  // root [2] over [1],[3]
    ASSERT_EQ(t.height(), 1u);
    t = t.erase(1);  // merge collapses the root
    EXPECT_EQ(t.height(), 0u);
    EXPECT_EQ(ids(t), (std::vector<std::uint64_t>{2, 3}));
    EXPECT_EQ(check_invariants(t), std::nullopt);
}

TEST(Tree, DeleteInternalBlockUsesPredecessorSuccessorOrMerge) {
    for (unsigned deg : {2u, 3u}) {
        const auto base = Tree::build(new_store(), deg, entries(60));
        std::vector<std::uint64_t> want;
        for (std::uint64_t i = 1; i <= 60; ++i) want.push_back(i);
        // Every block held by an internal node.
        const Node root = root_of(base);
        std::uint64_t left = 0;
        for (std::size_t i = 0; i < root.count(); ++i) {
            left += root.sizes[i];
            const std::uint64_t rank = left + 1;
            const Tree d = base.erase(rank);
            auto expect = want;
            expect.erase(expect.begin() + static_cast<std::ptrdiff_t>(rank - 1));
            EXPECT_EQ(ids(d), expect);
            EXPECT_EQ(check_invariants(d), std::nullopt);
            left += 1;
        }
    }
}

TEST(Tree, UpdateFixture) {
    const Tree t = Tree::build(new_store(), 2, entries(9));
    const Tree u = t.update(4, entry(44));
    for (std::uint64_t i = 1; i <= 9; ++i) EXPECT_EQ(u.get(i), i == 4 ? entry(44) : entry(i));
    EXPECT_NE(u.root_digest(), t.root_digest());
    EXPECT_EQ(u.update(4, entry(4)).root_digest(), t.root_digest());
    EXPECT_EQ(t.update(7, entry(7)).root_digest(), t.root_digest());
    EXPECT_THROW(t.update(10, entry(1)), RangeError);
    EXPECT_EQ(u.size(), t.size());
    EXPECT_EQ(u.height(), t.height());
}

TEST(Tree, SingletonUpdate) {
    const Tree t = Tree(new_store(), 2).insert(1, entry(1));
    const Tree u = t.update(1, entry(2));
    EXPECT_EQ(u.get(1), entry(2));
    EXPECT_NE(u.root_digest(), t.root_digest());
}

TEST(Split, LeafChildAtTwo) {
    Node parent;
    parent.leaf = false;
    parent.children = {NodeRef{1}};
    parent.sizes = {3};
    parent.child_digests = {Digest32{}};
    parent.child_counts = {3};
    Node child;
    for (std::uint64_t i : {1, 2, 3}) {
        child.digests.push_back(entry(i).digest);
        child.blocks.push_back(BlockRef{i});
    }
    update_attributes(child);
    update_attributes(parent);
    const std::uint64_t before = parent.total;
    Node right = split_child(parent, 0, child, 2);
    EXPECT_EQ(block_ids(parent), (std::vector<std::uint64_t>{2}));
    EXPECT_EQ(block_ids(child), (std::vector<std::uint64_t>{1}));
    EXPECT_EQ(block_ids(right), (std::vector<std::uint64_t>{3}));
    EXPECT_EQ(parent.sizes, (std::vector<std::uint64_t>{1, 1}));
    update_attributes(parent);
    EXPECT_EQ(parent.total, before);
}

TEST(Split, InternalChildAtThree) {
    // Build a t=3 tree, pick a full internal node and split it under a fresh parent.
    auto store = new_store();
    Node full;
    bool found = false;
    for (std::uint64_t n = 30; n < 400 && !found; ++n) {
        const Tree t = Tree::build(store, 3, entries(n));
        std::vector<NodeRef> stack{t.root()};
        while (!stack.empty() && !found) {
            const Node node = *store->get(stack.back());
            stack.pop_back();
            if (!node.leaf && node.count() == 5) {
                full = node;
                found = true;
            }
            for (auto c : node.children) stack.push_back(c);
        }
    }
    ASSERT_TRUE(found);
    Node parent;
    parent.leaf = false;
    parent.children = {NodeRef{999}};
    parent.sizes = {full.total};
    parent.child_digests = {full.digest};
    parent.child_counts = {5};
    update_attributes(parent);
    const std::uint64_t before = parent.total;
    Node right = split_child(parent, 0, full, 3);
    EXPECT_EQ(full.count(), 2u);
    EXPECT_EQ(full.children.size(), 3u);
    EXPECT_EQ(right.count(), 2u);
    EXPECT_EQ(right.children.size(), 3u);
    // Parent sizes equal the halves' true recursive counts.
    auto recount = [&](const Node& n) {
        std::uint64_t s = n.count();
        for (auto c : n.children) s += store->get(c)->total;
        return s;
    };
    EXPECT_EQ(parent.sizes[0], recount(full));
    EXPECT_EQ(parent.sizes[1], recount(right));
    update_attributes(parent);
    EXPECT_EQ(parent.total, before);
}

TEST(Split, RejectsNonFullChild) {
    Node parent;
    parent.leaf = false;
    parent.children = {NodeRef{1}};
    parent.sizes = {2};
    parent.child_digests = {Digest32{}};
    parent.child_counts = {2};
    Node child;
    for (std::uint64_t i : {1, 2}) {
        child.digests.push_back(entry(i).digest);
        child.blocks.push_back(BlockRef{i});
    }
    update_attributes(child);
    EXPECT_THROW(split_child(parent, 0, child, 2), ContractViolation);
}

namespace {

// Parent with one block `sep` between two stored leaves.
struct TwoLeaves {
    std::shared_ptr<MemoryNodeStore> store = new_store();
    Node parent;
    Node left, right;

    TwoLeaves(std::vector<std::uint64_t> l, std::uint64_t sep, std::vector<std::uint64_t> r) {
        auto mk = [](const std::vector<std::uint64_t>& v) {
            Node n;
            for (auto i : v) {
                n.digests.push_back(entry(i).digest);
                n.blocks.push_back(BlockRef{i});
            }
            update_attributes(n);
            return n;
        };
        left = mk(l);
        right = mk(r);
        parent.leaf = false;
        parent.digests = {entry(sep).digest};
        parent.blocks = {BlockRef{sep}};
        parent.children = {store->put(left), store->put(right)};
        parent.sizes = {left.total, right.total};
        parent.child_digests = {left.digest, right.digest};
        parent.child_counts = {static_cast<std::uint32_t>(left.count()), static_cast<std::uint32_t>(right.count())};
        update_attributes(parent);
    }
};

}  // namespace

TEST(FillChild, MergeWhenNeitherSiblingCanLend) {
    TwoLeaves f({1}, 2, {3});
    Node child = f.right;
    const std::uint64_t before = f.parent.total;
    const std::size_t idx = fill_child(f.parent, 1, child, 2, *f.store);
    EXPECT_EQ(idx, 0u);
    EXPECT_EQ(block_ids(child), (std::vector<std::uint64_t>{1, 2, 3}));
    EXPECT_EQ(f.parent.count(), 0u);
    EXPECT_EQ(f.parent.sizes, (std::vector<std::uint64_t>{3}));
    update_attributes(f.parent);
    EXPECT_EQ(f.parent.total, before);
}

TEST(FillChild, RotateRightFromLeftSibling) {
    TwoLeaves f({1, 2}, 3, {4});
    Node child = f.right;
    const std::uint64_t before = f.parent.total;
    const std::size_t idx = fill_child(f.parent, 1, child, 2, *f.store);
    EXPECT_EQ(idx, 1u);
    EXPECT_EQ(block_ids(f.parent), (std::vector<std::uint64_t>{2}));
    EXPECT_EQ(block_ids(child), (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(block_ids(*f.store->get(f.parent.children[0])), (std::vector<std::uint64_t>{1}));
    update_attributes(f.parent);
    EXPECT_EQ(f.parent.total, before);
}

TEST(FillChild, RotateLeftFromRightSibling) {
    TwoLeaves f({1}, 2, {3, 4});
    Node child = f.left;
    const std::size_t idx = fill_child(f.parent, 0, child, 2, *f.store);
    EXPECT_EQ(idx, 0u);
    EXPECT_EQ(block_ids(child), (std::vector<std::uint64_t>{1, 2}));
    EXPECT_EQ(block_ids(f.parent), (std::vector<std::uint64_t>{3}));
    EXPECT_EQ(block_ids(*f.store->get(f.parent.children[1])), (std::vector<std::uint64_t>{4}));
}

TEST(FillChild, MergeRightForLeftmostChild) {
    TwoLeaves f({1}, 2, {3});
    Node child = f.left;
    EXPECT_EQ(fill_child(f.parent, 0, child, 2, *f.store), 0u);
    EXPECT_EQ(block_ids(child), (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(FillChild, RejectsChildAboveMinimum) {
    TwoLeaves f({1, 2}, 3, {4, 5});
    Node child = f.right;
    EXPECT_THROW(fill_child(f.parent, 1, child, 2, *f.store), ContractViolation);
}

TEST(UpdateAttributes, LeafDigestAndDeterminism) {
    Node n;
    n.digests = {entry(1).digest, entry(2).digest};
    n.blocks = {BlockRef{1}, BlockRef{2}};
    update_attributes(n);
    EXPECT_EQ(n.digest, sha256(authcodec::serialize_node(n)));
    const Digest32 first = n.digest;
    update_attributes(n);
    EXPECT_EQ(n.digest, first);
    EXPECT_EQ(n.total, 2u);
}

TEST(Build, MatchesIndependentAppendOracle) {
    const std::vector<std::tuple<std::uint64_t, unsigned, std::string>> cases = {
        {2, 2, "1d7de90d919ae0bc876cdca48982ef27eddf3ed8ad2d218db4c92dab2bd7d1a7"},
        {9, 2, "3d34f1eb6cd97ee1d31c9006ec85e6ab7ce05fbab93734b982f488ca04cfa32f"},
        {100, 3, "beb4a6347f6de818af19236fa0e1ba6da0d99ca830ad19def2638821c580d413"},
        {656, 8, "5cb6e7eb2f5e18173f0aca27427c05b5d69109eafdaa76d9d2d78bd82a0849be"},
        {1000, 8, "67cf7224860ee72db07dc4781f1de99b9d95be0f9ab29bfd708e239ce168f058"},
    };
    for (const auto& [n, t, hex] : cases) {
        const auto es = entries(n);
        EXPECT_EQ(Tree::build(new_store(), t, es).root_digest().hex(), hex) << n << "/" << t;
        std::vector<Digest32> ds;
        for (const auto& e : es) ds.push_back(e.digest);
        EXPECT_EQ(baselines::naive_root_oracle(ds, t).hex(), hex) << n << "/" << t;
    }
}

TEST(Build, EqualsSequentialAppends) {
    for (unsigned t : {2u, 3u, 8u}) {
        auto store = new_store();
        Tree seq(store, t);
        for (std::uint64_t i = 1; i <= 500; ++i) {
            seq = seq.insert(i, entry(i));
            if (i % 37 == 0 || i < 20) {
                const Tree built = Tree::build(store, t, entries(i));
                ASSERT_EQ(built.root_digest(), seq.root_digest()) << "t=" << t << " n=" << i;
            }
        }
        EXPECT_EQ(check_invariants(Tree::build(store, t, entries(500))), std::nullopt);
    }
}

class ArrayOracle : public ::testing::TestWithParam<unsigned> {};

TEST_P(ArrayOracle, RandomOperationsMatchVector) {
    const unsigned t = GetParam();
    std::mt19937_64 rng(1000 + t);
    auto store = new_store();
    Tree tree(store, t);
    std::vector<std::uint64_t> oracle;
    std::uint64_t next = 1;
    for (int step = 0; step < 3000; ++step) {
        const int op = oracle.empty() ? 0 : static_cast<int>(rng() % 3);
        if (op == 0) {
            const std::uint64_t p = 1 + rng() % (oracle.size() + 1);
            tree = tree.insert(p, entry(next));
            oracle.insert(oracle.begin() + static_cast<std::ptrdiff_t>(p - 1), next++);
        } else if (op == 1) {
            const std::uint64_t p = 1 + rng() % oracle.size();
            tree = tree.erase(p);
            oracle.erase(oracle.begin() + static_cast<std::ptrdiff_t>(p - 1));
        } else {
            const std::uint64_t p = 1 + rng() % oracle.size();
            tree = tree.update(p, entry(next));
            oracle[p - 1] = next++;
        }
        ASSERT_EQ(ids(tree), oracle) << "step " << step;
        ASSERT_EQ(check_invariants(tree), std::nullopt) << "step " << step;
        ASSERT_EQ(baselines::full_rehash_root(*store, tree.root()), tree.root_digest()) << "step " << step;
    }
}

INSTANTIATE_TEST_SUITE_P(Degrees, ArrayOracle, ::testing::Values(2u, 3u, 8u));

TEST(Tree, ThousandRandomInsertsDegreeThree) {
    std::mt19937_64 rng(3);
    Tree tree(new_store(), 3);
    std::vector<std::uint64_t> oracle;
    for (std::uint64_t i = 1; i <= 1000; ++i) {
        const std::uint64_t p = 1 + rng() % (oracle.size() + 1);
        tree = tree.insert(p, entry(i));
        oracle.insert(oracle.begin() + static_cast<std::ptrdiff_t>(p - 1), i);
    }
    EXPECT_EQ(ids(tree), oracle);
    EXPECT_EQ(check_invariants(tree), std::nullopt);
}

TEST(Tree, InterleavedFiveThousandAtDegreeTwo) {
    std::mt19937_64 rng(5);
    Tree tree(new_store(), 2);
    std::vector<std::uint64_t> oracle;
    for (std::uint64_t i = 1; i <= 5000; ++i) {
        if (!oracle.empty() && rng() % 5 < 2) {
            const std::uint64_t p = 1 + rng() % oracle.size();
            tree = tree.erase(p);
            oracle.erase(oracle.begin() + static_cast<std::ptrdiff_t>(p - 1));
        } else {
            const std::uint64_t p = 1 + rng() % (oracle.size() + 1);
            tree = tree.insert(p, entry(i));
            oracle.insert(oracle.begin() + static_cast<std::ptrdiff_t>(p - 1), i);
        }
        ASSERT_EQ(check_invariants(tree), std::nullopt) << i;
    }
    EXPECT_EQ(ids(tree), oracle);
}

TEST(Tree, DrainToEmpty) {
    for (unsigned t : {2u, 3u, 8u}) {
        std::mt19937_64 rng(t);
        Tree tree = Tree::build(new_store(), t, entries(300));
        while (!tree.empty()) {
            tree = tree.erase(1 + rng() % tree.size());
            ASSERT_EQ(check_invariants(tree), std::nullopt);
        }
        EXPECT_EQ(tree.root_digest(), baselines::empty_tree_digest());
    }
}

TEST(Tree, DuplicatePayloadsAllowed) {
    Tree tree(new_store(), 2);
    for (int i = 0; i < 20; ++i) tree = tree.insert(1, entry(7));
    EXPECT_EQ(tree.size(), 20u);
    EXPECT_EQ(check_invariants(tree), std::nullopt);
}

TEST(Persistence, OldVersionsAreByteIdentical) {
    std::mt19937_64 rng(9);
    auto store = new_store();
    std::vector<std::pair<Tree, std::map<std::uint64_t, Bytes>>> history;
    Tree tree = Tree::build(store, 3, entries(200));
    for (int step = 0; step < 300; ++step) {
        history.emplace_back(tree, fixture::snapshot(tree));
        const auto p = 1 + rng() % tree.size();
        switch (rng() % 3) {
            case 0: tree = tree.insert(p, entry(1000 + step)); break;
            case 1: tree = tree.erase(p); break;
            default: tree = tree.update(p, entry(1000 + step)); break;
        }
    }
    for (const auto& [old, snap] : history) {
        EXPECT_EQ(fixture::snapshot(old), snap);
        EXPECT_EQ(baselines::full_rehash_root(*store, old.root()), old.root_digest());
    }
}

TEST(Persistence, MutationSharesUntouchedSubtrees) {
    auto store = new_store();
    const Tree t = Tree::build(store, 8, entries(5000));
    const auto before = store->node_count();
    (void)t.update(2500, entry(1));
    EXPECT_EQ(store->node_count() - before, t.height() + 1);
    const auto mid = store->node_count();
    (void)t.insert(2500, entry(1));
    EXPECT_LE(store->node_count() - mid, 3 * (t.height() + 2));
}

TEST(Complexity, NodeVisitsWithinTwiceHeightPlusOne) {
    std::mt19937_64 rng(21);
    for (unsigned t : {2u, 3u, 8u}) {
        auto store = new_store();
        Tree tree = Tree::build(store, t, entries(4000));
        for (int i = 0; i < 500; ++i) {
            const unsigned h = tree.height();
            const std::uint64_t p = 1 + rng() % tree.size();
            const auto r0 = store->reads();
            Tree next = (i % 3 == 0) ? tree.insert(p, entry(9000 + i)) : (i % 3 == 1) ? tree.erase(p) : tree.update(p, entry(1));
            const auto visits = store->reads() - r0;
            ASSERT_LE(visits, 2u * (h + 1)) << "t=" << t << " op " << i % 3;
            tree = next;
        }
    }
}
