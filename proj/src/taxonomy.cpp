#include "hyolo/taxonomy.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <unordered_map>

namespace hyolo {

namespace {

const std::string kRootName = "ROOT";

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

bool AncestorSet::contains(int id) const {
    return std::binary_search(members.begin(), members.end(), id);
}

int Taxonomy::level_size(int level) const {
    if (level < 0 || level >= depth_)
        throw LevelOutOfRange("level " + std::to_string(level) + " outside [0, " +
                              std::to_string(depth_) + ")");
    return static_cast<int>(levels_[level].size());
}

const TaxonomyNode& Taxonomy::node(int id) const {
    if (id < 0 || id >= node_count())
        throw IndexOutOfRange("node id " + std::to_string(id));
    return nodes_[id];
}

bool Taxonomy::has_node(const std::string& name) const {
    for (const auto& n : nodes_)
        if (n.name == name) return true;
    return false;
}

int Taxonomy::find(const std::string& name) const {
    for (int i = 0; i < node_count(); ++i)
        if (nodes_[i].name == name) return i;
    throw UnknownNode("unknown node '" + name + "'");
}

int Taxonomy::node_at(int level, int index) const {
    if (level < 0 || level >= depth_)
        throw LevelOutOfRange("level " + std::to_string(level));
    if (index < 0 || index >= level_size(level))
        throw IndexOutOfRange("index " + std::to_string(index) + " at level " +
                              std::to_string(level));
    return levels_[level][index];
}

AncestorSet Taxonomy::ancestors(int id) const {
    node(id); // validates the id
    if (id == root_)
        throw RootHasNoAncestorSet("ancestor set of the root is undefined");
    AncestorSet out;
    int cur = id;
    while (cur != root_) {
        out.members.push_back(cur);
        cur = nodes_[cur].parent;
    }
    std::sort(out.members.begin(), out.members.end());
    return out;
}

bool Taxonomy::is_child(int level, int class_at_level, int parent_class_at_prev_level) const {
    if (level < 1 || level >= depth_)
        throw LevelOutOfRange("child test needs level in [1, depth); got " +
                              std::to_string(level));
    if (class_at_level < 0 || class_at_level >= level_size(level))
        throw IndexOutOfRange("class index " + std::to_string(class_at_level));
    if (parent_class_at_prev_level < 0 || parent_class_at_prev_level >= level_size(level - 1))
        throw IndexOutOfRange("parent index " + std::to_string(parent_class_at_prev_level));
    return child_mask_[level][parent_class_at_prev_level][class_at_level];
}

std::vector<int> Taxonomy::leaf_path(int leaf_id) const {
    const TaxonomyNode& leaf = node(leaf_id);
    if (leaf.depth != depth_)
        throw NotALeaf("'" + leaf.name + "' is at depth " + std::to_string(leaf.depth) +
                       ", not a depth-" + std::to_string(depth_) + " leaf");
    std::vector<int> path(depth_);
    int cur = leaf_id;
    for (int l = depth_ - 1; l >= 0; --l) {
        path[l] = nodes_[cur].level_index;
        cur = nodes_[cur].parent;
    }
    return path;
}

int Taxonomy::leaf_at_path(const std::vector<int>& path) const {
    if (static_cast<int>(path.size()) != depth_)
        throw IndexOutOfRange("path length != depth");
    if (!path_consistent(path))
        throw IndexOutOfRange("path violates the child relation");
    return node_at(depth_ - 1, path[depth_ - 1]);
}

bool Taxonomy::path_consistent(const std::vector<int>& path) const {
    if (static_cast<int>(path.size()) != depth_) return false;
    for (int l = 0; l < depth_; ++l)
        if (path[l] < 0 || path[l] >= level_size(l)) return false;
    for (int l = 1; l < depth_; ++l)
        if (!is_child(l, path[l], path[l - 1])) return false;
    return true;
}

RawTaxonomy parse_raw_taxonomy(const std::string& text) {
    RawTaxonomy raw;
    std::istringstream in(text);
    std::string line;
    bool header_seen = false;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (!header_seen) {
            std::istringstream hs(line);
            std::string tok;
            bool got_depth = false, got_pad = false;
            while (hs >> tok) {
                if (tok.rfind("depth=", 0) == 0) {
                    try {
                        raw.declared_depth = std::stoi(tok.substr(6));
                    } catch (...) {
                        throw TaxonomyParseError("line " + std::to_string(lineno) +
                                                 ": bad depth value '" + tok + "'");
                    }
                    got_depth = true;
                } else if (tok.rfind("pad=", 0) == 0) {
                    const std::string v = tok.substr(4);
                    if (v == "true") raw.pad = true;
                    else if (v == "false") raw.pad = false;
                    else
                        throw TaxonomyParseError("line " + std::to_string(lineno) +
                                                 ": pad must be true or false");
                    got_pad = true;
                } else {
                    throw TaxonomyParseError("line " + std::to_string(lineno) +
                                             ": unknown header token '" + tok + "'");
                }
            }
            if (!got_depth || !got_pad)
                throw TaxonomyParseError("header must be 'depth=<L> pad=<true|false>'");
            if (raw.declared_depth < 1)
                throw TaxonomyParseError("depth must be >= 1");
            header_seen = true;
            continue;
        }
        std::size_t sep = line.find('>');
        if (sep == std::string::npos)
            throw TaxonomyParseError("line " + std::to_string(lineno) +
                                     ": expected '<parent> > <child>'");
        std::string parent = trim(line.substr(0, sep));
        std::string child = trim(line.substr(sep + 1));
        if (parent.empty() || child.empty())
            throw TaxonomyParseError("line " + std::to_string(lineno) + ": empty node name");
        raw.edges.emplace_back(std::move(parent), std::move(child));
    }
    if (!header_seen) throw TaxonomyParseError("missing header line");
    if (raw.edges.empty()) throw TaxonomyParseError("no edges");
    return raw;
}

namespace {

struct Builder {
    std::vector<std::string> names;
    std::unordered_map<std::string, int> id_of;
    std::vector<std::vector<int>> children;       // may hold duplicates until validated
    std::vector<std::vector<int>> parents_multi;  // all parent edges per node
    std::vector<int> parent;                      // resolved single parent

    int intern(const std::string& name) {
        auto it = id_of.find(name);
        if (it != id_of.end()) return it->second;
        int id = static_cast<int>(names.size());
        id_of.emplace(name, id);
        names.push_back(name);
        children.emplace_back();
        parents_multi.emplace_back();
        parent.push_back(-2);
        return id;
    }
};

// DFS from the root over child edges of the raw multigraph; reaching a gray
// node closes a cycle. Runs before the single-parent check so that inputs
// containing both defects report the cycle, which is the structural one.
void detect_cycles(const Builder& b, int root) {
    std::vector<int> color(b.names.size(), 0); // 0 white, 1 gray, 2 black
    std::vector<std::pair<int, std::size_t>> stack;
    stack.emplace_back(root, 0);
    color[root] = 1;
    while (!stack.empty()) {
        auto& [u, next] = stack.back();
        if (next < b.children[u].size()) {
            int v = b.children[u][next++];
            if (color[v] == 1)
                throw CycleDetected("cycle through '" + b.names[v] + "' and '" +
                                    b.names[u] + "'");
            if (color[v] == 0) {
                color[v] = 1;
                stack.emplace_back(v, 0);
            }
        } else {
            color[u] = 2;
            stack.pop_back();
        }
    }
    // Anything unreachable has a parent (parentless nodes were rejected as
    // extra roots), so it can only sit on a detached cycle.
    for (std::size_t i = 0; i < b.names.size(); ++i)
        if (color[i] == 0)
            throw CycleDetected("node '" + b.names[i] + "' is unreachable from the root "
                                "(detached cycle)");
}

} // namespace

Taxonomy build_taxonomy(const RawTaxonomy& raw) {
    Builder b;
    int root = b.intern(kRootName);

    std::vector<int> child_order; // ids in first-mention-as-child order
    for (const auto& [pname, cname] : raw.edges) {
        if (pname == cname)
            throw SelfParent("node '" + cname + "' listed as its own parent");
        if (cname == kRootName)
            throw TaxonomyParseError("'" + kRootName + "' cannot appear as a child");
        int p = b.intern(pname);
        int c = b.intern(cname);
        if (b.parents_multi[c].empty()) child_order.push_back(c);
        b.parents_multi[c].push_back(p);
        b.children[p].push_back(c);
    }

    for (std::size_t i = 0; i < b.names.size(); ++i)
        if (static_cast<int>(i) != root && b.parents_multi[i].empty())
            throw MultipleRoots("node '" + b.names[i] + "' has no parent; only '" +
                                kRootName + "' may be a root");

    detect_cycles(b, root);

    for (std::size_t i = 0; i < b.names.size(); ++i) {
        if (static_cast<int>(i) == root) {
            b.parent[i] = -1;
            continue;
        }
        const auto& ps = b.parents_multi[i];
        if (ps.size() > 1) {
            if (ps[0] == ps[1])
                throw DuplicateNode("edge '" + b.names[ps[0]] + " > " + b.names[i] +
                                    "' repeated");
            throw DuplicateNode("node '" + b.names[i] + "' has parents '" +
                                b.names[ps[0]] + "' and '" + b.names[ps[1]] + "'");
        }
        b.parent[i] = ps[0];
    }

    // Depths. Edges may appear in any order, so compute by walking parents.
    std::vector<int> depth(b.names.size(), -1);
    depth[root] = 0;
    for (std::size_t i = 0; i < b.names.size(); ++i) {
        std::vector<int> chain;
        int cur = static_cast<int>(i);
        while (depth[cur] < 0) {
            chain.push_back(cur);
            cur = b.parent[cur];
        }
        for (auto it = chain.rbegin(); it != chain.rend(); ++it)
            depth[*it] = depth[b.parent[*it]] + 1;
    }

    const int L = raw.declared_depth;
    for (std::size_t i = 0; i < b.names.size(); ++i)
        if (depth[i] > L)
            throw DepthMismatch("node '" + b.names[i] + "' at depth " +
                                std::to_string(depth[i]) + " exceeds declared depth " +
                                std::to_string(L));

    // Leaf padding: repeat each short leaf downward with generation suffixes.
    std::vector<std::string> ragged;
    for (std::size_t i = 0; i < b.names.size(); ++i) {
        if (!b.children[i].empty() || static_cast<int>(i) == root) continue;
        if (depth[i] == L) continue;
        ragged.push_back(b.names[i]);
        if (!raw.pad) continue;
        int cur = static_cast<int>(i);
        int gen = 0;
        while (depth[cur] < L) {
            ++gen;
            std::string padded = b.names[i] + "~" + std::to_string(gen);
            if (b.id_of.count(padded))
                throw DuplicateNode("padding name '" + padded + "' already exists");
            int c = b.intern(padded);
            b.parent[c] = cur;
            b.children[cur].push_back(c);
            depth.push_back(depth[cur] + 1);
            child_order.push_back(c);
            cur = c;
        }
    }
    if (!raw.pad && !ragged.empty()) {
        std::string msg = "leaves short of depth " + std::to_string(L) + ":";
        for (const auto& n : ragged) msg += " '" + n + "'";
        throw RaggedDepthWithoutPadding(msg);
    }

    Taxonomy tax;
    tax.depth_ = L;
    tax.root_ = root;
    tax.nodes_.resize(b.names.size());
    for (std::size_t i = 0; i < b.names.size(); ++i) {
        tax.nodes_[i].name = b.names[i];
        tax.nodes_[i].parent = b.parent[i];
        tax.nodes_[i].depth = depth[i];
    }

    // Dense indices per level, assigned in file (first-mention) order.
    tax.levels_.assign(L, {});
    for (int id : child_order) {
        int l = depth[id] - 1;
        tax.nodes_[id].level_index = static_cast<int>(tax.levels_[l].size());
        tax.levels_[l].push_back(id);
    }

    tax.child_mask_.resize(L);
    for (int l = 1; l < L; ++l) {
        const int np = static_cast<int>(tax.levels_[l - 1].size());
        const int nc = static_cast<int>(tax.levels_[l].size());
        tax.child_mask_[l].assign(np, std::vector<bool>(nc, false));
        for (int c = 0; c < nc; ++c) {
            int id = tax.levels_[l][c];
            int p = tax.nodes_[id].parent;
            tax.child_mask_[l][tax.nodes_[p].level_index][c] = true;
        }
    }
    return tax;
}

Taxonomy parse_taxonomy(const std::string& text) {
    return build_taxonomy(parse_raw_taxonomy(text));
}

Taxonomy pad_to_uniform_depth(RawTaxonomy raw) {
    raw.pad = true;
    return build_taxonomy(raw);
}

std::string serialize_taxonomy(const Taxonomy& tax) {
    // Canonical ranks are built top-down: each level is ordered by the
    // parent's canonical position, tie-broken by the node's own index. This
    // makes the ordering a fixed point of parse -> serialize.
    std::ostringstream out;
    out << "depth=" << tax.depth() << " pad=false\n";
    std::vector<int> rank(tax.node_count(), 0); // canonical position within its level
    for (int l = 0; l < tax.depth(); ++l) {
        std::vector<std::pair<std::pair<int, int>, int>> order; // ((parent rank, index), id)
        for (int c = 0; c < tax.level_size(l); ++c) {
            const int id = tax.node_at(l, c);
            const int p = tax.node(id).parent;
            order.push_back({{l == 0 ? 0 : rank[p], c}, id});
        }
        std::sort(order.begin(), order.end());
        for (std::size_t pos = 0; pos < order.size(); ++pos) {
            const int id = order[pos].second;
            rank[id] = static_cast<int>(pos);
            out << tax.node(tax.node(id).parent).name << " > " << tax.node(id).name << "\n";
        }
    }
    return out.str();
}

} // namespace hyolo
