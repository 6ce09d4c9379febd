#ifndef HYOLO_TAXONOMY_HPP
#define HYOLO_TAXONOMY_HPP

#include <string>
#include <utility>
#include <vector>

#include "hyolo/errors.hpp"

namespace hyolo {

class CycleDetected : public DataError { public: using DataError::DataError; };
class MultipleRoots : public DataError { public: using DataError::DataError; };
class SelfParent : public DataError { public: using DataError::DataError; };
class DuplicateNode : public DataError { public: using DataError::DataError; };
class RaggedDepthWithoutPadding : public DataError { public: using DataError::DataError; };
class DepthMismatch : public DataError { public: using DataError::DataError; };
class TaxonomyParseError : public DataError { public: using DataError::DataError; };
class UnknownNode : public DataError { public: using DataError::DataError; };
class RootHasNoAncestorSet : public DataError { public: using DataError::DataError; };
class NotALeaf : public DataError { public: using DataError::DataError; };
class LevelOutOfRange : public LogicError { public: using LogicError::LogicError; };
class IndexOutOfRange : public LogicError { public: using LogicError::LogicError; };

/// Strict ancestors plus the node itself, root excluded. Stored sorted.
struct AncestorSet {
    std::vector<int> members;

    bool contains(int id) const;
    std::size_t size() const { return members.size(); }
};

struct TaxonomyNode {
    std::string name;
    int parent = -1;      // -1 only for the root
    int depth = 0;        // root is 0
    int level_index = -1; // dense index within its level; -1 for the root
};

/// Taxonomy file contents before validation: the header directives plus the
/// edge list in file order.
struct RawTaxonomy {
    int declared_depth = 0;
    bool pad = false;
    std::vector<std::pair<std::string, std::string>> edges; // (parent, child)
};

/// Validated rooted tree of classes with uniform leaf depth and per-level
/// dense class indexing. Immutable after construction; safe for concurrent
/// reads.
class Taxonomy {
public:
    int depth() const { return depth_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int root() const { return root_; }
    int level_size(int level) const;

    const TaxonomyNode& node(int id) const;
    bool has_node(const std::string& name) const;
    int find(const std::string& name) const; // throws UnknownNode
    int node_at(int level, int index) const; // node id from (level, dense index)

    AncestorSet ancestors(int id) const;
    bool is_child(int level, int class_at_level, int parent_class_at_prev_level) const;
    std::vector<int> leaf_path(int leaf_id) const;
    int leaf_at_path(const std::vector<int>& path) const;

    /// True iff `path[l]` is a valid dense index at level l for every l and
    /// consecutive entries satisfy the child relation.
    bool path_consistent(const std::vector<int>& path) const;

private:
    friend Taxonomy build_taxonomy(const RawTaxonomy& raw);

    int depth_ = 0;
    int root_ = 0;
    std::vector<TaxonomyNode> nodes_;
    std::vector<std::vector<int>> levels_;          // level -> node ids in index order
    std::vector<std::vector<std::vector<bool>>> child_mask_; // [level>=1][parent][class]
};

RawTaxonomy parse_raw_taxonomy(const std::string& text);
Taxonomy build_taxonomy(const RawTaxonomy& raw);
Taxonomy parse_taxonomy(const std::string& text);
Taxonomy pad_to_uniform_depth(RawTaxonomy raw);

/// Canonical form: header, then edges sorted by (child level, parent index,
/// child index). parse -> serialize -> parse is the identity on this form.
std::string serialize_taxonomy(const Taxonomy& tax);

} // namespace hyolo

#endif
