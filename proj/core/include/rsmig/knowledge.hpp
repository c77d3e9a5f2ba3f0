#pragma once

#include "rsmig/backend.hpp"
#include "rsmig/support/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace rsmig::knowledge {

namespace fs = std::filesystem;

class KnowledgeError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Lexical retrieval

/// Identifier subwords (split on case and underscores, lower-cased), words of
/// string literals, and numbers. Comments are skipped.
std::vector<std::string> tokenize_code(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct Bm25Doc {
    /// Tiebreak key (a path or pair id).
    std::string key;
    std::vector<std::string> tokens;
};

struct Ranked {
    size_t index = 0;  // into the candidate list
    std::string key;
    double score = 0;
};

/// Okapi BM25 with idf = ln(1 + (N - df + 0.5) / (df + 0.5)), summed over the
/// query tokens (repeats count), over the candidate corpus. Highest score
/// first, ties by key.
class Bm25Index {
public:
    explicit Bm25Index(std::vector<Bm25Doc> docs, Bm25Params params = {});
    std::vector<double> scores(const std::vector<std::string>& query) const;
    std::vector<Ranked> top_n(const std::vector<std::string>& query, size_t n) const;
    size_t size() const { return docs_.size(); }

private:
    std::vector<Bm25Doc> docs_;
    Bm25Params params_;
    /// term -> (doc, term frequency), docs ascending
    std::unordered_map<std::string, std::vector<std::pair<size_t, int>>> postings_;
    double avgdl_ = 0;
};

std::vector<Ranked> bm25_top_n(const std::vector<std::string>& query, std::vector<Bm25Doc> candidates, size_t n = 20,
                               Bm25Params params = {});

// ---------------------------------------------------------------------------
// Reranking

struct RerankItem {
    std::string key;
    std::string left;   // C side (or the query)
    std::string right;  // Rust side (or a stored C side)
};

class Reranker {
public:
    virtual ~Reranker() = default;
    /// One score per item, higher is better. Throws on failure.
    virtual std::vector<double> score(const std::vector<RerankItem>& items) = 0;
};

/// Jaccard overlap of identifier-subword sets plus 0.1 per shared string
/// literal longer than 5 characters (at most 0.5).
class OverlapReranker : public Reranker {
public:
    std::vector<double> score(const std::vector<RerankItem>& items) override;
};

double jaccard(const std::set<std::string>& a, const std::set<std::string>& b);
std::set<std::string> identifier_subword_set(std::string_view code);
std::set<std::string> long_string_literals(std::string_view code, size_t min_length = 6);

/// Asks a generation backend for a JSON array of scores, one per item.
class BackendReranker : public Reranker {
public:
    explicit BackendReranker(backend::Backend& backend) : backend_(backend) {}
    std::vector<double> score(const std::vector<RerankItem>& items) override;

private:
    backend::Backend& backend_;
};

/// Indices of the best `n` items, stable on equal scores. A failing reranker
/// leaves the input order.
std::vector<size_t> rerank_top_n(const std::vector<RerankItem>& items, size_t n, Reranker& reranker,
                                 std::vector<double>* scores_out = nullptr);

// ---------------------------------------------------------------------------
// Repository history

struct FileChange {
    std::string path;
    char status = 'M';  // A, D, M
    int added = 0;
    int deleted = 0;
};

struct Commit {
    std::string hash;
    std::string author_name;
    std::string author_email;
    std::int64_t time = 0;  // seconds since the epoch
    std::string message;
    std::vector<FileChange> changes;
};

/// Oldest first, renames split into delete + add. Throws KnowledgeError when
/// the directory has no readable history.
std::vector<Commit> read_history(const fs::path& repo);
/// Unified diff (no context lines) of one commit, optionally limited to paths.
std::string commit_patch(const fs::path& repo, const std::string& hash, const std::vector<std::string>& paths = {});
/// Content of `path` at `hash`; nullopt when it did not exist there.
std::optional<std::string> file_at(const fs::path& repo, const std::string& hash, const std::string& path);

// ---------------------------------------------------------------------------
// File-level mining

enum class Regime { General, CoEvolution };
const char* regime_name(Regime r);
Regime parse_regime(std::string_view s);

/// Evidence tags, one per mining heuristic.
namespace tag {
inline constexpr const char* kKeyword = "keyword";
inline constexpr const char* kBuildSwitch = "build-config-switch";
inline constexpr const char* kInterface = "interface-migration";
inline constexpr const char* kChurn = "churn-balance";
inline constexpr const char* kDeleteCreate = "delete-then-create";
inline constexpr const char* kCoupling = "evolutionary-coupling";
inline constexpr const char* kIdentity = "developer-identity";
inline constexpr const char* kColocation = "module-colocation";
inline constexpr const char* kTokenOverlap = "key-token-overlap";
inline constexpr const char* kLiterals = "shared-literals";
}  // namespace tag

/// Every tag, history heuristics first.
const std::vector<std::string>& all_tags();

struct MiningConfig {
    std::vector<std::string> keywords = {"rewrite", "port", "rewrote", "ported", "migrate", "migrated"};
    /// |deleted C - added Rust| / max(...) at or below this.
    double churn_ratio = 0.5;
    int delete_create_window_days = 365;
    int coupling_min_commits = 3;
    /// Commits touching the C file that count as its recent contributors.
    int identity_recent_commits = 10;
    size_t min_key_tokens = 3;
    size_t min_literal_length = 6;
    std::set<std::string> disabled;
};

struct FilePairCandidate {
    std::string c_path;
    std::string rust_path;
    std::set<std::string> evidence;
    /// Per heuristic: the measured quantity (churn ratio, shared token count,
    /// days between delete and create, co-change count, ...).
    std::map<std::string, double> scores;
    Regime regime = Regime::CoEvolution;
    /// Commit where each side was last seen; empty means the working tree.
    std::string c_commit;
    std::string rust_commit;
};

struct MiningReport {
    std::vector<FilePairCandidate> candidates;
    std::map<std::string, size_t> per_heuristic;
    bool history_available = false;
    std::vector<std::string> notes;
};

/// Union of all enabled heuristics (co-evolution), or the full C x Rust
/// product of the working tree tagged with whatever snapshot evidence holds
/// (general).
MiningReport get_file_candidates(const fs::path& repo, Regime regime, const MiningConfig& config = {});

// ---------------------------------------------------------------------------
// Pairs and rules

struct SourceFunction {
    std::string name;
    std::string text;
    int line = 0;
};

/// Top-level function definitions (Rust: including methods in impl blocks).
std::vector<SourceFunction> split_c_functions(std::string_view source);
std::vector<SourceFunction> split_rust_functions(std::string_view source);

struct AlignedFunctionPair {
    std::string id;  // digest of both sides
    std::string c_name;
    std::string c_source;
    std::string rust_name;
    std::string rust_source;
    std::string c_file;
    std::string rust_file;
    std::string repo;
    std::string commit;  // optional
    double score = 0;
    std::string origin = "mined";  // mined, accumulated
};

std::string pair_id(std::string_view c_source, std::string_view rust_source);

struct FilePair {
    std::string c_path;
    std::string c_text;
    std::string rust_path;
    std::string rust_text;
    std::string repo;
    std::string commit;
};

/// Cartesian function candidates reranked; the best five.
std::vector<AlignedFunctionPair> align_functions(const FilePair& files, Reranker& reranker, size_t n = 5);

struct ApiRule {
    std::string c_interface;
    std::string rust_interface;
    int support = 1;
    std::vector<std::string> provenance;  // pair ids

    std::string key() const { return c_interface + "\x1f" + rust_interface; }
};

struct FragmentRule {
    std::string c_idiom;
    std::string rust_idiom;
    std::string hint;
    int support = 1;
    std::vector<std::string> provenance;

    std::string key() const { return c_idiom + "\x1f" + rust_idiom; }
};

struct MinedRules {
    std::vector<ApiRule> api;
    std::vector<FragmentRule> fragments;
    bool empty() const { return api.empty() && fragments.empty(); }
};

class RuleExtractor {
public:
    virtual ~RuleExtractor() = default;
    virtual MinedRules extract(const AlignedFunctionPair& pair) = 0;
};

/// ApiRules from C and Rust callees matched by relative position in the two
/// bodies; FragmentRules from a fixed idiom catalog.
class DeterministicExtractor : public RuleExtractor {
public:
    explicit DeterministicExtractor(size_t token_budget = 24) : budget_(token_budget) {}
    MinedRules extract(const AlignedFunctionPair& pair) override;

private:
    size_t budget_;
};

/// Asks a backend for `{"api": [{"c", "rust"}], "fragments": [{"c", "rust", "hint"}]}`.
class BackendExtractor : public RuleExtractor {
public:
    explicit BackendExtractor(backend::Backend& backend, size_t token_budget = 24)
        : backend_(backend), budget_(token_budget) {}
    MinedRules extract(const AlignedFunctionPair& pair) override;

private:
    backend::Backend& backend_;
    size_t budget_;
};

/// Never throws: extractor failures yield no rules.
MinedRules mine_rules(const AlignedFunctionPair& pair, RuleExtractor& extractor);

/// Whitespace-separated token count used for idiom budgets.
size_t approx_tokens(std::string_view s);

/// Identifiers called in a body: `f(`, `x.f(`, `a::b(`, `m!(`.
std::vector<std::pair<std::string, double>> c_callees(std::string_view body);
std::vector<std::pair<std::string, double>> rust_callees(std::string_view body);

// ---------------------------------------------------------------------------
// Knowledge base

struct KnowledgeSnapshot {
    /// Distinct pairs (journal order, duplicates dropped).
    std::vector<AlignedFunctionPair> pairs;
    std::vector<ApiRule> api_rules;
    std::vector<FragmentRule> fragment_rules;
    /// Journal entries including duplicates.
    size_t journal_entries = 0;

    const AlignedFunctionPair* pair(std::string_view id) const;
};

struct Retrieved {
    std::vector<AlignedFunctionPair> examples;
    std::vector<double> scores;
    std::vector<ApiRule> api_rules;
    std::vector<FragmentRule> fragment_rules;
};

/// Top-k pairs by BM25 (top 20) then rerank against the query; rules whose
/// provenance meets a returned pair.
Retrieved retrieve(const KnowledgeSnapshot& kb, std::string_view query_c_source, std::string_view query_signature,
                   size_t k, Reranker& reranker);

/// `kb/pairs.jsonl` (append-only journal), `kb/api_rules.jsonl`,
/// `kb/fragment_rules.jsonl`, each starting with a format header line.
/// Readers share immutable snapshots; accumulation has a single writer.
class KnowledgeBase {
public:
    /// Opens (creating when absent) the KB rooted at `dir`.
    explicit KnowledgeBase(fs::path dir);
    /// In memory only.
    KnowledgeBase();

    std::shared_ptr<const KnowledgeSnapshot> snapshot() const;

    /// Appends pairs with their rules (support merged); used by mining.
    void insert(const std::vector<AlignedFunctionPair>& pairs, const std::vector<MinedRules>& rules);
    /// Appends one compilation-accepted pair and merges the rules mined from it.
    AlignedFunctionPair accumulate(const std::string& c_name, const std::string& c_source, const std::string& rust_name,
                                   const std::string& rust_source, RuleExtractor& extractor,
                                   const std::string& provenance = {});

    const fs::path& dir() const { return dir_; }

private:
    void persist_rules(const KnowledgeSnapshot& s) const;

    fs::path dir_;
    mutable std::mutex write_mu_;
    mutable std::mutex snap_mu_;
    std::shared_ptr<const KnowledgeSnapshot> snap_;
};

nlohmann::json to_json(const AlignedFunctionPair& p);
nlohmann::json to_json(const ApiRule& r);
nlohmann::json to_json(const FragmentRule& r);
nlohmann::json to_json(const FilePairCandidate& c);

struct MineOptions {
    Regime regime = Regime::CoEvolution;
    MiningConfig mining;
    size_t bm25_n = 20;
    size_t file_n = 5;
    size_t function_n = 5;
};

struct MineSummary {
    std::map<std::string, size_t> per_heuristic;
    size_t candidates = 0;
    size_t file_pairs = 0;
    size_t pairs = 0;
    size_t api_rules = 0;
    size_t fragment_rules = 0;
    std::vector<std::string> notes;
};

/// Offline construction over one repository: candidates, BM25 top-20 and
/// rerank top-5 per C file, function alignment, rule mining, insertion.
MineSummary mine_repository(const fs::path& repo, KnowledgeBase& kb, Reranker& reranker, RuleExtractor& extractor,
                            const MineOptions& options = {});

}  // namespace rsmig::knowledge
