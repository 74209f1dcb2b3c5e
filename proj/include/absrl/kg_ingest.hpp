#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "absrl/class_tree.hpp"
#include "absrl/symbol.hpp"

namespace absrl {

/// Ordered, de-duplicated list of object names.
class EntityList {
 public:
  /// Throws EmptyInput when nothing survives normalization.
  static EntityList from_names(const std::vector<std::string>& names);
  /// One name per line; blank lines and lines starting with '#' are skipped.
  static EntityList load(std::istream& in);
  static EntityList load(const std::filesystem::path& path);

  const std::vector<Symbol>& entities() const { return entities_; }
  std::size_t size() const { return entities_.size(); }
  bool contains(const Symbol& s) const;

 private:
  std::vector<Symbol> entities_;
};

struct ChainFile {
  ChainList chains;             // one entry per listed entity, in list order
  std::vector<Symbol> missing;  // listed entities without a line in the file
};

/// Reads `entity<TAB>class1<TAB>...<TAB>root` lines. Lines for entities not
/// in `entities` are ignored; for repeated entities the first line wins.
/// Throws MalformedLine or FileUnreadable.
ChainFile parse_chain_file(std::istream& in, const EntityList& entities);
ChainFile parse_chain_file(const std::filesystem::path& path, const EntityList& entities);

struct TreeStats {
  std::size_t missing_count = 0;
  std::vector<Symbol> missing;
  std::size_t total_entities = 0;
  std::size_t layer_count = 0;            // tree height; the object level is not counted
  std::vector<std::size_t> layer_sizes;   // node count at depths 0..layer_count-1
};

/// An entity counts as missing when it is absent from the tree or hangs
/// directly below the root.
TreeStats tree_stats(const ClassTree& tree, const EntityList& entities);

struct HttpResponse {
  int status = 0;  // 0 for a transport failure
  std::string body;
  std::optional<double> retry_after_seconds;
};

/// Performs a GET for a request target ("/query?...") and returns the response.
using HttpTransport = std::function<HttpResponse(const std::string& target)>;

/// Live transport for `endpoint` ("http://host[:port]" or https when built
/// with OpenSSL). A trailing path on the endpoint is prefixed to every target.
HttpTransport make_http_transport(const std::string& endpoint,
                                  std::chrono::seconds timeout = std::chrono::seconds(20));

/// Reads `<dir>/<hash>.json` for each target; a missing file is a 404.
HttpTransport make_replay_transport(const std::filesystem::path& dir);

/// File name used for a request target in a fixture directory.
std::string fixture_name(std::string_view target);

struct ConceptNetOptions {
  std::size_t limit = 1000;
  double min_weight = 1.0;
  std::size_t max_words = 3;
  std::size_t max_attempts = 5;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::milliseconds min_interval{1000};  // between live requests
  std::size_t parallelism = 4;
  // Responses are written here as fixtures when set.
  std::optional<std::filesystem::path> record_dir;
  Symbol root = Symbol("entity");
};

/// One IsA edge as returned by the API.
struct IsAEdge {
  std::string label;
  double weight = 0.0;
};

/// ConceptNet IsA client with a shared response cache. Thread safe.
class ConceptNetClient {
 public:
  ConceptNetClient(HttpTransport transport, ConceptNetOptions options = {});

  const ConceptNetOptions& options() const { return options_; }

  /// Request target for the IsA edges of `name`.
  std::string query_target(const Symbol& name) const;

  /// Raw IsA edges of `name`. Retries transport failures and 5xx with
  /// exponential backoff and waits out 429 responses; throws HttpError once
  /// attempts are exhausted or on other statuses, MalformedResponse on a
  /// body that is not an edge list.
  std::vector<IsAEdge> isa_edges(const Symbol& name);

  /// Superclasses that pass the weight and word-count filters.
  SymbolSet superclasses(const Symbol& name);

  /// Level 1: filtered superclasses of `object`. Level 2: union of the
  /// filtered superclasses of level-1 members, minus anything already seen.
  /// Empty sets mean the object is missing.
  std::vector<SymbolSet> fetch(const Symbol& object, std::size_t max_depth = 2);

  std::size_t requests() const;

 private:
  HttpResponse get(const std::string& target);
  void throttle();

  HttpTransport transport_;
  ConceptNetOptions options_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, std::vector<IsAEdge>> cache_;
  std::chrono::steady_clock::time_point next_slot_{};
  std::size_t requests_ = 0;
};

/// Counts whitespace-separated tokens.
std::size_t word_count(std::string_view label);

/// Keeps edges with weight >= min_weight and at most max_words words.
SymbolSet filter_isa(const std::vector<IsAEdge>& edges, double min_weight, std::size_t max_words);

/// Parses a ConceptNet query response. Throws MalformedResponse.
std::vector<IsAEdge> parse_isa_response(std::string_view body);

struct ClassSetHierarchy {
  std::size_t levels = 2;
  // sets[object][k] is the level-(k+1) class set; never empty.
  std::map<Symbol, std::vector<SymbolSet>> sets;
  std::vector<Symbol> missing;

  AbstractionHierarchy to_hierarchy() const { return AbstractionHierarchy::from_class_sets(sets); }
};

/// Fetches every entity (up to options().parallelism at once). Objects with
/// no usable superclass, or whose requests fail, are recorded as missing and
/// map to {root} at every level; an empty upper level also falls back to {root}.
ClassSetHierarchy build_class_sets(ConceptNetClient& client, const EntityList& entities);

/// `object<TAB>level<TAB>class` rows, one per set member.
void write_class_sets_tsv(const ClassSetHierarchy& hierarchy, std::ostream& out);

}  // namespace absrl
