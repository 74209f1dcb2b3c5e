#include "absrl/kg_ingest.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "absrl/errors.hpp"
#include "absrl/symbol_store.hpp"

#include "httplib.h"
#include "json.hpp"

namespace absrl {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool skippable(const std::string& line) {
  const auto first = line.find_first_not_of(" \t");
  return first == std::string::npos || line[first] == '#';
}

// Lower-cased ConceptNet concept path segment: spaces become underscores and
// anything outside the unreserved set is percent-encoded.
std::string concept_segment(const std::string& name) {
  std::string out;
  for (unsigned char c : name) {
    if (c == ' ') {
      out += '_';
    } else if (c < 0x80 && (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~')) {
      out += static_cast<char>(c);
    } else {
      char buf[4];
      std::snprintf(buf, sizeof(buf), "%%%02X", c);
      out += buf;
    }
  }
  return out;
}

std::optional<double> parse_retry_after(const std::string& value) {
  if (value.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double seconds = std::stod(value, &used);
    if (used == value.size() && seconds >= 0.0) return seconds;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace

EntityList EntityList::from_names(const std::vector<std::string>& names) {
  EntityList list;
  std::set<Symbol> seen;
  for (const auto& name : names) {
    if (normalize_symbol(name).empty()) continue;
    Symbol s(name);
    if (seen.insert(s).second) list.entities_.push_back(std::move(s));
  }
  if (list.entities_.empty()) throw EmptyInput("entity list is empty");
  return list;
}

EntityList EntityList::load(std::istream& in) {
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_cr(line);
    if (!skippable(line)) names.push_back(line);
  }
  return from_names(names);
}

EntityList EntityList::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable("cannot open entity list " + path.string());
  return load(in);
}

bool EntityList::contains(const Symbol& s) const {
  return std::find(entities_.begin(), entities_.end(), s) != entities_.end();
}

ChainFile parse_chain_file(std::istream& in, const EntityList& entities) {
  std::map<Symbol, Chain> found;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (skippable(line)) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2) {
      throw MalformedLine("line " + std::to_string(line_no) + ": expected an entity and at least a root");
    }
    Chain chain;
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (normalize_symbol(fields[k]).empty()) {
        throw MalformedLine("line " + std::to_string(line_no) + ": empty field " + std::to_string(k + 1));
      }
      if (k > 0) chain.emplace_back(fields[k]);
    }
    found.try_emplace(Symbol(fields[0]), std::move(chain));
  }
  if (in.bad()) throw FileUnreadable("read error in chain file");

  ChainFile out;
  for (const auto& e : entities.entities()) {
    auto it = found.find(e);
    if (it == found.end()) {
      out.chains.emplace_back(e, Chain{});
      out.missing.push_back(e);
    } else {
      out.chains.emplace_back(e, it->second);
    }
  }
  return out;
}

ChainFile parse_chain_file(const std::filesystem::path& path, const EntityList& entities) {
  std::ifstream in(path);
  if (!in) throw FileUnreadable("cannot open chain file " + path.string());
  return parse_chain_file(in, entities);
}

TreeStats tree_stats(const ClassTree& tree, const EntityList& entities) {
  TreeStats stats;
  stats.total_entities = entities.size();
  for (const auto& e : entities.entities()) {
    const bool matched = tree.contains(e) && tree.parent(e).has_value() && *tree.parent(e) != tree.root();
    if (!matched) stats.missing.push_back(e);
  }
  stats.missing_count = stats.missing.size();
  stats.layer_count = tree.height();
  auto sizes = tree.layer_sizes();
  sizes.resize(stats.layer_count);
  stats.layer_sizes = std::move(sizes);
  return stats;
}

HttpTransport make_http_transport(const std::string& endpoint, std::chrono::seconds timeout) {
  const auto scheme_end = endpoint.find("://");
  if (scheme_end == std::string::npos) throw HttpError("endpoint needs a scheme: " + endpoint);
  const std::string scheme = endpoint.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw HttpError("unsupported scheme " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw HttpError("https endpoints need a build with OpenSSL");
#endif
  const auto path_start = endpoint.find('/', scheme_end + 3);
  const std::string host = endpoint.substr(0, path_start);
  std::string prefix = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  return [host, prefix, timeout](const std::string& target) {
    httplib::Client client(host);
    client.set_follow_location(true);
    client.set_connection_timeout(static_cast<time_t>(timeout.count()));
    client.set_read_timeout(static_cast<time_t>(timeout.count()));
    HttpResponse out;
    auto res = client.Get(prefix + target);
    if (!res) return out;
    out.status = res->status;
    out.body = res->body;
    out.retry_after_seconds = parse_retry_after(res->get_header_value("Retry-After"));
    return out;
  };
}

std::string fixture_name(std::string_view target) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(target)));
  return std::string(hex) + ".json";
}

HttpTransport make_replay_transport(const std::filesystem::path& dir) {
  return [dir](const std::string& target) {
    HttpResponse out;
    std::ifstream in(dir / fixture_name(target), std::ios::binary);
    if (!in) {
      out.status = 404;
      return out;
    }
    std::ostringstream body;
    body << in.rdbuf();
    out.status = 200;
    out.body = body.str();
    return out;
  };
}

std::size_t word_count(std::string_view label) {
  std::size_t count = 0;
  bool in_word = false;
  for (unsigned char c : label) {
    const bool space = std::isspace(c) != 0;
    if (!space && !in_word) ++count;
    in_word = !space;
  }
  return count;
}

SymbolSet filter_isa(const std::vector<IsAEdge>& edges, double min_weight, std::size_t max_words) {
  SymbolSet out;
  for (const auto& e : edges) {
    if (e.weight < min_weight) continue;
    const std::size_t words = word_count(e.label);
    if (words == 0 || words > max_words) continue;
    out.insert(Symbol(e.label));
  }
  return out;
}

std::vector<IsAEdge> parse_isa_response(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw MalformedResponse("response is not a JSON object");
  const auto it = j.find("edges");
  if (it == j.end() || !it->is_array()) throw MalformedResponse("response has no edge list");
  std::vector<IsAEdge> edges;
  for (const auto& e : *it) {
    if (!e.is_object() || !e.contains("weight") || !e["weight"].is_number() || !e.contains("end") ||
        !e["end"].is_object() || !e["end"].contains("label") || !e["end"]["label"].is_string()) {
      throw MalformedResponse("edge without weight or end.label");
    }
    edges.push_back({e["end"]["label"].get<std::string>(), e["weight"].get<double>()});
  }
  return edges;
}

ConceptNetClient::ConceptNetClient(HttpTransport transport, ConceptNetOptions options)
    : transport_(std::move(transport)), options_(std::move(options)) {
  if (!transport_) throw HttpError("ConceptNetClient needs a transport");
  if (options_.max_attempts == 0) throw HttpError("max_attempts must be positive");
}

std::string ConceptNetClient::query_target(const Symbol& name) const {
  return "/query?start=/c/en/" + concept_segment(name.str()) + "&rel=/r/IsA&limit=" +
         std::to_string(options_.limit);
}

std::size_t ConceptNetClient::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

void ConceptNetClient::throttle() {
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    slot = std::max(std::chrono::steady_clock::now(), next_slot_);
    next_slot_ = slot + options_.min_interval;
    ++requests_;
  }
  std::this_thread::sleep_until(slot);
}

HttpResponse ConceptNetClient::get(const std::string& target) {
  throttle();
  return transport_(target);
}

std::vector<IsAEdge> ConceptNetClient::isa_edges(const Symbol& name) {
  const std::string target = query_target(name);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(target); it != cache_.end()) return it->second;
  }
  for (std::size_t attempt = 1;; ++attempt) {
    const HttpResponse res = get(target);
    const bool last = attempt >= options_.max_attempts;
    const auto backoff = options_.backoff_base * (1LL << std::min<std::size_t>(attempt - 1, 20));
    if (res.status == 200) {
      auto edges = parse_isa_response(res.body);
      if (options_.record_dir) {
        std::filesystem::create_directories(*options_.record_dir);
        std::ofstream out(*options_.record_dir / fixture_name(target), std::ios::binary);
        out << res.body;
      }
      std::lock_guard lock(mutex_);
      return cache_.emplace(target, std::move(edges)).first->second;
    }
    if (res.status == 429) {
      if (last) throw RateLimited("rate limited on " + target);
      if (res.retry_after_seconds) {
        std::this_thread::sleep_for(std::chrono::duration<double>(*res.retry_after_seconds));
      } else {
        std::this_thread::sleep_for(backoff);
      }
      continue;
    }
    if (res.status == 0 || res.status >= 500) {
      if (last) {
        throw HttpError("giving up on " + target + " after " + std::to_string(attempt) + " attempts");
      }
      std::this_thread::sleep_for(backoff);
      continue;
    }
    throw HttpError("HTTP " + std::to_string(res.status) + " for " + target);
  }
}

SymbolSet ConceptNetClient::superclasses(const Symbol& name) {
  return filter_isa(isa_edges(name), options_.min_weight, options_.max_words);
}

std::vector<SymbolSet> ConceptNetClient::fetch(const Symbol& object, std::size_t max_depth) {
  std::vector<SymbolSet> levels;
  SymbolSet visited{object};
  SymbolSet frontier{object};
  for (std::size_t depth = 0; depth < max_depth; ++depth) {
    SymbolSet next;
    for (const auto& c : frontier) {
      for (auto& s : superclasses(c)) {
        if (!visited.contains(s)) next.insert(s);
      }
    }
    visited.insert(next.begin(), next.end());
    levels.push_back(next);
    frontier = std::move(next);
  }
  return levels;
}

ClassSetHierarchy build_class_sets(ConceptNetClient& client, const EntityList& entities) {
  const auto& names = entities.entities();
  std::vector<std::optional<std::vector<SymbolSet>>> fetched(names.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    for (std::size_t i = next++; i < names.size(); i = next++) {
      try {
        fetched[i] = client.fetch(names[i]);
      } catch (const HttpError&) {
      } catch (const RateLimited&) {
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(client.options().parallelism, 1, names.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  ClassSetHierarchy out;
  const Symbol& root = client.options().root;
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<SymbolSet> sets = fetched[i].value_or(std::vector<SymbolSet>(out.levels));
    if (sets.empty() || sets.front().empty()) {
      out.missing.push_back(names[i]);
      sets.assign(out.levels, SymbolSet{root});
    }
    for (auto& s : sets) {
      if (s.empty()) s = {root};
    }
    out.sets.emplace(names[i], std::move(sets));
  }
  return out;
}

void write_class_sets_tsv(const ClassSetHierarchy& hierarchy, std::ostream& out) {
  for (const auto& [object, sets] : hierarchy.sets) {
    for (std::size_t k = 0; k < sets.size(); ++k) {
      for (const auto& c : sets[k]) out << object.str() << '\t' << (k + 1) << '\t' << c.str() << '\n';
    }
  }
}

}  // namespace absrl
