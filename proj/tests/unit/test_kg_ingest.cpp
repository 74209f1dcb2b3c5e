#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "doctest.h"
#include "json.hpp"

#include "absrl/errors.hpp"
#include "absrl/kg_ingest.hpp"
#include "oracles.hpp"
#include "properties.hpp"

#include "httplib.h"

using namespace absrl;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConceptNetOptions fast_options() {
  ConceptNetOptions o;
  o.min_interval = std::chrono::milliseconds(0);
  o.backoff_base = std::chrono::milliseconds(10);
  return o;
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("absrl_kg_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Local ConceptNet stand-in. Serves the recorded fixtures, plus a few
// scripted failure modes keyed by the start concept.
class FakeConceptNet {
 public:
  FakeConceptNet() {
    server_.Get("/query", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string start = req.get_param_value("start");
      int seen;
      {
        std::lock_guard lock(mutex_);
        seen = ++hits_[start];
      }
      const std::string ok_body = R"({"edges":[{"end":{"label":"thing"},"weight":2.0}]})";
      if (start == "/c/en/flaky") {
        if (seen <= 2) return void(res.status = 500);
        return res.set_content(ok_body, "application/json");
      }
      if (start == "/c/en/limited") {
        if (seen == 1) {
          res.status = 429;
          res.set_header("Retry-After", "1");
          return;
        }
        return res.set_content(ok_body, "application/json");
      }
      if (start == "/c/en/broken") return void(res.status = 503);
      if (start == "/c/en/teapot") return void(res.status = 418);
      const auto path = testing::fixture("conceptnet") / fixture_name(req.target);
      if (!fs::exists(path)) return void(res.status = 404);
      res.set_content(read_file(path), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeConceptNet() {
    server_.stop();
    thread_.join();
  }

  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  int hits(const std::string& concept_path) {
    std::lock_guard lock(mutex_);
    return hits_[concept_path];
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::mutex mutex_;
  std::map<std::string, int> hits_;
};

}  // namespace

TEST_CASE("entity lists") {
  std::stringstream in("# comment\napple\n\n  Pear \napple\n");
  const auto list = EntityList::load(in);
  CHECK(list.entities() == std::vector<Symbol>{"apple", "pear"});
  CHECK(list.contains("pear"));
  std::stringstream empty("# nothing\n\n");
  CHECK_THROWS_AS(EntityList::load(empty), EmptyInput);
  CHECK_THROWS_AS(EntityList::load(fs::path("/nonexistent/list.txt")), FileUnreadable);
}

TEST_CASE("chain file parsing") {
  const auto list = EntityList::from_names({"apple", "pear", "kiwi"});
  std::stringstream in(
      "apple\tfruit\tentity\n"
      "banana\tfruit\tentity\n"
      "pear\tfruit\tentity\n"
      "apple\tfood\tentity\n");
  const auto parsed = parse_chain_file(in, list);
  REQUIRE(parsed.chains.size() == 3);
  CHECK(parsed.chains[0].first == Symbol("apple"));
  CHECK(parsed.chains[0].second == Chain{"fruit", "entity"});
  CHECK(parsed.chains[2].second.empty());
  CHECK(parsed.missing == std::vector<Symbol>{"kiwi"});

  std::stringstream lone("apple\n");
  CHECK_THROWS_AS(parse_chain_file(lone, list), MalformedLine);
  std::stringstream hole("apple\t\tentity\n");
  CHECK_THROWS_AS(parse_chain_file(hole, list), MalformedLine);
  CHECK_THROWS_AS(parse_chain_file(fs::path("/nonexistent/chains.tsv"), list), FileUnreadable);
}

TEST_CASE("tree statistics") {
  const auto fruit_list = EntityList::load(testing::fixture("fruit_entities.txt"));
  const auto fruit = ClassTree::from_chains(parse_chain_file(testing::fixture("fruit_chains.tsv"), fruit_list).chains);
  const auto s = tree_stats(fruit, fruit_list);
  CHECK(s.missing_count == 0);
  CHECK(s.total_entities == 2);
  CHECK(s.layer_count == 2);
  CHECK(s.layer_sizes == std::vector<std::size_t>{1, 1});

  const auto list = EntityList::from_names({"apple", "pear", "kiwi"});
  std::stringstream in("apple\tfruit\tentity\npear\tfruit\tentity\n");
  const auto tree = ClassTree::from_chains(parse_chain_file(in, list).chains);
  const auto t = tree_stats(tree, list);
  CHECK(t.missing_count == 1);
  CHECK(t.missing == std::vector<Symbol>{"kiwi"});
}

TEST_CASE("fixture names hash the request target") {
  std::ifstream in(testing::fixture("conceptnet/index.json"));
  const auto index = nlohmann::json::parse(in);
  REQUIRE(index.size() == 7);
  for (const auto& [file, target] : index.items()) CHECK(fixture_name(target.get<std::string>()) == file);
}

TEST_CASE("query targets") {
  ConceptNetClient client([](const std::string&) { return HttpResponse{}; });
  CHECK(client.query_target("airplane") == "/query?start=/c/en/airplane&rel=/r/IsA&limit=1000");
  CHECK(client.query_target("Heavier-than-air Craft") ==
        "/query?start=/c/en/heavier-than-air_craft&rel=/r/IsA&limit=1000");
  CHECK(client.query_target("a/b&c") == "/query?start=/c/en/a%2Fb%26c&rel=/r/IsA&limit=1000");
}

TEST_CASE("IsA filters") {
  CHECK(word_count("  a large   vehicle for flying ") == 5);
  CHECK(word_count("") == 0);
  const auto edges =
      parse_isa_response(read_file(testing::fixture("conceptnet") / fixture_name("/query?start=/c/en/airplane&rel=/r/IsA&limit=1000")));
  CHECK(edges.size() == 4);
  CHECK(filter_isa(edges, 1.0, 3) == SymbolSet{"heavier-than-air craft", "aircraft", "fixed-wing aircraft"});
  // Raising the weight threshold never grows the set.
  SymbolSet previous = filter_isa(edges, 0.0, 3);
  for (double w = 0.0; w <= 4.0; w += 0.25) {
    const auto current = filter_isa(edges, w, 3);
    CHECK(std::includes(previous.begin(), previous.end(), current.begin(), current.end()));
    previous = current;
  }
  CHECK_THROWS_AS(parse_isa_response("{}"), MalformedResponse);
  CHECK_THROWS_AS(parse_isa_response("not json"), MalformedResponse);
  CHECK_THROWS_AS(parse_isa_response(R"({"edges":[{"end":{"label":"x"}}]})"), MalformedResponse);
}

TEST_CASE("two-level fetch from replay fixtures") {
  ConceptNetClient client(make_replay_transport(testing::fixture("conceptnet")), fast_options());
  const auto airplane = client.fetch("airplane");
  REQUIRE(airplane.size() == 2);
  CHECK(airplane[0] == SymbolSet{"heavier-than-air craft", "aircraft", "fixed-wing aircraft"});
  CHECK(airplane[1] == SymbolSet{"vehicle", "craft"});
  // a IsA b, b IsA a: the cycle contributes nothing new at level 2.
  const auto cyclic = client.fetch("a");
  CHECK(cyclic[0] == SymbolSet{"b"});
  CHECK(cyclic[1].empty());
  CHECK(client.fetch("blorb")[0].empty());
  CHECK_THROWS_AS(client.isa_edges("ghost"), HttpError);
}

TEST_CASE("class sets match the hand-filtered fixture") {
  const auto r = testing::check_kg_ingestion(testing::fixture(""), std::nullopt);
  for (const auto& n : r.notes) MESSAGE(n);
  CHECK(r.pass);
}

TEST_CASE("live transport retries and honours rate limits") {
  FakeConceptNet server;
  ConceptNetClient client(make_http_transport(server.endpoint()), fast_options());

  auto t0 = std::chrono::steady_clock::now();
  CHECK(client.superclasses("flaky") == SymbolSet{"thing"});
  const auto flaky_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  CHECK(server.hits("/c/en/flaky") == 3);
  CHECK(flaky_ms >= 30);  // 10 ms then 20 ms of backoff

  t0 = std::chrono::steady_clock::now();
  CHECK(client.superclasses("limited") == SymbolSet{"thing"});
  const auto limited_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
  CHECK(server.hits("/c/en/limited") == 2);
  CHECK(limited_ms >= 1000);

  CHECK_THROWS_AS(client.isa_edges("broken"), HttpError);
  CHECK(server.hits("/c/en/broken") == 5);
  CHECK_THROWS_AS(client.isa_edges("teapot"), HttpError);
  CHECK(server.hits("/c/en/teapot") == 1);

  // Cached: no second request.
  CHECK(client.superclasses("flaky") == SymbolSet{"thing"});
  CHECK(server.hits("/c/en/flaky") == 3);

  ConceptNetClient dead(make_http_transport("http://127.0.0.1:1"), fast_options());
  CHECK_THROWS_AS(dead.isa_edges("airplane"), HttpError);
}

TEST_CASE("recorded responses replay to the same class sets") {
  FakeConceptNet server;
  const auto record = scratch_dir("record");
  auto options = fast_options();
  options.record_dir = record;
  const auto entities = EntityList::from_names({"airplane", "a", "blorb", "ghost"});

  ConceptNetClient live(make_http_transport(server.endpoint()), options);
  const auto from_live = build_class_sets(live, entities);
  ConceptNetClient replay(make_replay_transport(record), fast_options());
  const auto from_replay = build_class_sets(replay, entities);

  CHECK(from_live.sets == from_replay.sets);
  CHECK(from_live.missing == from_replay.missing);
  CHECK(from_live.sets.at("airplane")[1] == SymbolSet{"vehicle", "craft"});
  CHECK(from_live.sets.at("ghost") == std::vector<SymbolSet>{{"entity"}, {"entity"}});

  std::stringstream tsv;
  write_class_sets_tsv(from_live, tsv);
  CHECK(tsv.str().find("airplane\t2\tvehicle\n") != std::string::npos);
  fs::remove_all(record);
}
