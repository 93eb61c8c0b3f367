#include <doctest.h>

#include <atomic>
#include <fstream>
#include <random>

#include "rsvp/encoding.hpp"
#include "rsvp/errors.hpp"
#include "rsvp/mllm_client.hpp"
#include "stub_server.hpp"
#include "test_util.hpp"

using namespace rsvp;
using nlohmann::json;

namespace {

PromptBundle tiny_bundle() {
    PromptBundle b;
    b.system_text = "sys";
    b.user_text = "find the cup";
    b.images.push_back(Raster(4, 3, {1, 2, 3}));
    b.images.push_back(Raster(2, 2, {9, 9, 9}));
    return b;
}

class FlakyBackend final : public MllmBackend {
public:
    int failures_left = 0;
    int calls = 0;
    bool config_error = false;
    std::string id() const override { return "flaky"; }
    int max_parallelism() const override { return 1; }
    std::string complete(const PromptBundle&, double, std::string_view) override {
        ++calls;
        if (config_error) throw ConfigurationError("bad key");
        if (failures_left-- > 0) throw TransientBackendError("try again");
        return "ok";
    }
};

}  // namespace

TEST_CASE("parse a fenced answer") {
    const std::string reply =
        "Step 1: it is a drum.\n```json\n{\"object\": \"drum\", \"attributes\": [\"red\", \"round\"], "
        "\"ids_v\": [4, 5, 6], \"ids_h\": [5, 6, 7, 8], \"rationale\": \"hit with sticks\"}\n```\n";
    const auto r = parse_proposal(reply, GridSpec{});
    REQUIRE(r.ok());
    CHECK(r.proposal->object_name == "drum");
    CHECK(r.proposal->attributes == std::vector<std::string>{"red", "round"});
    CHECK(r.proposal->ids_v == std::vector<int>{4, 5, 6});
    CHECK(r.proposal->ids_h == std::vector<int>{5, 6, 7, 8});
    CHECK(r.proposal->rationale == "hit with sticks");
    CHECK_FALSE(r.proposal->absent);
    CHECK(r.warnings.empty());
    CHECK(target_text(*r.proposal) == "red round drum");
}

TEST_CASE("parse a bare object after prose containing braces") {
    const std::string reply =
        "Sets like {1,2} are not answers. {\"note\": 1} Final: {\"object_name\": \"cup\", \"ids_v\": [\"2\", 3.0], "
        "\"ids_h\": [1]}";
    const auto r = parse_proposal(reply, GridSpec{});
    REQUIRE(r.ok());
    CHECK(r.proposal->object_name == "cup");
    CHECK(r.proposal->ids_v == std::vector<int>{2, 3});
    CHECK(r.proposal->ids_h == std::vector<int>{1});
}

TEST_CASE("fenced block wins over earlier bare objects") {
    const std::string reply =
        "{\"object\": \"wrong\", \"ids_v\": [1], \"ids_h\": [1]}\n```json\n{\"object\": \"right\", \"ids_v\": [2], "
        "\"ids_h\": [2]}\n```";
    const auto r = parse_proposal(reply, GridSpec{});
    REQUIRE(r.ok());
    CHECK(r.proposal->object_name == "right");
}

TEST_CASE("out-of-range ids are clamped with warnings") {
    const auto r = parse_proposal("{\"object\": \"x\", \"ids_v\": [0, 3], \"ids_h\": [12]}", GridSpec{});
    REQUIRE(r.ok());
    CHECK(r.proposal->ids_v == std::vector<int>{1, 3});
    CHECK(r.proposal->ids_h == std::vector<int>{9});
    CHECK(r.warnings.size() == 2);
}

TEST_CASE("absence") {
    const auto r = parse_proposal(
        "```json\n{\"object\": \"unicorn\", \"ids_v\": [], \"ids_h\": [], \"rationale\": \"no such animal\"}\n```",
        GridSpec{});
    REQUIRE(r.ok());
    CHECK(r.proposal->absent);

    const auto bare = parse_proposal("{\"object\": \"unicorn\", \"ids_v\": [], \"ids_h\": []}", GridSpec{});
    CHECK_FALSE(bare.ok());
    CHECK_FALSE(bare.error.empty());
}

TEST_CASE("grid-style cells map to rows and columns") {
    GridSpec g;
    g.rows = 5;
    g.cols = 5;
    const auto r = parse_proposal("{\"object\": \"x\", \"cells\": [7, 8, 13], \"rationale\": \"r\"}", g);
    REQUIRE(r.ok());
    CHECK(r.proposal->ids_v == std::vector<int>{2, 3});
    CHECK(r.proposal->ids_h == std::vector<int>{2, 3});
    const auto none = parse_proposal("{\"object\": \"x\", \"cells\": [], \"rationale\": \"not there\"}", g);
    REQUIRE(none.ok());
    CHECK(none.proposal->absent);
}

TEST_CASE("parse failures") {
    const GridSpec g;
    for (const char* bad : {"", "no json here", "{\"object\": \"x\"}", "{\"ids_v\": [1], \"ids_h\": [1]}",
                            "{\"object\": \"x\", \"ids_v\": [\"a\"], \"ids_h\": [1]}",
                            "{\"object\": \"x\", \"ids_v\": 3, \"ids_h\": [1]}", "```json\n{broken\n```"}) {
        const auto r = parse_proposal(bad, g);
        CHECK_FALSE(r.ok());
        CHECK_FALSE(r.error.empty());
    }
}

TEST_CASE("parser never throws on noise") {
    std::mt19937_64 rng(99);
    const std::string alphabet = "{}[]\",:0123456789 objectids_vhrationale`json\n\\";
    for (int trial = 0; trial < 3000; ++trial) {
        std::string s(rng() % 300, ' ');
        for (auto& c : s) c = rng() % 8 == 0 ? static_cast<char>(rng() % 256) : alphabet[rng() % alphabet.size()];
        CHECK_NOTHROW(parse_proposal(s, GridSpec{}));
    }
    CHECK_NOTHROW(parse_proposal(std::string(20000, '{'), GridSpec{}));
}

TEST_CASE("serialize then parse round trips") {
    std::mt19937_64 rng(5);
    const GridSpec g;
    for (int trial = 0; trial < 200; ++trial) {
        RegionProposal p;
        p.object_name = "thing " + std::to_string(trial) + " \"quoted\" {braced}";
        if (trial % 3) p.attributes = {"a" + std::to_string(trial), "b"};
        p.rationale = "because\nreasons";
        if (trial % 7 != 0) {
            for (int i = 1 + static_cast<int>(rng() % 4); i > 0; --i) p.ids_v.push_back(1 + static_cast<int>(rng() % 9));
            for (int i = 1 + static_cast<int>(rng() % 4); i > 0; --i) p.ids_h.push_back(1 + static_cast<int>(rng() % 9));
        }
        p.absent = p.ids_v.empty() && p.ids_h.empty();
        const auto r = parse_proposal("Answer:\n```json\n" + serialize_proposal(p) + "\n```", g);
        REQUIRE(r.ok());
        CHECK(*r.proposal == p);
    }
}

TEST_CASE("scripted backend") {
    const auto dir = rsvp::test::scratch_dir("scripted");
    std::ofstream(dir / "s1.txt") << "reply one";
    ScriptedBackend b(dir);
    CHECK(b.complete(tiny_bundle(), 0.0, "s1") == "reply one");
    CHECK_THROWS_AS(b.complete(tiny_bundle(), 0.0, "missing"), BackendError);
    CHECK_THROWS_AS(ScriptedBackend(dir / "nope"), ConfigurationError);
}

TEST_CASE("retry policy") {
    FlakyBackend f;
    f.failures_left = 2;
    const RetryPolicy fast{3, std::chrono::milliseconds(1)};
    const auto r = query_backend(f, tiny_bundle(), 0.0, "s", fast);
    CHECK(r.text == "ok");
    CHECK(r.attempts == 3);

    FlakyBackend dead;
    dead.failures_left = 100;
    CHECK_THROWS_AS(query_backend(dead, tiny_bundle(), 0.0, "s", fast), BackendUnavailable);
    CHECK(dead.calls == 4);

    FlakyBackend bad_key;
    bad_key.config_error = true;
    CHECK_THROWS_AS(query_backend(bad_key, tiny_bundle(), 0.0, "s", fast), ConfigurationError);
    CHECK(bad_key.calls == 1);

    CHECK_THROWS_AS(query_backend(f, tiny_bundle(), 2.5, "s", fast), InvalidInput);
    CHECK_THROWS_AS(query_backend(f, tiny_bundle(), -0.1, "s", fast), InvalidInput);
}

TEST_CASE("chat request shape and response handling") {
    rsvp::test::StubServer stub;
    json captured;
    std::string auth;
    std::atomic<int> hits{0};
    stub.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        captured = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"hello"}}]})", "application/json");
    });
    stub.server.Post("/denied", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
    });
    stub.server.Post("/busy", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    stub.start();

    ChatCompletionsConfig cfg;
    cfg.base_url = stub.url();
    cfg.model = "test-model";
    cfg.api_key = "k123";
    cfg.timeout = std::chrono::milliseconds(5000);
    ChatCompletionsBackend chat(cfg);
    const auto bundle = tiny_bundle();
    CHECK(chat.complete(bundle, 0.3, "s") == "hello");
    CHECK(auth == "Bearer k123");
    CHECK(captured["model"] == "test-model");
    CHECK(captured["temperature"] == 0.3);
    REQUIRE(captured["messages"].size() == 2);
    CHECK(captured["messages"][0]["role"] == "system");
    CHECK(captured["messages"][0]["content"] == "sys");
    const auto& parts = captured["messages"][1]["content"];
    REQUIRE(parts.size() == 3);
    CHECK(parts[0]["type"] == "text");
    CHECK(parts[0]["text"] == "find the cup");
    for (int i = 1; i <= 2; ++i) {
        const std::string url = parts[i]["image_url"]["url"];
        const std::string prefix = "data:image/png;base64,";
        REQUIRE(url.rfind(prefix, 0) == 0);
        CHECK(decode_png(base64_decode(url.substr(prefix.size()))) == bundle.images[i - 1]);
    }

    hits = 0;
    cfg.path = "/denied";
    ChatCompletionsBackend denied(cfg);
    CHECK_THROWS_AS(query_backend(denied, bundle, 0.0, "s", {3, std::chrono::milliseconds(1)}), ConfigurationError);
    CHECK(hits == 1);

    hits = 0;
    cfg.path = "/busy";
    ChatCompletionsBackend busy(cfg);
    CHECK_THROWS_AS(query_backend(busy, bundle, 0.0, "s", {2, std::chrono::milliseconds(1)}), BackendUnavailable);
    CHECK(hits == 3);
}

TEST_CASE("unreachable chat endpoint exhausts retries") {
    ChatCompletionsConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.timeout = std::chrono::milliseconds(500);
    ChatCompletionsBackend chat(cfg);
    CHECK_THROWS_AS(query_backend(chat, tiny_bundle(), 0.0, "s", {2, std::chrono::milliseconds(1)}),
                    BackendUnavailable);
}

TEST_CASE("chat response parsing") {
    CHECK(ChatCompletionsBackend::parse_response(
              R"({"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]})") ==
          "ab");
    CHECK_THROWS_AS(ChatCompletionsBackend::parse_response("not json"), ProtocolError);
    CHECK_THROWS_AS(ChatCompletionsBackend::parse_response(R"({"choices":[]})"), ProtocolError);
    CHECK_THROWS_AS(ChatCompletionsBackend::parse_response(R"({"choices":[{"message":{}}]})"), ProtocolError);
}

TEST_CASE("request digest") {
    const auto a = tiny_bundle();
    auto b = tiny_bundle();
    CHECK(request_digest(a) == request_digest(b));
    CHECK(request_digest(a).size() == 64);
    b.images[1].set(0, 0, {0, 0, 0});
    CHECK(request_digest(a) != request_digest(b));
    b = tiny_bundle();
    b.user_text += " ";
    CHECK(request_digest(a) != request_digest(b));
}

TEST_CASE("transcripts round trip, including non-UTF-8 replies") {
    MllmTranscript t;
    t.sample_id = "s1";
    t.request_digest = "abc";
    t.backend_id = "scripted";
    t.temperature = 0.5;
    t.raw_response = std::string("bad \xff\xfe bytes\n", 13);
    t.parse_error = "no json";
    t.warnings = {"w"};
    t.attempts = 2;
    const auto j = transcript_to_json(t);
    CHECK(j.contains("raw_response_b64"));
    const auto back = transcript_from_json(json::parse(j.dump()));
    CHECK(back.raw_response == t.raw_response);
    CHECK(back.parse_error == "no json");
    CHECK(back.attempts == 2);

    RegionProposal p{"cup", {"blue"}, "why", {1, 2}, {3}, false};
    t.raw_response = "plain";
    t.parsed = p;
    const auto back2 = transcript_from_json(json::parse(transcript_to_json(t).dump()));
    CHECK(back2.raw_response == "plain");
    REQUIRE(back2.parsed.has_value());
    CHECK(*back2.parsed == p);

    const auto dir = rsvp::test::scratch_dir("transcripts");
    {
        TranscriptWriter w(dir / "t.jsonl");
        w.append(t);
        w.append(t);
    }
    std::ifstream in(dir / "t.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
        CHECK(transcript_from_json(json::parse(line)).sample_id == "s1");
        ++lines;
    }
    CHECK(lines == 2);
}
