// Remote embedder and HTTP providers against an in-process fake server.

#include "capecgen/llm_http.hpp"
#include "capecgen/remote_embedder.hpp"

#include <catch_amalgamated.hpp>

#include <atomic>
#include <functional>
#include <thread>

#include <stdlib.h>

using namespace capecgen;
using nlohmann::json;

namespace {

class FakeServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    FakeServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    void post(const std::string& path, Handler h) {
        server_.Post(path, [this, h](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            h(req, res);
        });
    }
    void get(const std::string& path, Handler h) { server_.Get(path, h); }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::atomic<int> hits{0};

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

EmbedderConfig remote(const std::string& url, std::size_t batch = 2) {
    EmbedderConfig c;
    c.kind = EmbedderConfig::Kind::Remote;
    c.endpoint = url;
    c.batch_size = batch;
    c.max_in_flight = 2;
    c.timeout_s = 5;
    c.max_attempts = 3;
    return c;
}

// Echoes each text's length as a 3-dim vector so order can be checked.
void embed_ok(const httplib::Request& req, httplib::Response& res) {
    auto j = json::parse(req.body);
    json vecs = json::array();
    for (const auto& t : j["texts"]) vecs.push_back({double(t.get<std::string>().size()), 1.0, 0.0});
    res.set_content(json{{"vectors", vecs}, {"dim", 3}, {"model_id", "fake-" + j["model"].get<std::string>()}}.dump(),
                    "application/json");
}

ProviderConfig provider(ProviderKind kind, const std::string& url) {
    ProviderConfig p;
    p.name = "fake";
    p.kind = kind;
    p.endpoint = url;
    p.model_id = "fake-model";
    p.credentials_env = "CAPECGEN_TEST_KEY";
    p.rate_limit_rpm = 60000;
    p.retry.backoff_base_s = 0.01;
    p.timeout_s = 5;
    return p;
}

RenderedPrompt prompt() { return render_prompt(PromptTemplate::default_template(), "CAPEC-1: x", "Python", 1); }

}  // namespace

TEST_CASE("remote embedder: batching preserves order") {
    FakeServer s;
    s.post("/embed", embed_ok);
    RemoteEmbedder e(remote(s.url()));
    std::vector<std::string> texts{"a", "bb", "ccc", "dddd", "eeeee"};
    auto out = e.embed(texts);
    REQUIRE(out.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) REQUIRE(out[i].values[0] == double(i + 1));
    REQUIRE(s.hits == 3);
    REQUIRE(e.model_id() == "fake-text");
}

TEST_CASE("remote embedder: endpoint prefix and code slot") {
    FakeServer s;
    s.post("/v2/embed", embed_ok);
    auto cfg = remote(s.url() + "/v2/");
    cfg.slot = ModelSlot::Code;
    RemoteEmbedder e(cfg);
    std::vector<std::string> texts{"x"};
    e.embed(texts);
    REQUIRE(e.model_id() == "fake-code");
}

TEST_CASE("remote embedder: retries transient failures") {
    FakeServer s;
    std::atomic<int> calls{0};
    s.post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 503;
            res.set_header("Retry-After", "0");
            return;
        }
        embed_ok(req, res);
    });
    RemoteEmbedder e(remote(s.url(), 8));
    e.backoff_base_s = 0.01;
    std::vector<std::string> texts{"a", "b"};
    REQUIRE(e.embed(texts).size() == 2);
    REQUIRE(calls == 2);
}

TEST_CASE("remote embedder: protocol violations") {
    FakeServer s;
    std::string reply;
    int status = 200;
    s.post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        res.status = status;
        res.set_content(reply, "application/json");
    });
    RemoteEmbedder e(remote(s.url(), 8));
    e.backoff_base_s = 0.01;
    std::vector<std::string> texts{"a", "b"};

    reply = R"({"vectors": [[1, 2]], "dim": 2})";
    REQUIRE_THROWS_WITH(e.embed(texts), Catch::Matchers::ContainsSubstring("batch [0, 2)"));
    reply = R"({"vectors": [[1, 2], [1]], "dim": 2})";
    REQUIRE_THROWS_AS(e.embed(texts), ProtocolError);
    reply = R"({"vectors": [[1, 2], [1, "x"]], "dim": 2})";
    REQUIRE_THROWS_AS(e.embed(texts), ProtocolError);
    reply = R"({"vectors": [[1, 2], [1, 2]]})";
    REQUIRE_THROWS_AS(e.embed(texts), ProtocolError);
    reply = "not json";
    REQUIRE_THROWS_AS(e.embed(texts), ProtocolError);

    status = 400;
    reply = R"({"error": "bad"})";
    int before = s.hits;
    REQUIRE_THROWS_AS(e.embed(texts), ProtocolError);
    REQUIRE(s.hits == before + 1);  // not retried

    status = 500;
    before = s.hits;
    try {
        e.embed(texts);
        FAIL("expected TransportError");
    } catch (const TransportError& err) {
        REQUIRE(err.attempts() == 3);
        REQUIRE(err.status() == 500);
    }
    REQUIRE(s.hits == before + 3);
}

TEST_CASE("remote embedder: dim must agree across batches") {
    FakeServer s;
    std::atomic<int> calls{0};
    s.post("/embed", [&](const httplib::Request&, httplib::Response& res) {
        int n = calls++;
        json v = n == 0 ? json{{1.0, 2.0}} : json{{1.0, 2.0, 3.0}};
        res.set_content(json{{"vectors", v}, {"dim", n == 0 ? 2 : 3}}.dump(), "application/json");
    });
    auto cfg = remote(s.url(), 1);
    cfg.max_in_flight = 1;
    RemoteEmbedder e(cfg);
    std::vector<std::string> texts{"a", "b"};
    REQUIRE_THROWS_AS(e.embed(texts), ProtocolError);
}

TEST_CASE("remote embedder: health and unreachable service") {
    FakeServer s;
    s.get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"status": "ok", "models": {"text": "t", "code": "c"}})", "application/json");
    });
    REQUIRE(RemoteEmbedder(remote(s.url())).health()["status"] == "ok");

    auto cfg = remote("http://127.0.0.1:1");
    cfg.max_attempts = 2;
    RemoteEmbedder dead(cfg);
    dead.backoff_base_s = 0.01;
    std::vector<std::string> texts{"a"};
    REQUIRE_THROWS_AS(dead.embed(texts), TransportError);
    REQUIRE_THROWS_AS(dead.health(), TransportError);
    REQUIRE_THROWS_AS(embed_batch({}, cfg), InputError);
}

TEST_CASE("providers: credentials are required up front") {
    ::unsetenv("CAPECGEN_TEST_KEY");
    REQUIRE_THROWS_AS(make_provider(provider(ProviderKind::OpenAICompatible, "http://127.0.0.1:1")), CredentialError);
    auto p = provider(ProviderKind::AnthropicCompatible, "http://127.0.0.1:1");
    p.credentials_env.clear();
    REQUIRE_THROWS_AS(make_provider(p), CredentialError);
    REQUIRE_NOTHROW(make_provider(ProviderConfig{}));  // mock needs none
}

TEST_CASE("providers: OpenAI-compatible request and retry") {
    ::setenv("CAPECGEN_TEST_KEY", "sk-test", 1);
    FakeServer s;
    std::atomic<int> calls{0};
    json seen;
    std::string auth;
    s.post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        if (calls++ == 0) {
            res.status = 429;
            res.set_header("Retry-After", "0");
            return;
        }
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        res.set_content(json{{"model", "fake-model-2024"},
                             {"choices", {{{"message", {{"role", "assistant"}, {"content", "{\"a\":1}"}}}}}}}
                            .dump(),
                        "application/json");
    });
    auto cfg = provider(ProviderKind::OpenAICompatible, s.url() + "/v1");
    cfg.temperature = 0.2;
    auto p = make_provider(cfg);
    auto c = p->complete(prompt());
    REQUIRE(c.text == "{\"a\":1}");
    REQUIRE(c.attempts == 2);
    REQUIRE(c.model_id == "fake-model-2024");
    REQUIRE(calls == 2);
    REQUIRE(auth == "Bearer sk-test");
    REQUIRE(seen["model"] == "fake-model");
    REQUIRE(seen["temperature"] == 0.2);
    REQUIRE(seen["messages"].size() == 1);
    REQUIRE(seen["messages"][0]["role"] == "user");
    REQUIRE(seen["messages"][0]["content"] == prompt().text);
}

TEST_CASE("providers: Anthropic-compatible request shape") {
    ::setenv("CAPECGEN_TEST_KEY", "ak-test", 1);
    FakeServer s;
    json seen;
    httplib::Headers headers;
    s.post("/v1/messages", [&](const httplib::Request& req, httplib::Response& res) {
        seen = json::parse(req.body);
        headers = req.headers;
        res.set_content(json{{"content", {{{"type", "text"}, {"text", "hello"}}}}}.dump(), "application/json");
    });
    auto p = make_provider(provider(ProviderKind::AnthropicCompatible, s.url()));
    REQUIRE(p->complete(prompt()).text == "hello");
    REQUIRE(headers.find("x-api-key")->second == "ak-test");
    REQUIRE(headers.count("anthropic-version") == 1);
    REQUIRE(seen["max_tokens"] == 4096);
    REQUIRE_FALSE(seen.contains("temperature"));
}

TEST_CASE("providers: error statuses") {
    ::setenv("CAPECGEN_TEST_KEY", "k", 1);
    FakeServer s;
    int status = 401;
    std::string body;
    s.post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = status;
        res.set_content(body, "application/json");
    });
    auto p = make_provider(provider(ProviderKind::OpenAICompatible, s.url()));

    REQUIRE_THROWS_AS(p->complete(prompt()), CredentialError);
    REQUIRE(s.hits == 1);  // never retried

    status = 400;
    REQUIRE_THROWS_AS(p->complete(prompt()), ProtocolError);
    REQUIRE(s.hits == 2);

    status = 502;
    REQUIRE_THROWS_AS(p->complete(prompt()), TransportError);
    REQUIRE(s.hits == 5);

    status = 200;
    body = R"({"choices": []})";
    REQUIRE_THROWS_AS(p->complete(prompt()), ProtocolError);
    body = "<html>";
    REQUIRE_THROWS_AS(p->complete(prompt()), ProtocolError);
}
