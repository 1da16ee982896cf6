#include <gtest/gtest.h>

#include <httplib.h>

#include "support.hpp"

using namespace genir;
using namespace std::chrono_literals;

namespace {

/// Backend whose every method is a replaceable callback.
class FakeBackend : public InferenceBackend {
 public:
  std::function<Timed<ImageBlob>(const std::string&, std::uint64_t)> on_generate;
  std::function<Timed<std::vector<float>>(const ImageBlob&)> on_embed_image;
  std::function<Timed<std::vector<float>>(const std::string&)> on_embed_text;
  std::function<Timed<std::string>(const ImageBlob&)> on_initial;
  std::function<Timed<std::string>(const ImageBlob&, const ImageBlob*, const DialogHistory&, RefineMode)> on_refine;

  Timed<ImageBlob> generate(const std::string& p, std::uint64_t s) override { return on_generate(p, s); }
  Timed<std::vector<float>> embed_image(const ImageBlob& b) override { return on_embed_image(b); }
  Timed<std::vector<float>> embed_text(const std::string& t) override { return on_embed_text(t); }
  Timed<std::string> initial_query(const ImageBlob& t) override { return on_initial(t); }
  Timed<std::string> refine_query(const ImageBlob& t, const ImageBlob* f, const DialogHistory& h,
                                  RefineMode m) override {
    return on_refine(t, f, h, m);
  }
};

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::OutOfRange;
}

GatewayOptions options(std::size_t dim, int retries = 2) {
  GatewayOptions o;
  o.dim = dim;
  o.generator_retries = o.embedder_retries = o.agent_retries = retries;
  return o;
}

ImageBlob sample_image(std::size_t dim) {
  std::vector<float> v(dim, 0.0f);
  v[0] = 1.0f;
  return make_vector_image(v, ImageOrigin::database);
}

}  // namespace

TEST(Gateway, RejectsBadText) {
  Gateway gw(std::make_shared<MockWorld>(MockWorldConfig{.dim = 8}), options(8));
  EXPECT_EQ(code_of([&] { gw.generate_image("", 1); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { gw.embed_text(""); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { gw.generate_image(std::string(kMaxTextBytes + 1, 'x'), 1); }), ErrorCode::PromptTooLong);
  EXPECT_NO_THROW(gw.generate_image(std::string(kMaxTextBytes, 'x'), 1));
}

TEST(Gateway, DimensionMismatch) {
  auto fake = std::make_shared<FakeBackend>();
  fake->on_embed_image = [](const ImageBlob&) { return Timed<std::vector<float>>{std::vector<float>(128, 1.0f), 0}; };
  Gateway gw(fake, options(256));
  EXPECT_EQ(code_of([&] { gw.embed_image(sample_image(4)); }), ErrorCode::DimensionMismatch);
}

TEST(Gateway, ZeroEmbeddingIsMalformed) {
  auto fake = std::make_shared<FakeBackend>();
  fake->on_embed_text = [](const std::string&) { return Timed<std::vector<float>>{std::vector<float>(4, 0.0f), 0}; };
  Gateway gw(fake, options(4));
  EXPECT_EQ(code_of([&] { gw.embed_text("x"); }), ErrorCode::MalformedResponse);
}

TEST(Gateway, ImageEmbeddingsAreUnit) {
  Gateway gw(std::make_shared<MockWorld>(MockWorldConfig{.dim = 64}), options(64));
  std::mt19937_64 rng(100);
  for (int i = 0; i < 100; ++i) {
    auto v = genir::testing::random_vector(rng, 64);
    for (auto& x : v) x *= static_cast<float>(1 + i);
    auto e = gw.embed_image(make_vector_image(v, ImageOrigin::generated)).value;
    ASSERT_NEAR(l2_norm(e.view()), 1.0, 1e-6);
  }
}

TEST(Gateway, RetriesTransientErrors) {
  auto fake = std::make_shared<FakeBackend>();
  int calls = 0;
  fake->on_generate = [&](const std::string&, std::uint64_t) -> Timed<ImageBlob> {
    if (++calls < 3) throw Error(ErrorCode::BackendTimeout, "slow");
    return {sample_image(4), 5};
  };
  Gateway gw(fake, options(4, 2));
  EXPECT_NO_THROW(gw.generate_image("p", 1));
  EXPECT_EQ(calls, 3);

  calls = 0;
  Gateway strict(fake, options(4, 1));
  EXPECT_EQ(code_of([&] { strict.generate_image("p", 1); }), ErrorCode::BackendTimeout);
  EXPECT_EQ(calls, 2);
}

TEST(Gateway, DoesNotRetryPermanentErrors) {
  auto fake = std::make_shared<FakeBackend>();
  int calls = 0;
  fake->on_initial = [&](const ImageBlob&) -> Timed<std::string> {
    ++calls;
    throw Error(ErrorCode::BackendRejected, "400");
  };
  Gateway gw(fake, options(4, 5));
  EXPECT_EQ(code_of([&] { gw.initial_query(sample_image(4)); }), ErrorCode::BackendRejected);
  EXPECT_EQ(calls, 1);
}

TEST(Gateway, RefineChecksFeedbackAndHistory) {
  Gateway gw(std::make_shared<MockWorld>(MockWorldConfig{.dim = 4}), options(4));
  auto target = sample_image(4);
  DialogHistory history{{0, "mock-query round=0 v=1,0,0,0", std::nullopt}};
  EXPECT_EQ(code_of([&] { gw.refine_query(target, nullptr, history, RefineMode::generative); }),
            ErrorCode::MissingFeedback);
  EXPECT_EQ(code_of([&] { gw.refine_query(target, nullptr, {}, RefineMode::verbal); }), ErrorCode::InvalidArgument);
  DialogHistory gap{{0, "a", std::nullopt}, {0, "b", std::nullopt}};
  EXPECT_EQ(code_of([&] { gw.refine_query(target, nullptr, gap, RefineMode::verbal); }), ErrorCode::InvalidArgument);
  EXPECT_NO_THROW(gw.refine_query(target, nullptr, history, RefineMode::verbal));
}

TEST(Gateway, EmptyAgentReplyIsMalformed) {
  auto fake = std::make_shared<FakeBackend>();
  fake->on_initial = [](const ImageBlob&) { return Timed<std::string>{"", 0}; };
  Gateway gw(fake, options(4));
  EXPECT_EQ(code_of([&] { gw.initial_query(sample_image(4)); }), ErrorCode::MalformedResponse);
}

TEST(Gateway, ConfigValidation) {
  auto world = std::make_shared<MockWorld>(MockWorldConfig{.dim = 4});
  EXPECT_THROW(Gateway(world, options(4, 6)), Error);
  EXPECT_THROW(Gateway(nullptr, world, world, world, options(4)), Error);
}

// ---------------------------------------------------------------------------
// Over HTTP

TEST(HttpGateway, MatchesInProcessMock) {
  MockWorldConfig c{.dim = 16, .noise_sigma_0 = 0.3, .noise_decay = 0.9, .seed = 4, .verbal_sigma_0 = 0.5};
  auto world = std::make_shared<MockWorld>(c);
  MockBackendServer server(world);
  server.start();
  auto http = std::make_shared<HttpBackend>(default_endpoint(Role::generator, server.base_url()));
  Gateway remote(http, options(16));
  Gateway local(world, options(16));

  std::mt19937_64 rng(8);
  auto target = world->render_database_image(genir::testing::random_vector(rng, 16));
  auto q0 = remote.initial_query(target).value;
  EXPECT_EQ(q0, local.initial_query(target).value);
  auto img = remote.generate_image(q0, 77).value;
  EXPECT_EQ(img.bytes, local.generate_image(q0, 77).value.bytes);
  EXPECT_EQ(remote.embed_image(img).value, local.embed_image(img).value);
  EXPECT_EQ(remote.embed_text(q0).value, local.embed_text(q0).value);
  DialogHistory h{{0, q0, std::nullopt}};
  EXPECT_EQ(remote.refine_query(target, &img, h, RefineMode::generative).value,
            local.refine_query(target, &img, h, RefineMode::generative).value);
  EXPECT_EQ(remote.refine_query(target, nullptr, h, RefineMode::verbal).value,
            local.refine_query(target, nullptr, h, RefineMode::verbal).value);
}

TEST(HttpGateway, MockServerRejectsBadRequests) {
  MockBackendServer server(std::make_shared<MockWorld>(MockWorldConfig{.dim = 4}));
  server.start();
  httplib::Client client(server.base_url());
  EXPECT_EQ(client.Post(wire::kGeneratePath, "nope", "application/json")->status, 400);
  EXPECT_EQ(client.Post(wire::kGeneratePath, R"({"prompt": "x"})", "application/json")->status, 400);
  EXPECT_EQ(client.Post(wire::kEmbedImagePath, R"({"format": "png", "data_b64": "AAAA"})", "application/json")->status,
            400);
  EXPECT_EQ(client.Post(wire::kRefinePath, R"({"target": {}, "mode": "telepathy"})", "application/json")->status, 400);
}

namespace {

struct StubServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};

  template <class Handler>
  explicit StubServer(Handler handler) {
    server.Post(R"(/v1/.*)", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      handler(req, res);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~StubServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

ErrorCode remote_error(const std::string& url, const std::function<void(Gateway&)>& call, int retries = 0,
                       std::chrono::milliseconds timeout = 2000ms) {
  BackendEndpoint ep = default_endpoint(Role::image_embedder, url);
  ep.timeout = timeout;
  Gateway gw(std::make_shared<HttpBackend>(ep), options(4, retries));
  return code_of([&] { call(gw); });
}

}  // namespace

TEST(HttpGateway, MalformedReplies) {
  auto embed = [](Gateway& gw) { gw.embed_text("hello"); };
  auto generate = [](Gateway& gw) { gw.generate_image("hello", 1); };
  auto agent = [](Gateway& gw) { gw.initial_query(sample_image(4)); };

  StubServer not_json([](const httplib::Request&, httplib::Response& res) { res.set_content("<html>", "text/html"); });
  EXPECT_EQ(remote_error(not_json.url(), embed), ErrorCode::MalformedResponse);

  StubServer short_dim([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim": 2, "embedding": [1, 0]})", "application/json");
  });
  EXPECT_EQ(remote_error(short_dim.url(), embed), ErrorCode::DimensionMismatch);

  StubServer lying_dim([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim": 4, "embedding": [1, 0]})", "application/json");
  });
  EXPECT_EQ(remote_error(lying_dim.url(), embed), ErrorCode::MalformedResponse);

  StubServer bad_image([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"format": "png", "data_b64": "aGVsbG8="})", "application/json");
  });
  EXPECT_EQ(remote_error(bad_image.url(), generate), ErrorCode::MalformedResponse);

  StubServer no_query([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"text": "hi"})", "application/json");
  });
  EXPECT_EQ(remote_error(no_query.url(), agent), ErrorCode::MalformedResponse);
}

TEST(HttpGateway, StatusCodes) {
  auto embed = [](Gateway& gw) { gw.embed_text("hello"); };
  StubServer rejected([](const httplib::Request&, httplib::Response& res) { res.status = 422; });
  EXPECT_EQ(remote_error(rejected.url(), embed, 3), ErrorCode::BackendRejected);
  EXPECT_EQ(rejected.hits.load(), 1);

  StubServer down([](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  EXPECT_EQ(remote_error(down.url(), embed, 2), ErrorCode::BackendUnavailable);
  EXPECT_EQ(down.hits.load(), 3);
}

TEST(HttpGateway, UnreachableAfterRetries) {
  // Nothing listens on port 1; the connection is refused straight away.
  const std::string url = "http://127.0.0.1:1";
  EXPECT_EQ(remote_error(url, [](Gateway& gw) { gw.initial_query(sample_image(4)); }, 2),
            ErrorCode::BackendUnavailable);
}

TEST(HttpGateway, SlowBackendTimesOut) {
  StubServer slow([](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(800ms);
    res.set_content(R"({"dim": 4, "embedding": [1, 0, 0, 0]})", "application/json");
  });
  EXPECT_EQ(remote_error(slow.url(), [](Gateway& gw) { gw.embed_text("x"); }, 0, 200ms), ErrorCode::BackendTimeout);
}

TEST(HttpGateway, EndpointValidation) {
  EXPECT_THROW(HttpBackend(default_endpoint(Role::agent)), Error);
  auto ep = default_endpoint(Role::agent, "http://127.0.0.1:1");
  ep.timeout = 0ms;
  EXPECT_THROW(HttpBackend{ep}, Error);
  EXPECT_THROW(HttpBackend(default_endpoint(Role::agent, "http://127.0.0.1:1"), 0), Error);
}
