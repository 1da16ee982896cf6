#include <gtest/gtest.h>

#include "support.hpp"

using namespace genir;

namespace {

void clear_env() {
  for (const char* v : {"GENIR_GENERATOR_URL", "GENIR_EMBEDDER_URL", "GENIR_AGENT_URL", "GENIR_INDEX_PATH",
                        "GENIR_LISTEN"}) {
    ::unsetenv(v);
  }
}

}  // namespace

TEST(Config, Defaults) {
  clear_env();
  auto cfg = load_config(std::nullopt);
  EXPECT_EQ(cfg.dim, 256u);
  EXPECT_TRUE(cfg.all_mock());
  EXPECT_EQ(cfg.endpoint(Role::generator).timeout, std::chrono::milliseconds(120000));
  EXPECT_EQ(cfg.endpoint(Role::agent).timeout, std::chrono::milliseconds(10000));
  EXPECT_EQ(cfg.service.listen, "127.0.0.1:8080");
}

TEST(Config, FileValues) {
  clear_env();
  genir::testing::TempDir dir;
  genir::testing::write_file(dir / "c.json", R"({
    "dim": 32, "seed": 9,
    "mock": {"noise_sigma_0": 0.5, "noise_decay": 0.9, "alpha": 0.25, "latency_ms": {"generate": 16000}},
    "endpoints": {"agent": {"url": "http://agent:1", "timeout_ms": 500, "max_retries": 4}},
    "session": {"k": 5, "max_rounds": 7},
    "service": {"listen": "0.0.0.0:9000", "index_path": "/data/x.idx", "static_image_roots": ["/a", "/b"]}
  })");
  auto cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.dim, 32u);
  EXPECT_EQ(cfg.world().dim, 32u);
  EXPECT_EQ(cfg.world().seed, 9u);
  EXPECT_EQ(cfg.mock.alpha, 0.25);
  EXPECT_EQ(cfg.mock.latency.generate_ms, 16000);
  EXPECT_EQ(cfg.endpoint(Role::agent).base_url, "http://agent:1");
  EXPECT_EQ(cfg.endpoint(Role::agent).timeout.count(), 500);
  EXPECT_EQ(cfg.endpoint(Role::agent).max_retries, 4);
  EXPECT_FALSE(cfg.uses_mock(Role::agent));
  EXPECT_TRUE(cfg.uses_mock(Role::generator));
  EXPECT_EQ(cfg.k, 5u);
  EXPECT_EQ(cfg.max_rounds, 7);
  EXPECT_EQ(cfg.service.static_image_roots.size(), 2u);
}

TEST(Config, EnvironmentOverridesFile) {
  genir::testing::TempDir dir;
  genir::testing::write_file(dir / "c.json", R"({"endpoints": {"generator": {"url": "http://file:1"}}})");
  ::setenv("GENIR_GENERATOR_URL", "http://env:2", 1);
  ::setenv("GENIR_EMBEDDER_URL", "http://embed:3", 1);
  ::setenv("GENIR_LISTEN", "127.0.0.1:7000", 1);
  auto cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.endpoint(Role::generator).base_url, "http://env:2");
  EXPECT_EQ(cfg.endpoint(Role::image_embedder).base_url, "http://embed:3");
  EXPECT_EQ(cfg.endpoint(Role::text_embedder).base_url, "http://embed:3");
  EXPECT_EQ(cfg.service.listen, "127.0.0.1:7000");
  EXPECT_EQ(load_config(dir / "c.json", false).endpoint(Role::generator).base_url, "http://file:1");
  clear_env();
}

TEST(Config, Errors) {
  clear_env();
  genir::testing::TempDir dir;
  auto code = [](const std::function<void()>& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::OutOfRange;
  };
  EXPECT_EQ(code([&] { load_config(dir / "missing.json"); }), ErrorCode::IoError);
  genir::testing::write_file(dir / "bad.json", "{not json");
  EXPECT_EQ(code([&] { load_config(dir / "bad.json"); }), ErrorCode::InvalidConfig);
  genir::testing::write_file(dir / "type.json", R"({"dim": "wide"})");
  EXPECT_EQ(code([&] { load_config(dir / "type.json"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code([] { parse_listen("localhost"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code([] { parse_listen("localhost:http"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(parse_listen("0.0.0.0:8080"), (std::pair<std::string, int>{"0.0.0.0", 8080}));
}

TEST(Config, GatewayWiresMockAndHttp) {
  clear_env();
  AppConfig cfg;
  cfg.dim = 8;
  auto gw = make_gateway(cfg);
  EXPECT_EQ(gw->dim(), 8u);
  EXPECT_NO_THROW(gw->embed_text("anything"));

  MockBackendServer server(std::make_shared<MockWorld>(cfg.world()));
  server.start();
  cfg.endpoint(Role::text_embedder).base_url = server.base_url();
  auto mixed = make_gateway(cfg);
  EXPECT_EQ(mixed->embed_text("anything").value, gw->embed_text("anything").value);

  cfg.endpoint(Role::text_embedder).base_url = "http://127.0.0.1:1";
  cfg.endpoint(Role::text_embedder).max_retries = 0;
  auto broken = make_gateway(cfg);
  try {
    broken->embed_text("anything");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendUnavailable);
  }
}
