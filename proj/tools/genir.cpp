// genir: index building, simulation, curation, evaluation and the session
// service, all from one binary.
//
// Exit codes: 0 ok, 1 usage / missing input, 2 index source parse error,
// 3 write failure, 4 backend unreachable, 5 output exists without --force.

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "genir/genir.hpp"

namespace fs = std::filesystem;
using namespace genir;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kParse = 2,
  kWrite = 3,
  kBackend = 4,
  kExists = 5,
};

struct ExitError {
  int code;
  std::string message;
};

struct Globals {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;
};

struct WorldFlags {
  std::optional<double> alpha;
  std::optional<double> noise_sigma;
  std::optional<double> noise_decay;
  std::optional<double> verbal_sigma;
  std::optional<double> description_sigma;
  std::optional<std::size_t> dim;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--alpha", alpha, "Mock refinement blend toward the target");
    cmd->add_option("--noise-sigma", noise_sigma, "Mock generator noise at round 0");
    cmd->add_option("--noise-decay", noise_decay, "Per-round noise multiplier");
    cmd->add_option("--verbal-sigma", verbal_sigma, "Mock verbal channel noise at round 0");
    cmd->add_option("--description-sigma", description_sigma, "Mock initial description error");
  }
};

AppConfig resolve_config(const Globals& g, const WorldFlags& w) {
  AppConfig cfg = load_config(g.config ? std::optional<fs::path>(*g.config) : std::nullopt);
  if (g.seed) cfg.seed = *g.seed;
  if (w.alpha) cfg.mock.alpha = *w.alpha;
  if (w.noise_sigma) cfg.mock.noise_sigma_0 = *w.noise_sigma;
  if (w.noise_decay) cfg.mock.noise_decay = *w.noise_decay;
  if (w.verbal_sigma) cfg.mock.verbal_sigma_0 = *w.verbal_sigma;
  if (w.description_sigma) cfg.mock.description_sigma = *w.description_sigma;
  return cfg;
}

void require_output(const Globals& g, const char* what) {
  if (g.out.empty()) throw ExitError{kUsage, std::string("--out is required for ") + what};
  if (!g.force && fs::exists(g.out)) throw ExitError{kExists, g.out + " exists (use --force to overwrite)"};
}

void require_input(const std::string& path) {
  if (path.empty() || !fs::exists(path)) throw ExitError{kUsage, "no such file: " + path};
}

std::shared_ptr<const EmbeddingIndex> open_index(const std::string& path, std::optional<std::size_t> dim = {}) {
  require_input(path);
  return std::make_shared<const EmbeddingIndex>(load_index(fs::path(path), dim));
}

struct EngineBundle {
  AppConfig config;
  std::shared_ptr<const EmbeddingIndex> index;
  std::shared_ptr<SessionEngine> engine;
};

EngineBundle make_engine(AppConfig cfg, std::shared_ptr<const EmbeddingIndex> index, bool deterministic_clock) {
  cfg.dim = index->dim();
  auto gateway = make_gateway(cfg);
  std::shared_ptr<const DatabaseImages> images;
  if (cfg.uses_mock(Role::agent) && cfg.uses_mock(Role::image_embedder)) {
    images = std::make_shared<MockDatabaseImages>(index);
  } else {
    std::vector<fs::path> roots(cfg.service.static_image_roots.begin(), cfg.service.static_image_roots.end());
    images = std::make_shared<FileDatabaseImages>(index, roots);
  }
  EngineOptions opts;
  opts.seed = cfg.seed;
  if (deterministic_clock) opts.clock_ms = frozen_clock();
  auto engine = std::make_shared<SessionEngine>(index, gateway, images, std::make_shared<SyntheticImages>(), opts);
  return {std::move(cfg), std::move(index), std::move(engine)};
}

FeedbackMode parse_mode(const std::string& mode, std::optional<double> visual_fraction) {
  auto kind = parse_feedback_kind(mode);
  if (!kind) throw ExitError{kUsage, "unknown mode: " + mode};
  FeedbackMode m{*kind, std::nullopt};
  if (*kind == FeedbackKind::hybrid_random) m.visual_fraction = visual_fraction.value_or(0.223);
  return m;
}

ojson world_fingerprint(const AppConfig& cfg) {
  if (!cfg.all_mock()) {
    return {{"generator", cfg.endpoint(Role::generator).base_url},
            {"image_embedder", cfg.endpoint(Role::image_embedder).base_url},
            {"text_embedder", cfg.endpoint(Role::text_embedder).base_url},
            {"agent", cfg.endpoint(Role::agent).base_url}};
  }
  const auto w = cfg.world();
  return {{"mock",
           {{"dim", w.dim},
            {"noise_sigma_0", w.noise_sigma_0},
            {"noise_decay", w.noise_decay},
            {"alpha", w.alpha},
            {"verbal_sigma_0", w.verbal_sigma_0},
            {"description_sigma", w.description_sigma}}}};
}

// ---------------------------------------------------------------------------
// index

int cmd_index_build(const Globals& g, const std::string& source, std::size_t dim) {
  require_input(source);
  require_output(g, "index build");
  std::ifstream in(source);
  if (!in) throw ExitError{kUsage, "cannot read " + source};

  std::vector<ImageRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    for (char& c : line) {
      if (c == ',' || c == '\t') c = ' ';
    }
    std::istringstream row(line);
    ImageRecord rec;
    row >> rec.id;
    std::string token;
    while (row >> token) {
      float v = 0.0f;
      auto [p, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
      if (ec != std::errc{} || p != token.data() + token.size()) {
        throw ExitError{kParse, "line " + std::to_string(line_no) + ": not a number: " + token};
      }
      rec.embedding.push_back(v);
    }
    if (rec.embedding.size() != dim) {
      throw ExitError{kParse, "line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                                  " values, got " + std::to_string(rec.embedding.size())};
    }
    records.push_back(std::move(rec));
  }

  EmbeddingIndex index;
  try {
    index = EmbeddingIndex::build(std::move(records), dim);
  } catch (const Error& e) {
    throw ExitError{kParse, e.what()};
  }
  try {
    save_index(index, fs::path(g.out));
  } catch (const Error& e) {
    throw ExitError{kWrite, e.what()};
  }
  std::cout << "count=" << index.size() << " dim=" << index.dim() << '\n';
  return kOk;
}

int cmd_index_info(const std::string& path) {
  auto index = open_index(path);
  std::cout << "count=" << index->size() << " dim=" << index->dim() << '\n';
  return kOk;
}

int cmd_index_random(const Globals& g, std::size_t n, std::size_t dim) {
  require_output(g, "index random");
  auto index = make_random_index(n, dim, g.seed.value_or(0));
  try {
    save_index(index, fs::path(g.out));
  } catch (const Error& e) {
    throw ExitError{kWrite, e.what()};
  }
  std::cout << "count=" << index.size() << " dim=" << index.dim() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// simulate / curate

struct SessionFlags {
  std::string index;
  std::string mode = "generative";
  std::optional<double> visual_fraction;
  int rounds = 10;
  std::size_t k = 10;
  std::string semantics;
  std::vector<std::string> targets;
  std::string targets_file;
  std::optional<std::size_t> n_targets;
  std::size_t parallel = 1;
};

SessionConfig session_config(const SessionFlags& f, const std::string& default_semantics) {
  const auto mode = parse_mode(f.mode, f.visual_fraction);
  const auto semantics = f.semantics.empty() ? default_semantics : f.semantics;
  if (semantics == "curation") return curation_config(mode, f.rounds, f.k);
  if (semantics == "interactive") return interactive_config(mode, f.rounds, f.k);
  throw ExitError{kUsage, "unknown semantics: " + semantics};
}

std::vector<std::string> pick_targets(const SessionFlags& f, const EmbeddingIndex& index) {
  std::vector<std::string> targets = f.targets;
  if (!f.targets_file.empty()) {
    require_input(f.targets_file);
    std::ifstream in(f.targets_file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty() && line.front() != '#') targets.push_back(line);
    }
  }
  if (targets.empty()) {
    const std::size_t n = std::min(f.n_targets.value_or(index.size()), index.size());
    targets.assign(index.ids().begin(), index.ids().begin() + static_cast<std::ptrdiff_t>(n));
  }
  return targets;
}

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::BackendUnavailable:
    case ErrorCode::BackendTimeout:
    case ErrorCode::CurationFailed: return kBackend;
    case ErrorCode::OutputExists: return kExists;
    case ErrorCode::IoError: return kWrite;
    default: return kUsage;
  }
}

int cmd_simulate(const Globals& g, const WorldFlags& w, const SessionFlags& f) {
  require_output(g, "simulate");
  auto cfg = resolve_config(g, w);
  auto bundle = make_engine(cfg, open_index(f.index), cfg.all_mock());
  const auto config = session_config(f, "interactive");
  auto targets = pick_targets(f, *bundle.index);

  std::vector<TrajectoryRecord> records;
  std::size_t succeeded = 0;
  int code = kOk;
  for (const auto& target : targets) {
    if (!bundle.index->contains(target)) throw ExitError{kUsage, "unknown target: " + target};
    auto trace = bundle.engine->run_simulated_session(config, target);
    if (trace.status == SessionStatus::succeeded) ++succeeded;
    const RoundFailure* failure = trace.failure ? &*trace.failure
                                  : (!trace.rounds.empty() && trace.rounds.back().failure) ? &*trace.rounds.back().failure
                                                                                           : nullptr;
    if (failure) {
      std::cerr << target << ": " << failure->stage << ": " << failure->message << '\n';
      if (is_transient(failure->code)) code = kBackend;
    }
    auto r = to_records(trace);
    records.insert(records.end(), r.begin(), r.end());
  }
  try {
    write_trajectories(fs::path(g.out), records);
  } catch (const Error& e) {
    throw ExitError{kWrite, e.what()};
  }
  std::cout << "sessions=" << targets.size() << " succeeded=" << succeeded << " records=" << records.size() << '\n';
  return code;
}

int cmd_curate(const Globals& g, const WorldFlags& w, const SessionFlags& f) {
  if (g.out.empty()) throw ExitError{kUsage, "--out is required for curate"};
  auto cfg = resolve_config(g, w);
  auto bundle = make_engine(cfg, open_index(f.index), cfg.all_mock());
  CurationJob job;
  job.targets = pick_targets(f, *bundle.index);
  job.session_config = session_config(f, "curation");
  job.output_dir = g.out;
  job.parallelism = f.parallel;
  job.overwrite = g.force;
  job.fingerprint = world_fingerprint(bundle.config);
  auto manifest = curate(*bundle.engine, job);
  std::cout << "targets=" << manifest.targets_total << " failed=" << manifest.failures.size()
            << " records=" << manifest.records_written << " images=" << manifest.images_written << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

std::vector<TrajectoryRecord> read_source(const std::string& path) {
  require_input(path);
  return read_trajectories(fs::path(path));
}

void write_text(const Globals& g, const std::string& text) {
  if (g.out.empty()) {
    std::cout << text;
    return;
  }
  if (!g.force && fs::exists(g.out)) throw ExitError{kExists, g.out + " exists (use --force to overwrite)"};
  std::ofstream out(g.out, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw ExitError{kWrite, "cannot write " + g.out};
}

HitConvention parse_convention(const std::string& s) {
  auto c = parse_hit_convention(s);
  if (!c) throw ExitError{kUsage, "unknown convention: " + s};
  return *c;
}

int cmd_eval_hits(const Globals& g, const std::vector<std::string>& sources, const std::vector<std::string>& names,
                  std::size_t k, const std::string& convention) {
  std::vector<std::vector<TrajectoryRecord>> data;
  for (const auto& s : sources) data.push_back(read_source(s));
  write_text(g, compare_modes(data, k, parse_convention(convention), names).to_csv());
  return kOk;
}

int cmd_eval_hybrid(const Globals& g, const std::string& verbal, const std::string& visual, double p, std::size_t k,
                    const std::string& convention) {
  auto report = hybrid_report(read_source(verbal), read_source(visual), k, p, parse_convention(convention));
  write_text(g, report.to_json().dump(2) + "\n");
  return kOk;
}

int cmd_eval_latency(const Globals& g, const std::vector<std::string>& sources, bool include_agent,
                     const std::string& format) {
  std::vector<TrajectoryRecord> records;
  for (const auto& s : sources) {
    auto r = read_source(s);
    records.insert(records.end(), r.begin(), r.end());
  }
  auto report = latency_report(records, include_agent);
  write_text(g, format == "csv" ? report.to_csv() : report.to_json().dump(2) + "\n");
  return kOk;
}

// ---------------------------------------------------------------------------
// serve / mock-server

SessionService* g_service = nullptr;
MockBackendServer* g_mock_server = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
  if (g_mock_server) g_mock_server->stop();
}

int cmd_serve(const Globals& g, const WorldFlags& w, std::string index_path, std::string listen) {
  auto cfg = resolve_config(g, w);
  if (index_path.empty()) index_path = cfg.service.index_path;
  if (listen.empty()) listen = cfg.service.listen;
  auto bundle = make_engine(cfg, open_index(index_path), false);
  ServiceOptions opts;
  opts.cors_origin = cfg.service.cors_origin;
  opts.default_k = cfg.k;
  opts.default_max_rounds = cfg.max_rounds;
  if (!cfg.service.trajectory_log.empty()) opts.trajectory_log = fs::path(cfg.service.trajectory_log);
  if (!g.out.empty()) opts.trajectory_log = fs::path(g.out);
  SessionService service(bundle.engine, opts);
  const auto [host, port] = parse_listen(listen);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "serving " << bundle.index->size() << " images (dim " << bundle.index->dim() << ") on " << host << ':'
            << port << std::endl;
  service.listen(host, port);
  g_service = nullptr;
  return kOk;
}

int cmd_mock_server(const Globals& g, const WorldFlags& w, std::size_t dim, const std::string& listen) {
  auto cfg = resolve_config(g, w);
  if (w.dim) cfg.dim = *w.dim;
  cfg.dim = dim ? dim : cfg.dim;
  MockBackendServer server(std::make_shared<MockWorld>(cfg.world()));
  const auto [host, port] = parse_listen(listen);
  g_mock_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cout << "mock backend (dim " << cfg.dim << ") on " << host << ':' << port << std::endl;
  server.listen(host, port);
  g_mock_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generative interactive image retrieval toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--out", g.out, "Output path");
  app.add_flag("--force", g.force, "Overwrite existing outputs");
  app.set_help_all_flag("--help-all");

  WorldFlags world;

  auto* index = app.add_subcommand("index", "Build or inspect an embedding index");
  index->require_subcommand(1);
  std::string source;
  std::size_t dim = kDefaultDim;
  auto* build = index->add_subcommand("build", "Build an index from rows of: id v1 ... vdim");
  build->add_option("--source", source, "Text/CSV embeddings")->required();
  build->add_option("--dim", dim, "Embedding dimension");
  std::string info_path;
  auto* info = index->add_subcommand("info", "Print count and dim of an index file");
  info->add_option("--index", info_path, "Index file")->required();
  std::size_t random_n = 1000;
  auto* random = index->add_subcommand("random", "Write a seeded random unit-vector index");
  random->add_option("--n", random_n, "Number of images");
  random->add_option("--dim", dim, "Embedding dimension");

  SessionFlags sim_flags;
  auto add_session_flags = [&](CLI::App* cmd, SessionFlags& f) {
    cmd->add_option("--index", f.index, "Index file")->required();
    cmd->add_option("--mode", f.mode, "generative | verbal | prediction | hybrid_random");
    cmd->add_option("--visual-fraction", f.visual_fraction, "hybrid_random visual probability");
    cmd->add_option("--rounds", f.rounds, "Refinement rounds T");
    cmd->add_option("--k", f.k, "Top-K");
    cmd->add_option("--semantics", f.semantics, "curation (fixed T) | interactive (stop on top-k hit)");
    cmd->add_option("--target", f.targets, "Target id (repeatable)");
    cmd->add_option("--targets-file", f.targets_file, "File with one target id per line");
    cmd->add_option("--n-targets", f.n_targets, "Use the first N index ids as targets");
    world.add_to(cmd);
  };
  auto* simulate = app.add_subcommand("simulate", "Run simulated sessions and write their trajectories");
  add_session_flags(simulate, sim_flags);
  SessionFlags cur_flags;
  auto* curate_cmd = app.add_subcommand("curate", "Curate a multi-round trajectory dataset");
  add_session_flags(curate_cmd, cur_flags);
  curate_cmd->add_option("--parallel", cur_flags.parallel, "Concurrent workers");

  auto* eval = app.add_subcommand("eval", "Evaluate trajectory files");
  eval->require_subcommand(1);
  std::vector<std::string> traj;
  std::vector<std::string> names;
  std::size_t eval_k = 10;
  std::string convention = "cumulative";
  auto* hits = eval->add_subcommand("hits", "Hits@K per dialog length, one column per file");
  hits->add_option("--traj", traj, "Trajectory JSONL (repeatable)")->required();
  hits->add_option("--name", names, "Column names, in --traj order");
  hits->add_option("--k", eval_k, "K");
  hits->add_option("--convention", convention, "cumulative | per_round");
  std::string verbal_path;
  std::string visual_path;
  double p = 0.223;
  auto* hybrid = eval->add_subcommand("hybrid", "Hybrid oracle / random-select report");
  hybrid->add_option("--verbal", verbal_path, "Verbal-feedback trajectories")->required();
  hybrid->add_option("--visual", visual_path, "Visual-feedback trajectories")->required();
  hybrid->add_option("--p", p, "Visual fraction for random select");
  hybrid->add_option("--k", eval_k, "K");
  hybrid->add_option("--convention", convention, "cumulative | per_round");
  bool include_agent = false;
  std::string latency_format = "json";
  auto* latency = eval->add_subcommand("latency", "Per-stage latency statistics");
  latency->add_option("--traj", traj, "Trajectory JSONL (repeatable)")->required();
  latency->add_flag("--include-agent", include_agent, "Count agent time in per-round compute");
  latency->add_option("--format", latency_format, "json | csv");

  std::string serve_index;
  std::string listen;
  auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
  serve->add_option("--index", serve_index, "Index file (default: service.index_path)");
  serve->add_option("--listen", listen, "host:port (default: service.listen)");
  world.add_to(serve);

  std::size_t mock_dim = 0;
  std::string mock_listen = "127.0.0.1:9000";
  auto* mock = app.add_subcommand("mock-server", "Serve the /v1 inference protocol from the mock world");
  mock->add_option("--dim", mock_dim, "Embedding dimension");
  mock->add_option("--listen", mock_listen, "host:port");
  world.add_to(mock);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*index) {
      if (*build) return cmd_index_build(g, source, dim);
      if (*info) return cmd_index_info(info_path);
      if (*random) return cmd_index_random(g, random_n, dim);
    }
    if (*simulate) return cmd_simulate(g, world, sim_flags);
    if (*curate_cmd) return cmd_curate(g, world, cur_flags);
    if (*eval) {
      if (*hits) return cmd_eval_hits(g, traj, names, eval_k, convention);
      if (*hybrid) return cmd_eval_hybrid(g, verbal_path, visual_path, p, eval_k, convention);
      if (*latency) return cmd_eval_latency(g, traj, include_agent, latency_format);
    }
    if (*serve) return cmd_serve(g, world, serve_index, listen);
    if (*mock) return cmd_mock_server(g, world, mock_dim, mock_listen);
  } catch (const ExitError& e) {
    std::cerr << "genir: " << e.message << '\n';
    return e.code;
  } catch (const Error& e) {
    std::cerr << "genir: " << e.what() << '\n';
    return exit_for(e);
  }
  return kUsage;
}
