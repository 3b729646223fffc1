#include "clarifykit/config.hpp"

#include <yaml-cpp/yaml.h>

#include <set>

#include "json.hpp"

namespace clarifykit {

using nlohmann::ordered_json;

std::string_view tool_version() { return CLARIFYKIT_VERSION; }

RunConfig default_config() {
  RunConfig c;
  c.endpoint = gateway::EndpointConfig::from_env();
  c.gen_model = c.endpoint.gen_model;
  c.judge_model = c.endpoint.judge_model;
  return c;
}

namespace {

void reject_unknown(const YAML::Node& node, const std::string& where, std::set<std::string> known) {
  if (!node.IsMap()) throw ParseError("config: " + where + " must be a mapping");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!known.contains(key)) throw ParseError("config: unknown key " + where + key);
  }
}

template <typename T>
void take(const YAML::Node& node, const char* key, T& out) {
  if (const auto v = node[key]; v && !v.IsNull()) out = v.as<T>();
}

}  // namespace

RunConfig apply_yaml(RunConfig c, std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  if (!root || root.IsNull()) return c;
  try {
    reject_unknown(root, "",
                   {"seed", "endpoint", "models", "mock_script", "paths", "synthesis", "mix", "evaluation",
                    "sandbox", "jobs", "limit"});
    take(root, "seed", c.seed);
    take(root, "mock_script", c.mock_script);
    take(root, "jobs", c.jobs);
    if (const auto v = root["limit"]; v && !v.IsNull()) c.limit = v.as<std::size_t>();

    if (const auto e = root["endpoint"]) {
      reject_unknown(e, "endpoint.", {"base_url", "path", "timeout_secs"});
      take(e, "base_url", c.endpoint.base_url);
      take(e, "path", c.endpoint.path);
      if (const auto t = e["timeout_secs"]) c.endpoint.timeout = std::chrono::seconds(t.as<long>());
    }
    if (const auto m = root["models"]) {
      reject_unknown(m, "models.", {"generator", "judge", "evaluated"});
      take(m, "generator", c.gen_model);
      take(m, "judge", c.judge_model);
      take(m, "evaluated", c.eval_model);
    }
    if (const auto p = root["paths"]) {
      reject_unknown(p, "paths.",
                     {"corpus", "corpus_format", "dataset", "checkpoint", "cache", "tasks", "transcripts",
                      "mixed", "training", "reports", "templates", "exemplars"});
      take(p, "corpus", c.paths.corpus);
      if (const auto f = p["corpus_format"]) c.corpus_format = parse_corpus_format(f.as<std::string>());
      take(p, "dataset", c.paths.dataset);
      take(p, "checkpoint", c.paths.checkpoint);
      take(p, "cache", c.paths.cache);
      take(p, "tasks", c.paths.tasks);
      take(p, "transcripts", c.paths.transcripts);
      take(p, "mixed", c.paths.mixed);
      take(p, "training", c.paths.training);
      take(p, "reports", c.paths.reports);
      take(p, "templates", c.paths.templates);
      take(p, "exemplars", c.paths.exemplars);
    }
    if (const auto s = root["synthesis"]) {
      reject_unknown(s, "synthesis.", {"categories", "attempt_cap", "leak_window", "max_tokens"});
      if (const auto cats = s["categories"]) {
        c.categories.clear();
        for (const auto& x : cats) c.categories.push_back(parse_category(x.as<std::string>()));
      }
      take(s, "attempt_cap", c.attempt_cap);
      take(s, "leak_window", c.leak_window);
      take(s, "max_tokens", c.synth_max_tokens);
    }
    if (const auto m = root["mix"]) {
      reject_unknown(m, "mix.", {"ratio", "strategy", "mask_mode"});
      take(m, "ratio", c.mix.ratio_r);
      if (const auto s = m["strategy"]) c.mix.strategy = mix::parse_strategy(s.as<std::string>());
      if (const auto s = m["mask_mode"]) c.mask_mode = mix::parse_mask_mode(s.as<std::string>());
    }
    if (const auto e = root["evaluation"]) {
      reject_unknown(e, "evaluation.", {"shots", "cot", "max_tokens", "judge_max_tokens"});
      take(e, "shots", c.prompt.shots);
      take(e, "cot", c.prompt.cot);
      take(e, "max_tokens", c.eval_max_tokens);
      take(e, "judge_max_tokens", c.judge_max_tokens);
    }
    if (const auto s = root["sandbox"]) {
      reject_unknown(s, "sandbox.", {"interpreter", "timeout_secs", "memory_mib", "driver_template"});
      if (const auto i = s["interpreter"]) {
        c.sandbox.interpreter_command =
            i.IsSequence() ? i.as<std::vector<std::string>>() : std::vector<std::string>{i.as<std::string>()};
      }
      if (const auto t = s["timeout_secs"]) {
        c.sandbox.wall_timeout = std::chrono::milliseconds(static_cast<long long>(t.as<double>() * 1000));
      }
      if (const auto m = s["memory_mib"]) c.sandbox.memory_limit_bytes = m.as<std::uint64_t>() * 1024 * 1024;
      if (const auto d = s["driver_template"]) c.sandbox.driver_template = io::read_file(d.as<std::string>());
    }
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  return apply_yaml(std::move(base), io::read_file(path));
}

std::string RunConfig::canonical_json() const {
  ordered_json j;
  j["seed"] = seed;
  j["endpoint"] = {{"base_url", endpoint.base_url}, {"path", endpoint.path},
                   {"timeout_secs", endpoint.timeout.count()}};
  j["models"] = {{"generator", gen_model}, {"judge", judge_model}, {"evaluated", eval_model}};
  j["mock_script"] = mock_script;
  j["paths"] = {{"corpus", paths.corpus},           {"corpus_format", corpus_format == CorpusFormat::apps ? "apps" : "canonical"},
                {"dataset", paths.dataset},         {"checkpoint", paths.checkpoint},
                {"cache", paths.cache},             {"tasks", paths.tasks},
                {"transcripts", paths.transcripts}, {"mixed", paths.mixed},
                {"training", paths.training},       {"reports", paths.reports},
                {"templates", paths.templates},     {"exemplars", paths.exemplars}};
  ordered_json cats = ordered_json::array();
  for (auto cat : categories) cats.push_back(std::string(to_code(cat)));
  j["synthesis"] = {{"categories", cats},
                    {"attempt_cap", attempt_cap},
                    {"leak_window", leak_window},
                    {"max_tokens", synth_max_tokens}};
  j["mix"] = {{"ratio", mix.ratio_r},
              {"strategy", std::string(mix::to_string(mix.strategy))},
              {"mask_mode", std::string(mix::to_string(mask_mode))}};
  j["evaluation"] = {{"shots", prompt.shots},
                     {"cot", prompt.cot},
                     {"max_tokens", eval_max_tokens},
                     {"judge_max_tokens", judge_max_tokens}};
  j["sandbox"] = {{"interpreter", sandbox.interpreter_command},
                  {"timeout_ms", sandbox.wall_timeout.count()},
                  {"memory_bytes", sandbox.memory_limit_bytes},
                  {"driver_template_sha256",
                   sandbox.driver_template ? io::sha256_hex(*sandbox.driver_template) : std::string()}};
  j["jobs"] = jobs;
  j["limit"] = limit ? ordered_json(*limit) : ordered_json();
  return j.dump();
}

std::string RunConfig::digest() const { return io::sha256_hex(canonical_json()); }

std::filesystem::path provenance_path(const std::filesystem::path& artifact) {
  auto p = artifact;
  p += ".meta.json";
  return p;
}

void write_provenance(const std::filesystem::path& artifact, const RunConfig& config, std::string_view command) {
  ordered_json j;
  j["artifact"] = artifact.filename().string();
  j["tool_version"] = std::string(tool_version());
  j["config_digest"] = config.digest();
  j["seed"] = config.seed;
  j["command"] = std::string(command);
  io::write_file_atomic(provenance_path(artifact), j.dump(2) + "\n");
}

}  // namespace clarifykit
