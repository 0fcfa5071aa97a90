// eda/config.hpp
//
// Run configuration: a fixed schema of dotted keys, each with a type, a
// default and a help line. Values come from defaults, then a key=value
// file, then command-line flags; every value remembers where it came from.

#ifndef EDA_CONFIG_HPP_
#define EDA_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eda/featfront.hpp"
#include "eda/infer.hpp"
#include "eda/mixsim.hpp"
#include "eda/model.hpp"
#include "eda/score.hpp"
#include "eda/trainengine.hpp"

namespace eda::config {

enum class ValueType { kInt, kUint, kReal, kBool, kString, kChoice };

struct KeySpec {
  std::string key;
  ValueType type;
  std::string default_value;
  std::string help;
  std::vector<std::string> choices{};  // kChoice only
  std::vector<std::string> literals{}; // accepted besides typed values
};

const std::vector<KeySpec> &schema();
const KeySpec *find_key(const std::string &key);

enum class Provenance { kDefault, kFile, kFlag };
std::string to_string(Provenance p);

class RunConfig {
 public:
  RunConfig();

  // Throws ConfigInvalid for unknown keys or ill-typed values.
  void set(const std::string &key, const std::string &value, Provenance from);
  // "key=value" form.
  void set_assignment(const std::string &kv, Provenance from);

  // Lines "key = value"; '#' starts a comment. Throws ParseError / IoError.
  void load_file(const std::string &path);
  void load_text(const std::string &text);

  const std::string &get(const std::string &key) const;
  std::int64_t get_int(const std::string &key) const;
  std::uint64_t get_uint(const std::string &key) const;
  double get_real(const std::string &key) const;
  bool get_bool(const std::string &key) const;
  // True when the value is one of the key's literals, e.g. "none".
  bool is_literal(const std::string &key, const std::string &lit) const;
  Provenance provenance(const std::string &key) const;

  // Every key, sorted, with provenance comments; loading it back reproduces
  // the same values.
  std::string snapshot() const;

  feat::FrontendConfig frontend() const;
  sim::CorpusOptions corpus() const;
  model::ModelConfig model() const;
  train::TrainConfig train() const;
  infer::InferConfig infer() const;
  score::ScoreOptions score() const;
  std::uint64_t seed() const { return get_uint("run.seed"); }
  int jobs() const { return static_cast<int>(get_int("run.jobs")); }

 private:
  struct Entry {
    std::string value;
    Provenance from = Provenance::kDefault;
  };
  std::map<std::string, Entry> values_;
};

// Text listing every schema key for --help.
std::string schema_help();

}  // namespace eda::config

#endif  // EDA_CONFIG_HPP_
