#pragma once

#include <map>
#include <string>
#include <vector>

#include "data.hpp"
#include "train.hpp"

namespace pairvit {

// Flat key=value configuration: a file of lines, '#' comments, overridden
// by --set key=value on the command line. Unknown keys are rejected; the
// fully resolved table is dumped at the start of every run.
class CliConfig {
  public:
    CliConfig();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);

    bool is_set(const std::string& key) const;
    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    double get_real(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma-split

    std::string resolved_dump() const;

    ModelConfig model() const;
    TrainConfig train() const;
    SyntheticGenConfig synth() const;
    std::vector<Mode> modes() const;          // `modes` list or fallback to `mode`
    std::vector<std::uint64_t> seeds() const; // `seeds` list or fallback to `seed`

  private:
    std::map<std::string, std::string> values_;    // full schema with defaults
    std::map<std::string, bool> explicitly_set_;
};

}  // namespace pairvit
