#pragma once

#include <map>
#include <string>
#include <vector>

#include "pfvc/content/content.hpp"
#include "pfvc/dsp/dsp.hpp"
#include "pfvc/flow/flow.hpp"
#include "pfvc/flow/train_cfm.hpp"
#include "pfvc/pitch/pitch_vqvae.hpp"

namespace pfvc::pipeline {

// Flat "section.key = value" text config. Unknown keys are rejected; every
// key has a default, so an empty config is a full valid configuration.
class PipelineConfig {
 public:
  PipelineConfig();

  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);  // rejects unknown
  std::string get(const std::string& key) const;

  int get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // canonical serialization (sorted keys) and its hash
  std::string serialize() const;
  std::string full_hash() const;
  // hash over the keys that determine checkpoint compatibility (shapes,
  // vocabularies, frame rates) — sampling/training hypers excluded
  std::string model_hash() const;

  dsp::MelConfig mel_config() const;
  dsp::F0Config f0_config() const;
  content::ContentConfig content_config() const;
  pitch::PitchVqvaeConfig pitch_config() const;
  flow::FlowConfig flow_config() const;
  flow::CfmTrainConfig cfm_train_config() const;

  uint64_t seed() const { return static_cast<uint64_t>(get_int("run.seed")); }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> defaults_;
};

}  // namespace pfvc::pipeline
