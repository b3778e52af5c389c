#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mlran/corpus.hpp"
#include "mlran/features.hpp"

namespace mlran {

// A feature injected with class-conditional occurrence rates: reports of
// `cls` carry it with probability hit_rate, reports of the other class
// with probability leak_rate.
struct PlantedFeature {
  std::string canonical;
  Label cls = Label::Ransomware;
  double hit_rate = 0.9;
  double leak_rate = 0.05;
};

struct DateRange {
  Date first;
  Date last;
};

struct SynthSpec {
  std::uint64_t seed = 42;
  std::size_t n_goodware = 0;
  std::size_t n_ransomware = 0;
  // Class-independent noise features per group, each present with
  // background_rate in every report.
  std::array<std::size_t, kFeatureGroupCount> noise_per_group{};
  double background_rate = 0.3;
  std::vector<PlantedFeature> planted;
  DateRange goodware_dates{Date{std::chrono::year{2012}, std::chrono::January, std::chrono::day{1}},
                           Date{std::chrono::year{2022}, std::chrono::December, std::chrono::day{31}}};
  DateRange ransomware_dates{Date{std::chrono::year{2012}, std::chrono::January, std::chrono::day{1}},
                             Date{std::chrono::year{2022}, std::chrono::December, std::chrono::day{31}}};
};

// Throws InvalidArgument when a rate is outside [0, 1], hit_rate <= leak_rate,
// a planted name has no group prefix, a date range is inverted, or two
// features share a name.
void validate(const SynthSpec& spec);

// A canonical name of the given group that round-trips through report
// placement and extraction, e.g. (Signature, "x") -> "SIGNATURE:x".
std::string synthetic_feature_name(FeatureGroup group, std::string_view tag);

// Spreads `total` noise features over the nine groups round-robin.
std::array<std::size_t, kFeatureGroupCount> spread_over_groups(std::size_t total);

// Convenience spec: `n_planted` features split evenly between the two
// classes and cycled over the groups, at the given rates.
SynthSpec make_synth_spec(std::uint64_t seed, std::size_t n_goodware, std::size_t n_ransomware,
                          std::size_t n_noise, std::size_t n_planted, double hit_rate = 0.9,
                          double leak_rate = 0.05, double background_rate = 0.3);

struct SynthReport {
  std::string sample_id;
  std::string document;  // JSON report text
};

struct SynthCorpus {
  std::vector<SynthReport> reports;
  std::vector<SampleMetadata> metadata;
};

// Goodware get ids 1..n_goodware and ransomware the following ids. Every
// draw for report i comes from the SplitMix64 stream derive_seed(seed, i),
// so the output is a pure function of the spec.
SynthCorpus generate_corpus(const SynthSpec& spec, unsigned threads = 1);

// Writes <dir>/reports/<id>.json and <dir>/metadata.csv.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace mlran
